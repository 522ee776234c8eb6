"""Projector matrix estimation by DLT and its decomposition into K, R, T.

The projector is modeled as a reverse camera: ``w [x_p, y_p, 1]^T = M X_hom``
with ``M = K_P [R | T]`` a 3x4 matrix defined up to scale. The stored gauge
fixes the scale so the first three entries of the third row are a unit vector
and the left 3x3 block has positive determinant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateConfiguration,
    PointAtInfinity,
    SingularBlock,
    TooFewPoints,
)
from .geometry import Intrinsics

__all__ = [
    "ProjMatrix",
    "Correspondences",
    "dlt_estimate",
    "reprojection_residuals",
    "decompose",
    "compose",
    "project_points",
]


@dataclass(frozen=True)
class ProjMatrix:
    """3x4 projection matrix in the fixed gauge (unit third-row rotation part,
    positive left-block determinant)."""

    m: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.m, dtype=float)
        if m.shape != (3, 4):
            raise ValueError("projection matrix must be 3x4")
        row_scale = np.linalg.norm(m[2, :3])
        if row_scale < 1e-14:
            raise SingularBlock("third row of the left block is numerically zero")
        m = m / row_scale
        det = np.linalg.det(m[:, :3])
        if abs(det) < 1e-14:
            raise SingularBlock("left 3x3 block is singular")
        if det < 0:
            m = -m
        object.__setattr__(self, "m", m)

    @property
    def left(self) -> np.ndarray:
        return self.m[:, :3]

    def center(self) -> np.ndarray:
        """Optical center in the world (camera) frame: M [C, 1]^T = 0."""
        return -np.linalg.solve(self.left, self.m[:, 3])

    def to_json(self) -> list:
        return [float(v) for v in self.m.ravel()]

    @classmethod
    def from_json(cls, flat) -> "ProjMatrix":
        return cls(np.asarray(flat, dtype=float).reshape(3, 4))

    def allclose(self, other: "ProjMatrix", tol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(self.m - other.m)) < tol)


@dataclass(frozen=True)
class Correspondences:
    """Camera pixel / projector pixel / 3D point triples, as parallel arrays."""

    cam_px: np.ndarray
    proj_px: np.ndarray
    points: np.ndarray

    def __post_init__(self) -> None:
        cam = np.asarray(self.cam_px, dtype=float).reshape(-1, 2)
        proj = np.asarray(self.proj_px, dtype=float).reshape(-1, 2)
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not (len(cam) == len(proj) == len(pts)):
            raise ValueError("correspondence arrays differ in length")
        for name, arr in (("cam_px", cam), ("proj_px", proj), ("points", pts)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        if np.any(pts[:, 2] <= 0):
            raise ValueError("3D points must have positive depth")
        object.__setattr__(self, "cam_px", cam)
        object.__setattr__(self, "proj_px", proj)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


def project_points(M: ProjMatrix, points: np.ndarray) -> np.ndarray:
    """Dehomogenized projections of (n, 3) points through M.

    Raises PointAtInfinity when a projective depth vanishes relative to the
    projected vector's magnitude.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    hom = (M.m @ np.column_stack([pts, np.ones(len(pts))]).T).T
    scale = np.linalg.norm(hom, axis=1)
    if np.any(np.abs(hom[:, 2]) <= 1e-12 * scale):
        raise PointAtInfinity("a point projects to infinity under this matrix")
    return hom[:, :2] / hom[:, 2:3]


def dlt_estimate(proj_px: np.ndarray, points: np.ndarray) -> ProjMatrix:
    """Direct linear transform from n >= 6 pixel / 3D-point pairs.

    Both sides are similarity-normalized (centroids to the origin, RMS
    radius sqrt(2) in 2D and sqrt(3) in 3D) before assembling the 2n x 12
    design matrix; the null singular vector gives M.

    Raises
    ------
    TooFewPoints
        n < 6.
    DegenerateConfiguration
        The two smallest singular values are indistinguishable (ratio above
        0.99) or the second-smallest vanishes: the null space is ambiguous,
        as for coplanar points.
    """
    xp = np.asarray(proj_px, dtype=float).reshape(-1, 2)
    X = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(xp) != len(X):
        raise ValueError("pixel and point counts differ")
    n = len(X)
    if n < 6:
        raise TooFewPoints(f"DLT needs at least 6 correspondences, got {n}")

    c2 = xp.mean(axis=0)
    s2 = np.sqrt(2.0) / max(np.mean(np.linalg.norm(xp - c2, axis=1)), 1e-300)
    T2 = np.array([[s2, 0, -s2 * c2[0]], [0, s2, -s2 * c2[1]], [0, 0, 1.0]])
    c3 = X.mean(axis=0)
    s3 = np.sqrt(3.0) / max(np.mean(np.linalg.norm(X - c3, axis=1)), 1e-300)
    T3 = np.diag([s3, s3, s3, 1.0])
    T3[:3, 3] = -s3 * c3

    xpn = (T2 @ np.column_stack([xp, np.ones(n)]).T).T
    Xn = (T3 @ np.column_stack([X, np.ones(n)]).T).T

    A = np.zeros((2 * n, 12))
    A[0::2, 4:8] = -xpn[:, 2:3] * Xn
    A[0::2, 8:12] = xpn[:, 1:2] * Xn
    A[1::2, 0:4] = xpn[:, 2:3] * Xn
    A[1::2, 8:12] = -xpn[:, 0:1] * Xn

    _, sv, vt = np.linalg.svd(A, full_matrices=False)
    if sv[-2] <= 1e-10 * sv[0] or sv[-1] / sv[-2] > 0.99:
        raise DegenerateConfiguration("DLT null space is ambiguous (degenerate points)")

    Mn = vt[-1].reshape(3, 4)
    M = np.linalg.inv(T2) @ Mn @ T3
    return ProjMatrix(M)


def reprojection_residuals(M: ProjMatrix, proj_px: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Per-point Euclidean pixel distance ``|x_p - dehom(M X)|``, input order kept."""
    xp = np.asarray(proj_px, dtype=float).reshape(-1, 2)
    projected = project_points(M, points)
    return np.linalg.norm(xp - projected, axis=1)


def decompose(M: ProjMatrix) -> tuple[Intrinsics, np.ndarray, np.ndarray]:
    """Split M into intrinsics, rotation (det +1) and translation.

    RQ-decomposes the left block; reflections are folded into R so the
    intrinsics diagonal is positive (skew may take either sign), and the
    gauge of ProjMatrix guarantees det(R) = +1. ``K [R | T]`` reproduces M
    up to scale.
    """
    K, R = scipy.linalg.rq(M.left)
    flips = np.diag(np.sign(np.diag(K)))
    K = K @ flips
    R = flips @ R
    k33 = K[2, 2]
    K = K / k33
    T = np.linalg.solve(K, M.m[:, 3] / k33)
    intr = Intrinsics(fx=K[0, 0], fy=K[1, 1], skew=K[0, 1], u0=K[0, 2], v0=K[1, 2])
    return intr, R, T


def compose(K: Intrinsics, R: np.ndarray, T: np.ndarray) -> ProjMatrix:
    """Build ``K [R | T]`` in the standard gauge."""
    R = np.asarray(R, dtype=float).reshape(3, 3)
    T = np.asarray(T, dtype=float).reshape(3)
    return ProjMatrix(K.as_matrix() @ np.column_stack([R, T]))
