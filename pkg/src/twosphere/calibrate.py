"""Camera-projector calibration from two sphere observations.

Given the silhouette conics of two spheres of known radius plus dense
camera-pixel to projector-pixel correspondences on each, a candidate camera
intrinsics K determines both spheres' centers, lifts every camera pixel to a
3D surface point, and a single shared projector matrix fitted over the union
of both spheres must reproject every projector pixel: the two spheres'
estimates have to agree. The search over the five intrinsics parameters
minimizes those reprojection residuals plus a penalty tying the vanishing
line / vanishing point pair of the conic pair to the image of the absolute
conic (``l ~ K^-T K^-1 v``).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    BehindCamera,
    DegenerateConfiguration,
    InfeasibleCandidate,
    NoFeasibleStart,
    NotASphereImage,
    PointAtInfinity,
    RayMissesSphere,
)
from .geometry import Conic, Intrinsics, constraint_pair, unit_vector
from .projector import ProjMatrix, decompose, dlt_estimate, project_points
from .sphere import lift_pixel_to_sphere, sphere_center_from_conic

__all__ = [
    "SphereObservation",
    "IscProblem",
    "CalibOptions",
    "CalibResult",
    "isc_objective",
    "calibrate",
    "evaluate_against_truth",
    "format_error_report",
]

BARRIER_VALUE = 1e12


@dataclass(frozen=True)
class SphereObservation:
    """One sphere's fitted silhouette conic and its pixel correspondences."""

    conic: Conic
    cam_px: np.ndarray
    proj_px: np.ndarray

    def __post_init__(self) -> None:
        cam = np.asarray(self.cam_px, dtype=float).reshape(-1, 2)
        proj = np.asarray(self.proj_px, dtype=float).reshape(-1, 2)
        if len(cam) != len(proj):
            raise ValueError("camera and projector pixel counts differ")
        if not (np.all(np.isfinite(cam)) and np.all(np.isfinite(proj))):
            raise ValueError("correspondences contain non-finite values")
        object.__setattr__(self, "cam_px", cam)
        object.__setattr__(self, "proj_px", proj)

    def __len__(self) -> int:
        return len(self.cam_px)


@dataclass(frozen=True)
class IscProblem:
    """Inputs of one calibration run.

    ``constraint`` is the unit-normalized (vanishing line, vanishing point)
    pair extracted from the two conics; ``mu`` weights the pole-polar penalty
    (0 disables it, the CLI's ``--mu 0`` path).
    """

    obs1: SphereObservation
    obs2: SphereObservation
    radii: tuple[float, float]
    cam_w: int
    cam_h: int
    constraint: tuple[np.ndarray, np.ndarray]
    mu: float

    def __post_init__(self) -> None:
        if len(self.obs1) < 10 or len(self.obs2) < 10:
            raise ValueError("each sphere needs at least 10 valid correspondences")
        if self.obs1.conic.allclose(self.obs2.conic, tol=1e-12):
            raise ValueError("the two sphere observations share one conic")
        if not (self.radii[0] > 0 and self.radii[1] > 0):
            raise ValueError("sphere radii must be positive")
        if self.mu < 0:
            raise ValueError("constraint weight must be non-negative")

    @classmethod
    def build(
        cls,
        obs1: SphereObservation,
        obs2: SphereObservation,
        radii,
        cam_w: int,
        cam_h: int,
        mu: float | None = None,
        bootstrap: Intrinsics | None = None,
    ) -> "IscProblem":
        """Assemble a problem, extracting the constraint pair from the conics.

        ``radii`` may be a single shared radius or a per-sphere pair. The
        eigenvector-selection bootstrap defaults to a focal guess of the
        image width with the principal point at the image center. A
        coincident conic pair raises CoincidentConics here, before any
        optimization starts.
        """
        r = (float(radii), float(radii)) if np.isscalar(radii) else (float(radii[0]), float(radii[1]))
        if bootstrap is None:
            bootstrap = Intrinsics(fx=cam_w, fy=cam_w, skew=0.0, u0=cam_w / 2.0, v0=cam_h / 2.0)
        line, point = constraint_pair(obs1.conic, obs2.conic, bootstrap)
        if mu is None:
            mu = 1e4 * (len(obs1) + len(obs2))
        return cls(
            obs1=obs1,
            obs2=obs2,
            radii=r,
            cam_w=int(cam_w),
            cam_h=int(cam_h),
            constraint=(line, point),
            mu=float(mu),
        )


def _env_threads() -> int:
    try:
        return max(1, int(os.environ.get("ISC_CALIB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class CalibOptions:
    """Knobs of the outer search; defaults match the documented contract."""

    max_iters: int = 200
    f_scan_lo: float = 0.3  # scan range as multiples of the image width
    f_scan_hi: float = 5.0
    f_scan_samples: int = 40
    n_starts: int = 3
    rel_obj_tol: float = 1e-10
    rel_step_tol: float = 1e-8
    fd_rel_step: float = 1e-5
    threads: int = field(default_factory=_env_threads)


@dataclass
class CalibResult:
    """Calibration output: camera intrinsics, projector matrix and its parts,
    plus diagnostics of the search."""

    camera: Intrinsics
    proj_matrix: ProjMatrix
    proj_intrinsics: Intrinsics
    rotation: np.ndarray
    translation: np.ndarray
    objective: float  # sum of unsquared residual norms + mu * constraint
    constraint_residual: float  # ||l_hat x (omega v)_hat|| at the solution
    per_sphere_rms: tuple[float, float]  # residual-norm sums / N1, N2
    iterations: int
    converged: bool
    history: list = field(default_factory=list)  # accepted least-squares values

    def to_json_dict(self) -> dict:
        return {
            "camera": self.camera.to_dict(),
            "proj_matrix": self.proj_matrix.to_json(),
            "projector": self.proj_intrinsics.to_dict(),
            "rotation": [[float(v) for v in row] for row in self.rotation],
            "translation": [float(v) for v in self.translation],
            "objective": float(self.objective),
            "constraint_residual": float(self.constraint_residual),
            "per_sphere_rms": [float(v) for v in self.per_sphere_rms],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CalibResult":
        return cls(
            camera=Intrinsics.from_dict(d["camera"]),
            proj_matrix=ProjMatrix.from_json(d["proj_matrix"]),
            proj_intrinsics=Intrinsics.from_dict(d["projector"]),
            rotation=np.asarray(d["rotation"], dtype=float),
            translation=np.asarray(d["translation"], dtype=float),
            objective=float(d["objective"]),
            constraint_residual=float(d["constraint_residual"]),
            per_sphere_rms=(float(d["per_sphere_rms"][0]), float(d["per_sphere_rms"][1])),
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
        )


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

def _constraint_cross(K: Intrinsics, problem: IscProblem) -> np.ndarray:
    line, point = problem.constraint
    mapped = K.iac() @ point
    return np.cross(line, unit_vector(mapped))


def _residual_vector(params: np.ndarray, problem: IscProblem) -> tuple[np.ndarray, ProjMatrix]:
    """Stacked least-squares residuals for candidate intrinsics parameters.

    Layout: 2 components per correspondence (both spheres, obs1 first), then
    sqrt(mu) times the 3-component pole-polar cross product.

    Raises InfeasibleCandidate whenever the candidate makes the geometry
    impossible (sphere behind camera, rays missing, degenerate projector fit).
    """
    fx, fy, skew, u0, v0 = (float(v) for v in params)
    if not (fx > 0 and fy > 0) or not np.all(np.isfinite(params)):
        raise InfeasibleCandidate("non-positive or non-finite focal candidate")
    K = Intrinsics(fx=fx, fy=fy, skew=skew, u0=u0, v0=v0)
    try:
        pose1 = sphere_center_from_conic(problem.obs1.conic, K, problem.radii[0], pair_gap_tol=None)
        pose2 = sphere_center_from_conic(problem.obs2.conic, K, problem.radii[1], pair_gap_tol=None)
        x1 = lift_pixel_to_sphere(problem.obs1.cam_px, K, pose1)
        x2 = lift_pixel_to_sphere(problem.obs2.cam_px, K, pose2)
        points = np.vstack([x1, x2])
        proj_px = np.vstack([problem.obs1.proj_px, problem.obs2.proj_px])
        M = dlt_estimate(proj_px, points)
        planar = proj_px - project_points(M, points)
    except (NotASphereImage, BehindCamera, RayMissesSphere, DegenerateConfiguration,
            PointAtInfinity) as exc:
        raise InfeasibleCandidate(str(exc)) from exc
    cross = _constraint_cross(K, problem)
    return np.concatenate([planar.ravel(), np.sqrt(problem.mu) * cross]), M


def isc_objective(K: Intrinsics, problem: IscProblem) -> tuple[float, ProjMatrix]:
    """Objective value at candidate intrinsics, with the fitted projector matrix.

    The value is the sum of unsquared reprojection norms over both spheres
    plus ``mu`` times the squared scale-free pole-polar residual. Geometric
    impossibilities raise InfeasibleCandidate; the outer search treats those
    as a large finite barrier rather than a crash.
    """
    params = np.array([K.fx, K.fy, K.skew, K.u0, K.v0])
    vec, M = _residual_vector(params, problem)
    n = len(problem.obs1) + len(problem.obs2)
    planar = vec[: 2 * n].reshape(-1, 2)
    cross = vec[2 * n :]
    value = float(np.linalg.norm(planar, axis=1).sum() + cross @ cross)
    return value, M


# ---------------------------------------------------------------------------
# Levenberg-Marquardt with numeric derivatives
# ---------------------------------------------------------------------------

def _try_residuals(params, problem):
    try:
        return _residual_vector(params, problem)[0]
    except InfeasibleCandidate:
        return None


def _jacobian(params, r0, problem, rel_step, threads=1):
    """Central-difference Jacobian; falls back to one-sided at feasibility edges."""
    n_par = len(params)
    probes = []
    for j in range(n_par):
        h = rel_step * max(abs(params[j]), 1.0)
        plus = params.copy()
        plus[j] += h
        minus = params.copy()
        minus[j] -= h
        probes.append((j, h, plus, minus))

    def column(probe):
        j, h, plus, minus = probe
        rp = _try_residuals(plus, problem)
        rm = _try_residuals(minus, problem)
        if rp is not None and rm is not None:
            return (rp - rm) / (2.0 * h)
        if rp is not None:
            return (rp - r0) / h
        if rm is not None:
            return (r0 - rm) / h
        return np.zeros_like(r0)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=min(threads, n_par)) as pool:
            cols = list(pool.map(column, probes))  # order preserved: deterministic
    else:
        cols = [column(p) for p in probes]
    return np.column_stack(cols)


def _levenberg_marquardt(p0, problem, opts: CalibOptions):
    """Damped least squares from p0. Returns (p, F, history, iterations, converged)."""
    p = np.asarray(p0, dtype=float).copy()
    r = _try_residuals(p, problem)
    if r is None:
        return None
    F = float(r @ r)
    history = [F]
    lam = 1e-3
    converged = False
    iterations = 0
    for _ in range(opts.max_iters):
        J = _jacobian(p, r, problem, opts.fd_rel_step, opts.threads)
        jtj = J.T @ J
        grad = J.T @ r
        accepted = False
        step = None
        for _ in range(40):
            damped = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-12))
            try:
                step = np.linalg.solve(damped, -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = p + step
            r_trial = _try_residuals(trial, problem)
            if r_trial is not None:
                F_trial = float(r_trial @ r_trial)
                if F_trial < F:
                    rel_dec = (F - F_trial) / max(F, 1e-300)
                    p, r, F = trial, r_trial, F_trial
                    history.append(F)
                    lam = max(lam / 3.0, 1e-14)
                    accepted = True
                    iterations += 1
                    break
            lam *= 10.0
        if not accepted:
            # no descent within a vanishing trust region: stationary
            small = step is not None and np.linalg.norm(step) < opts.rel_step_tol * max(
                np.linalg.norm(p), 1.0
            )
            converged = bool(small)
            break
        if rel_dec < opts.rel_obj_tol and np.linalg.norm(step) < opts.rel_step_tol * max(
            np.linalg.norm(p), 1.0
        ):
            converged = True
            break
    return p, F, history, iterations, converged


def _descend_from_scan(problem: IscProblem, opts: CalibOptions, extra_start=None):
    """Focal scan at a centered, skewless start plus damped descent.

    Runs from the best few well-separated scan minima (and an optional warm
    start, tried first); the lowest final value wins. Deterministic.
    """
    width = float(problem.cam_w)
    center = (problem.cam_w / 2.0, problem.cam_h / 2.0)

    scan = []
    for f in np.geomspace(opts.f_scan_lo * width, opts.f_scan_hi * width, opts.f_scan_samples):
        params = np.array([f, f, 0.0, center[0], center[1]])
        r = _try_residuals(params, problem)
        scan.append((float(r @ r) if r is not None else BARRIER_VALUE, f))

    feasible = sorted((v, f) for v, f in scan if v < BARRIER_VALUE)
    if not feasible and extra_start is None:
        raise NoFeasibleStart("no feasible focal length in the scan range")

    starts: list[np.ndarray] = []
    if extra_start is not None:
        starts.append(np.asarray(extra_start, dtype=float))
    focals: list[float] = []
    for _, f in feasible:
        if all(abs(np.log(f / s)) > 0.25 for s in focals):
            focals.append(f)
        if len(focals) >= opts.n_starts:
            break
    starts.extend(np.array([f, f, 0.0, center[0], center[1]]) for f in focals)

    best = None
    n_total = len(problem.obs1) + len(problem.obs2)
    for p0 in starts:
        fit = _levenberg_marquardt(p0, problem, opts)
        if fit is None:
            continue
        if best is None or fit[1] < best[1]:
            best = fit
        if best[1] < 1e-10 * n_total:
            break  # residuals at numerical zero; later starts cannot improve

    if best is None:
        raise NoFeasibleStart("descent could not start from any scan candidate")
    return best


def calibrate(problem: IscProblem, opts: CalibOptions | None = None) -> CalibResult:
    """Search the five intrinsics parameters for the consistency optimum.

    Initialization puts the principal point at the image center with zero
    skew and scans the focal length logarithmically over
    ``[f_scan_lo, f_scan_hi] * cam_w``. When the constraint penalty is
    active, the search runs twice: a penalty-free pass first localizes the
    intrinsics, the vanishing pair is re-selected under that much sharper
    focal estimate (the image-width bootstrap can rank the eigenvector
    candidates wrongly), and the penalized problem is then solved from the
    warm start. Fully deterministic for identical inputs and options.

    Raises NoFeasibleStart when every scan sample is infeasible.
    """
    opts = opts or CalibOptions()

    if problem.mu > 0:
        free = replace(problem, mu=0.0)
        pre_params, _, _, _, _ = _descend_from_scan(free, opts)
        pre_K = Intrinsics(
            fx=pre_params[0], fy=pre_params[1], skew=pre_params[2],
            u0=pre_params[3], v0=pre_params[4],
        )
        line, point = constraint_pair(problem.obs1.conic, problem.obs2.conic, pre_K)
        problem = replace(problem, constraint=(line, point))
        best = _descend_from_scan(problem, opts, extra_start=pre_params)
    else:
        best = _descend_from_scan(problem, opts)

    params, _, history, iterations, converged = best
    n_total = len(problem.obs1) + len(problem.obs2)
    K = Intrinsics(fx=params[0], fy=params[1], skew=params[2], u0=params[3], v0=params[4])
    vec, M = _residual_vector(params, problem)
    n1 = len(problem.obs1)
    norms = np.linalg.norm(vec[: 2 * n_total].reshape(-1, 2), axis=1)
    cross = vec[2 * n_total :]
    objective = float(norms.sum() + cross @ cross)
    constraint_residual = float(
        np.linalg.norm(cross) / np.sqrt(problem.mu) if problem.mu > 0
        else np.linalg.norm(_constraint_cross(K, problem))
    )
    proj_K, rotation, translation = decompose(M)
    return CalibResult(
        camera=K,
        proj_matrix=M,
        proj_intrinsics=proj_K,
        rotation=rotation,
        translation=translation,
        objective=objective,
        constraint_residual=constraint_residual,
        per_sphere_rms=(float(norms[:n1].sum() / n1), float(norms[n1:].sum() / (n_total - n1))),
        iterations=iterations,
        converged=converged,
        history=history,
    )


# ---------------------------------------------------------------------------
# evaluation against simulator ground truth
# ---------------------------------------------------------------------------

def _relative_errors_pct(est: Intrinsics, true: Intrinsics) -> dict:
    out = {}
    for name in ("fx", "fy", "skew", "u0", "v0"):
        e, t = getattr(est, name), getattr(true, name)
        out[name] = 100.0 * (e - t) / t if t != 0 else float("inf") if e != t else 0.0
    return out


def evaluate_against_truth(result: CalibResult, truth) -> dict:
    """Relative errors in percent against simulator ground truth.

    ``truth`` needs attributes ``camera``, ``proj_intrinsics``, ``rotation``
    and ``translation`` (a SceneTruth works). The report carries one entry
    per intrinsic parameter of both devices, the rotation angle error in
    degrees and the relative translation error.
    """
    r_err = result.rotation @ np.asarray(truth.rotation, dtype=float).T
    angle = float(np.degrees(np.arccos(np.clip((np.trace(r_err) - 1.0) / 2.0, -1.0, 1.0))))
    t_true = np.asarray(truth.translation, dtype=float)
    t_norm = np.linalg.norm(t_true)
    t_rel = float(np.linalg.norm(result.translation - t_true) / max(t_norm, 1e-300))
    return {
        "camera": _relative_errors_pct(result.camera, truth.camera),
        "projector": _relative_errors_pct(result.proj_intrinsics, truth.proj_intrinsics),
        "rotation_deg": angle,
        "translation_rel": t_rel,
    }


def format_error_report(report: dict) -> str:
    """Render the 12-row error table (10 intrinsics + rotation + translation)."""
    rows = []
    for device in ("camera", "projector"):
        for name in ("fx", "fy", "skew", "u0", "v0"):
            rows.append((f"{device}.{name}", f"{report[device][name]:+.3f} %"))
    rows.append(("rotation", f"{report['rotation_deg']:.6f} deg"))
    rows.append(("translation", f"{100.0 * report['translation_rel']:.4f} %"))
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {value:>14}" for name, value in rows)
