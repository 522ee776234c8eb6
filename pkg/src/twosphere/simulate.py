"""Synthetic camera-projector scenes with exact ground truth.

The simulator renders everything the physical rig would produce (contour
points, phase-shifted fringe stacks seen by the camera) together with the
hidden exact correspondences, so every estimation stage of the toolkit can
be checked against an independent analytic oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imageio
from .errors import BehindCamera, SphereOutOfView, SpheresOverlapInImage
from .geometry import Conic, Intrinsics, sample_conic_points
from .phase import FringeConfig, pattern_value
from .projector import Correspondences, ProjMatrix, compose, project_points
from .sphere import SpherePose, lift_pixel_to_sphere, sample_interior_pixels

__all__ = [
    "NoiseSpec",
    "SceneTruth",
    "SceneBundle",
    "preset",
    "PRESET_NAMES",
    "project_sphere_to_conic",
    "render_scene",
    "rotation_about_y",
]

CONTOUR_SAMPLES = 256
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class NoiseSpec:
    contour_sigma: float = 0.0  # px, along the local contour normal
    intensity_sigma: float = 0.0  # on [0, 1] intensities
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "contour_sigma_px": self.contour_sigma,
            "intensity_sigma": self.intensity_sigma,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        return cls(
            contour_sigma=float(d.get("contour_sigma_px", 0.0)),
            intensity_sigma=float(d.get("intensity_sigma", 0.0)),
            seed=int(d.get("seed", 0)),
        )


def rotation_about_y(angle_deg: float) -> np.ndarray:
    a = np.deg2rad(angle_deg)
    return np.array(
        [[np.cos(a), 0.0, np.sin(a)], [0.0, 1.0, 0.0], [-np.sin(a), 0.0, np.cos(a)]]
    )


@dataclass(frozen=True)
class SceneTruth:
    """Ground truth of one synthetic scene (camera frame is the world frame)."""

    camera: Intrinsics
    cam_w: int
    cam_h: int
    proj_intrinsics: Intrinsics
    proj_w: int
    proj_h: int
    rotation: np.ndarray  # projector orientation relative to the camera
    translation: np.ndarray
    spheres: tuple[SpherePose, ...]
    n_steps: int = 4
    freqs: tuple[int, ...] = (1, 8, 64)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))
        object.__setattr__(self, "spheres", tuple(self.spheres))

    @property
    def proj_matrix(self) -> ProjMatrix:
        return compose(self.proj_intrinsics, self.rotation, self.translation)

    @property
    def fringe_vertical(self) -> FringeConfig:
        return FringeConfig(self.n_steps, self.freqs, self.proj_w, self.proj_h, "vertical")

    @property
    def fringe_horizontal(self) -> FringeConfig:
        return FringeConfig(self.n_steps, self.freqs, self.proj_w, self.proj_h, "horizontal")

    def with_noise(self, noise: NoiseSpec) -> "SceneTruth":
        return SceneTruth(
            camera=self.camera,
            cam_w=self.cam_w,
            cam_h=self.cam_h,
            proj_intrinsics=self.proj_intrinsics,
            proj_w=self.proj_w,
            proj_h=self.proj_h,
            rotation=self.rotation,
            translation=self.translation,
            spheres=self.spheres,
            n_steps=self.n_steps,
            freqs=self.freqs,
            noise=noise,
        )

    def to_config(self) -> dict:
        cam = self.camera
        prj = self.proj_intrinsics
        return {
            "camera": {
                "width_px": self.cam_w,
                "height_px": self.cam_h,
                "fx_px": cam.fx,
                "fy_px": cam.fy,
                "skew_px": cam.skew,
                "u0_px": cam.u0,
                "v0_px": cam.v0,
            },
            "projector": {
                "width_px": self.proj_w,
                "height_px": self.proj_h,
                "fx_px": prj.fx,
                "fy_px": prj.fy,
                "skew_px": prj.skew,
                "u0_px": prj.u0,
                "v0_px": prj.v0,
            },
            "projector_pose": {
                "rotation": [[float(v) for v in row] for row in self.rotation],
                "translation_lu": [float(v) for v in self.translation],
            },
            "spheres": [
                {"center_lu": [float(v) for v in s.center], "radius_lu": float(s.radius)}
                for s in self.spheres
            ],
            "fringe": {"n_steps": self.n_steps, "frequencies_cpf": list(self.freqs)},
            "noise": self.noise.to_dict(),
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "SceneTruth":
        """Build from a validated config dict (see ``validate_config``)."""
        cam = cfg["camera"]
        prj = cfg["projector"]
        pose = cfg["projector_pose"]
        if "rotation" in pose:
            rotation = np.asarray(pose["rotation"], dtype=float)
            translation = np.asarray(pose["translation_lu"], dtype=float)
        else:
            rotation = rotation_about_y(float(pose["yaw_deg"]))
            center = np.array([float(pose["baseline_lu"]), 0.0, 0.0])
            translation = -rotation @ center
        fringe = cfg.get("fringe", {})
        return cls(
            camera=Intrinsics(
                fx=cam["fx_px"], fy=cam["fy_px"], skew=cam["skew_px"],
                u0=cam["u0_px"], v0=cam["v0_px"],
            ),
            cam_w=int(cam["width_px"]),
            cam_h=int(cam["height_px"]),
            proj_intrinsics=Intrinsics(
                fx=prj["fx_px"], fy=prj["fy_px"], skew=prj["skew_px"],
                u0=prj["u0_px"], v0=prj["v0_px"],
            ),
            proj_w=int(prj["width_px"]),
            proj_h=int(prj["height_px"]),
            rotation=rotation,
            translation=translation,
            spheres=tuple(
                SpherePose(center=np.asarray(s["center_lu"], dtype=float), radius=float(s["radius_lu"]))
                for s in cfg["spheres"]
            ),
            n_steps=int(fringe.get("n_steps", 4)),
            freqs=tuple(int(f) for f in fringe.get("frequencies_cpf", (1, 8, 64))),
            noise=NoiseSpec.from_dict(cfg.get("noise", {})),
        )


# ---------------------------------------------------------------------------
# presets (two camera-projector rigs; shared projector and sphere layout)
# ---------------------------------------------------------------------------

_PROJECTOR = dict(fx=1202.7, fy=1199.0, skew=-8.2, u0=390.7, v0=222.8)
_SPHERES = (
    SpherePose(center=np.array([-0.55, -0.25, 4.0]), radius=0.40),
    SpherePose(center=np.array([0.85, 0.35, 6.0]), radius=0.55),
)
# 15 deg yaw, unit baseline along camera +x (0.2x the mean sphere depth)
_ROTATION = rotation_about_y(15.0)
_TRANSLATION = -_ROTATION @ np.array([1.0, 0.0, 0.0])

PRESET_NAMES = ("cppA", "cppB")


def preset(name: str) -> SceneTruth:
    """Shipped scene presets for the two reference rigs, noise off."""
    if name == "cppA":
        camera = Intrinsics(fx=3277.5, fy=3277.8, skew=-18.6, u0=1699.4, v0=1330.1)
        cam_w, cam_h = 3384, 2704
    elif name == "cppB":
        camera = Intrinsics(fx=1791.1, fy=1789.2, skew=-1.4, u0=944.9, v0=561.4)
        cam_w, cam_h = 1920, 1200
    else:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    return SceneTruth(
        camera=camera,
        cam_w=cam_w,
        cam_h=cam_h,
        proj_intrinsics=Intrinsics(**_PROJECTOR),
        proj_w=854,
        proj_h=480,
        rotation=_ROTATION,
        translation=_TRANSLATION,
        spheres=_SPHERES,
    )


# ---------------------------------------------------------------------------
# forward projection
# ---------------------------------------------------------------------------

def project_sphere_to_conic(pose: SpherePose, K: Intrinsics) -> Conic:
    """Exact silhouette conic of a sphere: ``K^-T (s s^T - (|s|^2 - r^2) I) K^-1``.

    Sign-normalized so the result is a real ellipse with negative interior
    values. Raises BehindCamera unless depth exceeds the radius.
    """
    s = pose.center
    if s[2] <= pose.radius:
        raise BehindCamera("sphere does not clear the image plane")
    cone = np.outer(s, s) - (s @ s - pose.radius**2) * np.eye(3)
    kinv = K.inverse()
    return Conic.from_matrix(kinv.T @ cone @ kinv).normalized()


# ---------------------------------------------------------------------------
# scene rendering
# ---------------------------------------------------------------------------

@dataclass
class SceneBundle:
    """Everything one simulated capture produces.

    ``stacks[(orientation, freq)]`` holds the n_steps camera images for that
    pattern set. ``oracle`` carries the hidden exact correspondences; consumer
    code must treat it as ground truth for verification only.
    """

    truth: SceneTruth
    contours: list  # per sphere: (m, 2) contour points, noisy if configured
    analytic_conics: list  # per sphere: exact silhouette Conic
    stacks: dict
    oracle: list | None  # per sphere: Correspondences, or None when stripped

    def stack_list(self, cfg: FringeConfig) -> list:
        """Per-frequency stacks for one orientation, aligned with cfg.freqs."""
        return [self.stacks[(cfg.orientation, f)] for f in cfg.freqs]

    # -- persistence ---------------------------------------------------

    def save(self, out_dir, image_format: str = "f32") -> None:
        """Write the bundle directory (manifest, contours, fringes, oracle)."""
        if image_format not in ("f32", "pgm16"):
            raise ValueError("image_format must be 'f32' or 'pgm16'")
        out = Path(out_dir)
        (out / "contours").mkdir(parents=True, exist_ok=True)
        (out / "fringes").mkdir(exist_ok=True)
        manifest = {
            "format_version": 1,
            "image_format": image_format,
            "truth": self.truth.to_config(),
        }
        with open(out / MANIFEST_NAME, "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
        for i, pts in enumerate(self.contours):
            np.savetxt(out / "contours" / f"sphere{i}.csv", pts, fmt="%.17g", delimiter=",")
        for (orientation, freq), stack in sorted(self.stacks.items()):
            for k, img in enumerate(stack):
                name = f"{orientation[0]}_f{freq:03d}_s{k}"
                if image_format == "f32":
                    imageio.write_float32(out / "fringes" / f"{name}.f32", img)
                else:
                    imageio.write_pgm(out / "fringes" / f"{name}.pgm", img, bits=16)
        if self.oracle is not None:
            (out / "oracle").mkdir(exist_ok=True)
            for i, corr in enumerate(self.oracle):
                table = np.column_stack([corr.cam_px, corr.proj_px, corr.points])
                np.savetxt(
                    out / "oracle" / f"sphere{i}.csv",
                    table,
                    fmt="%.17g",
                    delimiter=",",
                    header="x_c,y_c,x_p,y_p,X,Y,Z",
                )

    @classmethod
    def load(cls, bundle_dir) -> "SceneBundle":
        root = Path(bundle_dir)
        manifest_path = root / MANIFEST_NAME
        if not manifest_path.exists():
            raise FileNotFoundError(f"no {MANIFEST_NAME} in {root}")
        manifest = json.loads(manifest_path.read_text())
        truth = SceneTruth.from_config(manifest["truth"])
        image_format = manifest.get("image_format", "f32")

        contours = []
        for path in sorted((root / "contours").glob("sphere*.csv")):
            contours.append(np.loadtxt(path, delimiter=",").reshape(-1, 2))

        stacks = {}
        for orientation in ("vertical", "horizontal"):
            for freq in truth.freqs:
                stack = []
                for k in range(truth.n_steps):
                    name = f"{orientation[0]}_f{freq:03d}_s{k}"
                    if image_format == "f32":
                        img = imageio.read_float32(root / "fringes" / f"{name}.f32")
                    else:
                        img = imageio.read_pgm(root / "fringes" / f"{name}.pgm").astype(
                            np.float32
                        ) / 65535.0
                    stack.append(img)
                stacks[(orientation, freq)] = stack

        oracle = None
        oracle_dir = root / "oracle"
        if oracle_dir.is_dir():
            oracle = []
            for path in sorted(oracle_dir.glob("sphere*.csv")):
                table = np.loadtxt(path, delimiter=",").reshape(-1, 7)
                oracle.append(
                    Correspondences(cam_px=table[:, :2], proj_px=table[:, 2:4], points=table[:, 4:7])
                )

        analytic = [project_sphere_to_conic(s, truth.camera) for s in truth.spheres]
        return cls(truth=truth, contours=contours, analytic_conics=analytic,
                   stacks=stacks, oracle=oracle)


def _check_in_frame(points: np.ndarray, w: int, h: int, what: str) -> None:
    if (
        points[:, 0].min() < 0.5
        or points[:, 1].min() < 0.5
        or points[:, 0].max() > w - 1.5
        or points[:, 1].max() > h - 1.5
    ):
        raise SphereOutOfView(f"{what} silhouette leaves the frame")


def render_scene(truth: SceneTruth) -> SceneBundle:
    """Render fringe stacks, contour point sets and hidden correspondences.

    Deterministic for a fixed seed: every noise stream derives from
    ``SeedSequence([seed, purpose, index])`` so render order cannot matter.

    Raises SphereOutOfView / SpheresOverlapInImage on infeasible geometry.
    """
    if len(truth.spheres) != 2:
        raise ValueError("a scene holds exactly two spheres")
    cam = truth.camera
    proj_m = truth.proj_matrix
    proj_center = proj_m.center()
    seed = truth.noise.seed

    conics = []
    boundaries = []
    for i, pose in enumerate(truth.spheres):
        conic = project_sphere_to_conic(pose, cam)
        boundary = sample_conic_points(conic, CONTOUR_SAMPLES)
        _check_in_frame(boundary, truth.cam_w, truth.cam_h, f"sphere {i} camera")
        # projector-side visibility: silhouette as seen from the projector
        center_p = truth.rotation @ pose.center + truth.translation
        try:
            pose_p = SpherePose(center=center_p, radius=pose.radius)
        except BehindCamera as exc:
            raise SphereOutOfView(f"sphere {i} is behind the projector") from exc
        boundary_p = sample_conic_points(
            project_sphere_to_conic(pose_p, truth.proj_intrinsics), CONTOUR_SAMPLES
        )
        _check_in_frame(boundary_p, truth.proj_w, truth.proj_h, f"sphere {i} projector")
        conics.append(conic)
        boundaries.append(boundary)

    for i, j in ((0, 1), (1, 0)):
        if np.any(conics[j].normalized().evaluate(boundaries[i]) < 0):
            raise SpheresOverlapInImage("sphere silhouettes overlap in the camera image")

    # contour points, perturbed along the local normal
    contours = []
    for i, (conic, boundary) in enumerate(zip(conics, boundaries)):
        pts = boundary.copy()
        if truth.noise.contour_sigma > 0:
            rng = np.random.default_rng(np.random.SeedSequence([seed, 0, i]))
            grad = 2.0 * (np.column_stack([pts, np.ones(len(pts))]) @ conic.normalized().matrix)[:, :2]
            normals = grad / np.linalg.norm(grad, axis=1, keepdims=True)
            pts = pts + normals * rng.normal(0.0, truth.noise.contour_sigma, (len(pts), 1))
        contours.append(pts)

    # hidden exact correspondences on interior pixels facing the projector
    oracle = []
    lit_pixels = []  # per sphere: (pixels, coded x_p, coded y_p) for rendering
    for i, (pose, conic) in enumerate(zip(truth.spheres, conics)):
        pix = sample_interior_pixels(conic)
        points = lift_pixel_to_sphere(pix, cam, pose)
        normals = (points - pose.center) / pose.radius
        lit = np.einsum("ni,ni->n", normals, proj_center[None, :] - points) > 0
        pix, points = pix[lit], points[lit]
        proj_px = project_points(proj_m, points)
        oracle.append(Correspondences(cam_px=pix, proj_px=proj_px, points=points))

        # full-disc lit pixels drive the fringe intensities
        bx_lo = np.floor(boundaries[i].min(axis=0)).astype(int)
        bx_hi = np.ceil(boundaries[i].max(axis=0)).astype(int)
        xs = np.arange(bx_lo[0], bx_hi[0] + 1)
        ys = np.arange(bx_lo[1], bx_hi[1] + 1)
        grid = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2).astype(float)
        inside = conic.normalized().evaluate(grid) < 0
        grid = grid[inside]
        pts3 = lift_pixel_to_sphere(grid, cam, pose)
        normals = (pts3 - pose.center) / pose.radius
        lit = np.einsum("ni,ni->n", normals, proj_center[None, :] - pts3) > 0
        grid, pts3 = grid[lit], pts3[lit]
        coded = project_points(proj_m, pts3)
        lit_pixels.append((grid.astype(int), coded))

    # fringe stacks: camera-frame images, intensities evaluated at the exact
    # projector coordinate of each lit pixel
    stacks = {}
    image_index = 0
    for cfg in (truth.fringe_vertical, truth.fringe_horizontal):
        axis = 0 if cfg.orientation == "vertical" else 1
        for freq in cfg.freqs:
            stack = []
            for k in range(cfg.n_steps):
                img = np.zeros((truth.cam_h, truth.cam_w), dtype=np.float32)
                for grid, coded in lit_pixels:
                    img[grid[:, 1], grid[:, 0]] = pattern_value(
                        freq, k, cfg.n_steps, coded[:, axis], cfg.coded_span
                    )
                if truth.noise.intensity_sigma > 0:
                    rng = np.random.default_rng(np.random.SeedSequence([seed, 1, image_index]))
                    noise = rng.standard_normal(img.shape, dtype=np.float32)
                    noise *= truth.noise.intensity_sigma
                    img += noise
                stack.append(img)
                image_index += 1
            stacks[(cfg.orientation, freq)] = stack

    return SceneBundle(
        truth=truth,
        contours=contours,
        analytic_conics=conics,
        stacks=stacks,
        oracle=oracle,
    )
