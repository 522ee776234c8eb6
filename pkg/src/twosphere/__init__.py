"""Camera-projector pair calibration from images of two spheres.

Recovers camera intrinsics and the projector matrix (hence projector
intrinsics, rotation and translation) from the silhouette conics and
structured-light correspondences of exactly two spheres, by enforcing that
one shared projector matrix explains both spheres under the pole-polar
constraint linking their conic pair to the image of the absolute conic.
A built-in synthetic simulator supplies exact ground truth for verification.
"""

from .calibrate import (
    CalibOptions,
    CalibResult,
    IscProblem,
    SphereObservation,
    calibrate,
    evaluate_against_truth,
    format_error_report,
    isc_objective,
)
from .geometry import (
    Conic,
    Intrinsics,
    adjugate,
    constraint_pair,
    fit_conic,
    pole_polar_residual,
)
from .phase import (
    FringeConfig,
    PhaseMap,
    decode_wrapped,
    phase_to_proj_coord,
    render_patterns,
    unwrap_ladder,
    unwrap_temporal,
)
from .pipeline import AssemblyOptions, assemble_observations, build_problem, run_calibration
from .projector import (
    Correspondences,
    ProjMatrix,
    compose,
    decompose,
    dlt_estimate,
    project_points,
    reprojection_residuals,
)
from .reconstruct import reconstruct_cloud, triangulate, write_ply
from .simulate import (
    NoiseSpec,
    SceneBundle,
    SceneTruth,
    preset,
    project_sphere_to_conic,
    render_scene,
)
from .sphere import (
    SpherePose,
    lift_pixel_to_sphere,
    sample_interior_pixels,
    sphere_center_from_conic,
)

__version__ = "0.1.0"

__all__ = [
    "AssemblyOptions",
    "CalibOptions",
    "CalibResult",
    "Conic",
    "Correspondences",
    "FringeConfig",
    "Intrinsics",
    "IscProblem",
    "NoiseSpec",
    "PhaseMap",
    "ProjMatrix",
    "SceneBundle",
    "SceneTruth",
    "SphereObservation",
    "SpherePose",
    "adjugate",
    "assemble_observations",
    "build_problem",
    "calibrate",
    "compose",
    "constraint_pair",
    "decode_wrapped",
    "decompose",
    "dlt_estimate",
    "evaluate_against_truth",
    "fit_conic",
    "format_error_report",
    "isc_objective",
    "lift_pixel_to_sphere",
    "phase_to_proj_coord",
    "pole_polar_residual",
    "preset",
    "project_points",
    "project_sphere_to_conic",
    "reconstruct_cloud",
    "render_patterns",
    "render_scene",
    "reprojection_residuals",
    "run_calibration",
    "sample_interior_pixels",
    "sphere_center_from_conic",
    "triangulate",
    "unwrap_ladder",
    "unwrap_temporal",
    "write_ply",
]
