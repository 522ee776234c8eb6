"""Command-line interface: simulate, calibrate, reconstruct, evaluate.

Exit codes are a stable scripting contract:
0 success, 2 input/config error, 3 scene infeasibility, 4 calibration
failure, 5 degenerate geometry. Logs go to stderr, machine artifacts to
files; stdout carries only the final report.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .calibrate import (
    CalibOptions,
    CalibResult,
    evaluate_against_truth,
    format_error_report,
)
from .errors import (
    CoincidentConics,
    DegenerateConic,
    NoFeasibleStart,
    NonRealSelection,
    SphereOutOfView,
    SpheresOverlapInImage,
    TwosphereError,
)
from .pipeline import AssemblyOptions, run_calibration
from .reconstruct import reconstruct_cloud, write_ply
from .simulate import PRESET_NAMES, NoiseSpec, SceneBundle, SceneTruth, preset, render_scene

log = logging.getLogger("twosphere")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SCENE = 3
EXIT_CALIB = 4
EXIT_DEGENERATE = 5


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------

_DEVICE_FIELDS = ("width_px", "height_px", "fx_px", "fy_px", "skew_px", "u0_px", "v0_px")


def validate_config(cfg: dict) -> list[str]:
    """Field-level diagnostics for a scene config; empty list when valid."""
    problems: list[str] = []
    if not isinstance(cfg, dict):
        return ["config: top level must be a JSON object"]

    for section in ("camera", "projector"):
        dev = cfg.get(section)
        if not isinstance(dev, dict):
            problems.append(f"{section}: missing section")
            continue
        for fld in _DEVICE_FIELDS:
            if not isinstance(dev.get(fld), (int, float)):
                problems.append(f"{section}.{fld}: missing or non-numeric")
        for fld in ("width_px", "height_px", "fx_px", "fy_px"):
            if isinstance(dev.get(fld), (int, float)) and dev[fld] <= 0:
                problems.append(f"{section}.{fld}: must be positive")

    pose = cfg.get("projector_pose")
    if not isinstance(pose, dict):
        problems.append("projector_pose: missing section")
    elif "rotation" in pose:
        rot = np.asarray(pose.get("rotation", []), dtype=float)
        if rot.shape != (3, 3):
            problems.append("projector_pose.rotation: must be a 3x3 matrix")
        if np.asarray(pose.get("translation_lu", []), dtype=float).shape != (3,):
            problems.append("projector_pose.translation_lu: must be a 3-vector")
    elif "yaw_deg" in pose:
        if not isinstance(pose.get("baseline_lu"), (int, float)) or pose["baseline_lu"] <= 0:
            problems.append("projector_pose.baseline_lu: must be positive")
    else:
        problems.append("projector_pose: needs rotation/translation_lu or yaw_deg/baseline_lu")

    spheres = cfg.get("spheres")
    if not isinstance(spheres, list) or len(spheres) != 2:
        problems.append("spheres: exactly two spheres required")
    else:
        for i, s in enumerate(spheres):
            if not isinstance(s, dict):
                problems.append(f"spheres[{i}]: must be an object")
                continue
            center = np.asarray(s.get("center_lu", []), dtype=float)
            if center.shape != (3,):
                problems.append(f"spheres[{i}].center_lu: must be a 3-vector")
            if not isinstance(s.get("radius_lu"), (int, float)) or s["radius_lu"] <= 0:
                problems.append(f"spheres[{i}].radius_lu: must be positive")

    fringe = cfg.get("fringe", {})
    if fringe:
        if not isinstance(fringe.get("n_steps", 4), int) or fringe.get("n_steps", 4) < 3:
            problems.append("fringe.n_steps: integer >= 3 required")
        freqs = fringe.get("frequencies_cpf", [1, 8, 64])
        if not isinstance(freqs, list) or any(not isinstance(f, int) or f <= 0 for f in freqs):
            problems.append("fringe.frequencies_cpf: positive integers required")
        elif any(b <= a or b / a > 8 for a, b in zip(freqs, freqs[1:])):
            problems.append("fringe.frequencies_cpf: strictly increasing, ratio <= 8")
    return problems


def _load_truth(args) -> SceneTruth:
    """Resolve preset/config plus noise overrides into a SceneTruth, or exit 2."""
    if args.config is not None:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except OSError as exc:
            log.error("cannot read config: %s", exc)
            raise SystemExit(EXIT_INPUT)
        except json.JSONDecodeError as exc:
            log.error("config line %d column %d: %s", exc.lineno, exc.colno, exc.msg)
            raise SystemExit(EXIT_INPUT)
        problems = validate_config(cfg)
        if problems:
            for p in problems:
                log.error("config %s", p)
            raise SystemExit(EXIT_INPUT)
        try:
            truth = SceneTruth.from_config(cfg)
        except TwosphereError as exc:
            log.error("infeasible scene: %s", exc)
            raise SystemExit(EXIT_SCENE)
    else:
        truth = preset(args.preset)
    noise = truth.noise
    return truth.with_noise(
        NoiseSpec(
            contour_sigma=noise.contour_sigma if args.noise_contour is None else args.noise_contour,
            intensity_sigma=(
                noise.intensity_sigma if args.noise_intensity is None else args.noise_intensity
            ),
            seed=noise.seed if args.seed is None else args.seed,
        )
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    truth = _load_truth(args)
    try:
        bundle = render_scene(truth)
    except (SphereOutOfView, SpheresOverlapInImage, TwosphereError) as exc:
        log.error("scene infeasible: %s", exc)
        return EXIT_SCENE
    bundle.save(args.out, image_format=args.image_format)
    log.info("bundle written to %s (seed %d)", args.out, truth.noise.seed)
    print(json.dumps({"bundle": str(args.out), "seed": truth.noise.seed}))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        bundle = SceneBundle.load(args.bundle)
    except (OSError, FileNotFoundError, json.JSONDecodeError) as exc:
        log.error("cannot load bundle: %s", exc)
        return EXIT_INPUT
    if len(bundle.contours) != 2:
        log.error("two sphere observations required, found %d", len(bundle.contours))
        return EXIT_DEGENERATE

    assembly = AssemblyOptions(stride=args.stride)
    opts = CalibOptions(max_iters=args.max_iters)
    try:
        result, problem = run_calibration(bundle, assembly, opts, mu=args.mu)
    except (DegenerateConic, CoincidentConics, NonRealSelection) as exc:
        log.error("degenerate geometry: %s", exc)
        return EXIT_DEGENERATE
    except NoFeasibleStart as exc:
        log.error("calibration failed: %s", exc)
        return EXIT_CALIB
    except TwosphereError as exc:
        log.error("calibration failed: %s", exc)
        return EXIT_CALIB

    payload = result.to_json_dict()
    payload["constraint_checked"] = problem.mu > 0
    if bundle.oracle is not None:
        payload["error_report"] = evaluate_against_truth(result, bundle.truth)

    out_path = Path(args.out) if args.out else Path(args.bundle) / "calib.json"
    with open(out_path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    log.info("calibration written to %s", out_path)

    if "error_report" in payload:
        print(format_error_report(payload["error_report"]))
    else:
        cam = result.camera
        print(
            f"fx={cam.fx:.4f} fy={cam.fy:.4f} skew={cam.skew:.4f} "
            f"u0={cam.u0:.4f} v0={cam.v0:.4f} converged={result.converged}"
        )
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    try:
        bundle = SceneBundle.load(args.bundle)
        calib = CalibResult.from_json_dict(json.loads(Path(args.calib).read_text()))
    except (OSError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        log.error("cannot load inputs: %s", exc)
        return EXIT_INPUT
    points, errors, stats = reconstruct_cloud(
        bundle, calib.camera, calib.proj_matrix, stride=args.stride
    )
    write_ply(args.out_ply, points, errors)
    with open(args.out_stats, "w") as f:
        json.dump(stats, f, indent=2, sort_keys=True)
        f.write("\n")
    log.info("%d points written to %s", stats["points"], args.out_ply)
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        calib = CalibResult.from_json_dict(json.loads(Path(args.calib).read_text()))
        manifest = json.loads(Path(args.truth).read_text())
        truth_cfg = manifest["truth"] if "truth" in manifest else manifest
        problems = validate_config(truth_cfg)
        if problems:
            for p in problems:
                log.error("truth %s", p)
            return EXIT_INPUT
        truth = SceneTruth.from_config(truth_cfg)
    except (OSError, FileNotFoundError, json.JSONDecodeError, KeyError, TypeError) as exc:
        log.error("cannot load inputs: %s", exc)
        return EXIT_INPUT
    except TwosphereError as exc:
        log.error("invalid truth geometry: %s", exc)
        return EXIT_INPUT
    print(format_error_report(evaluate_against_truth(calib, truth)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twosphere",
        description="Camera-projector calibration from images of two spheres.",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress info logs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="render a synthetic scene bundle")
    group = p_sim.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=PRESET_NAMES)
    group.add_argument("--config", help="scene config JSON path")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--noise-contour", type=float, default=None, metavar="SIGMA_PX")
    p_sim.add_argument("--noise-intensity", type=float, default=None, metavar="SIGMA")
    p_sim.add_argument("--out", required=True, help="output bundle directory")
    p_sim.add_argument("--image-format", choices=("f32", "pgm16"), default="f32")
    p_sim.set_defaults(func=cmd_simulate)

    p_cal = sub.add_parser("calibrate", help="calibrate from a bundle directory")
    p_cal.add_argument("bundle")
    p_cal.add_argument("--mu", type=float, default=None, help="constraint weight (0 disables)")
    p_cal.add_argument("--max-iters", type=int, default=200)
    p_cal.add_argument("--stride", type=int, default=None, help="correspondence grid stride, px")
    p_cal.add_argument("--out", default=None, help="calib JSON path (default: bundle/calib.json)")
    p_cal.set_defaults(func=cmd_calibrate)

    p_rec = sub.add_parser("reconstruct", help="triangulate a bundle with a calibration")
    p_rec.add_argument("bundle")
    p_rec.add_argument("calib")
    p_rec.add_argument("--out-ply", default="cloud.ply")
    p_rec.add_argument("--out-stats", default="stats.json")
    p_rec.add_argument("--stride", type=int, default=1)
    p_rec.set_defaults(func=cmd_reconstruct)

    p_eval = sub.add_parser("evaluate", help="compare a calibration against scene truth")
    p_eval.add_argument("calib")
    p_eval.add_argument("truth", help="bundle manifest.json or scene config JSON")
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
