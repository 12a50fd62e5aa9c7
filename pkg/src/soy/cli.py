"""`soy` command line: fit, synth, metrics, gradcheck, fixture.

Exit codes: 0 success, 1 check failure, 2 input error, 3 numerical
failure. SOY_MODEL can supply a default --model; explicit flags win.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import smf
from .camera import BehindCameraError, Camera
from .fitter import FitConfig, fit, make_stage_config
from .formats import (
    InputFileError,
    export_obj,
    read_dcm,
    read_keypoints,
    read_params,
    read_pgm,
    write_params,
    write_scene,
)
from .gradcheck import run_gradcheck
from .losses import LossWeights, NumericalError
from .metrics import miou, pve_t_sc
from .minimodel import build_mini_model
from .model import load_model, save_model, skin
from .raster import rasterize
from .synth import SceneSpec, SceneError, generate_scene

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

_WEIGHT_KEYS = {
    "mesh": "mesh",
    "3d": "joints_3d",
    "2d": "joints_2d",
    "tpose": "tpose",
    "dp": "dp",
    "prior_theta": "prior_theta",
    "prior_beta": "prior_beta",
}


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from exc


def _parse_weights(text: str) -> dict[str, float]:
    out = {}
    for item in text.split(","):
        if not item:
            continue
        try:
            key, value = item.split("=")
            out[_WEIGHT_KEYS[key.strip()]] = float(value)
        except (ValueError, KeyError) as exc:
            raise argparse.ArgumentTypeError(
                f"bad weight {item!r} (keys: {', '.join(_WEIGHT_KEYS)})"
            ) from exc
    return out


def _resolve_model_path(args) -> str:
    path = getattr(args, "model", None) or os.environ.get("SOY_MODEL")
    if not path:
        raise InputFileError("<model>", "no --model given and SOY_MODEL is unset")
    return path


def _camera(args, params) -> Camera:
    return Camera(focal=args.focal, image_size=args.size, cam_t=params.cam_t)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="soy", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="refine parameters against dense correspondences")
    p_fit.add_argument("--model", help="SMF model file (or SOY_MODEL)")
    p_fit.add_argument("--corr", required=True, help="DCM correspondence file")
    p_fit.add_argument("--init", required=True, help="initial params JSON")
    p_fit.add_argument("--stage", choices=["2", "3", "custom"], default="3")
    p_fit.add_argument("--iters", type=int, default=None)
    p_fit.add_argument("--lr", type=float, default=None)
    p_fit.add_argument("--weights", type=_parse_weights, default=None, metavar="k=v,...")
    p_fit.add_argument("--keypoints", default=None, help="keypoints JSON (canonical or BODY_25)")
    p_fit.add_argument("--joint-map", default=None, help="override BODY_25 mapping table")
    p_fit.add_argument("--free", default=None, metavar="beta,theta,...",
                       help="free parameter blocks (default beta,theta)")
    p_fit.add_argument("--focal", type=float, default=5000.0)
    p_fit.add_argument("--size", type=_parse_size, default=(224, 224))
    p_fit.add_argument("--no-early-stop", action="store_true")
    p_fit.add_argument("--dp-normalize", choices=["sum", "mean"], default="sum")
    p_fit.add_argument("--timing", action="store_true", help="record wall time in output meta")
    p_fit.add_argument("--out", required=True)
    p_fit.add_argument("--mesh-out", default=None, help="write fitted mesh as OBJ")
    p_fit.add_argument("--trace", default=None, help="write per-iteration loss CSV")

    p_synth = sub.add_parser("synth", help="generate a synthetic ground-truth scene")
    p_synth.add_argument("--model", help="SMF model file (or SOY_MODEL)")
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--n-records", type=int, required=True)
    p_synth.add_argument("--noise-px", type=float, default=0.0)
    p_synth.add_argument("--beta-mode", choices=["prior", "zero"], default="prior")
    p_synth.add_argument("--sigma-theta", type=float, default=0.2)
    p_synth.add_argument("--focal", type=float, default=5000.0)
    p_synth.add_argument("--size", type=_parse_size, default=(224, 224))
    p_synth.add_argument("--out", required=True, help="output scene directory")

    p_met = sub.add_parser("metrics", help="evaluation metrics")
    met_sub = p_met.add_subparsers(dest="metric", required=True)
    p_pve = met_sub.add_parser("pve-t-sc", help="scale-corrected T-pose vertex error (mm)")
    p_pve.add_argument("--model")
    p_pve.add_argument("--pred", required=True)
    p_pve.add_argument("--gt", required=True)
    p_miou = met_sub.add_parser("miou", help="silhouette intersection over union")
    p_miou.add_argument("--model")
    p_miou.add_argument("--pred", required=True)
    p_miou.add_argument("--mask", required=True)
    p_miou.add_argument("--focal", type=float, default=5000.0)
    p_miou.add_argument("--size", type=_parse_size, default=None,
                        help="render size (default: the ground-truth mask size)")

    p_gc = sub.add_parser("gradcheck", help="finite-difference check of all loss gradients")
    p_gc.add_argument("--model", help="SMF model (default: built-in fixture)")
    p_gc.add_argument("--trials", type=int, default=20)
    p_gc.add_argument("--seed", type=int, default=0)

    p_fx = sub.add_parser("fixture", help="write the bundled procedural model")
    p_fx.add_argument("--out", required=True)
    p_fx.add_argument("--num-betas", type=int, default=10)

    return parser


def _cmd_fit(args) -> int:
    model = load_model(_resolve_model_path(args))
    init, _ = read_params(args.init)
    if len(init.beta) != model.num_betas:
        raise InputFileError(args.init, f"beta length {len(init.beta)} != model B {model.num_betas}")
    corr = read_dcm(args.corr)
    if len(corr) == 0:
        raise InputFileError(args.corr, "correspondence file has no records")
    keypoints = read_keypoints(args.keypoints, args.joint_map) if args.keypoints else None

    if args.stage in ("2", "3"):
        config = make_stage_config(args.stage)
    else:
        config = FitConfig()
    if args.iters is not None:
        config.iterations = args.iters
    if args.lr is not None:
        config.lr = args.lr
    if args.weights:
        for key, value in args.weights.items():
            setattr(config.weights, key, value)
        config.weights.__post_init__()
    if args.free:
        config.free_params = tuple(b.strip() for b in args.free.split(",") if b.strip())
    config.early_stop = not args.no_early_stop
    config.dp_normalize = args.dp_normalize
    config.validate()

    cam = _camera(args, init)
    result = fit(model, init, cam, corr, config, keypoints=keypoints)

    meta = {
        "stage": config.stage,
        "iterations_run": result.iterations_run,
        "converged": result.converged,
        "best_total": result.best_total,
        "final_total": result.final_total,
    }
    if result.abort_reason:
        meta["abort_reason"] = result.abort_reason
    if args.timing:
        meta["wall_time_s"] = result.wall_time
    write_params(args.out, result.params, meta=meta)

    if args.mesh_out:
        export_obj(skin(model, result.params), args.mesh_out)
    if args.trace:
        keys = sorted(result.trace[0].terms)
        lines = ["iteration,total," + ",".join(keys)]
        for i, rep in enumerate(result.trace):
            vals = ",".join(repr(rep.terms.get(k, 0.0)) for k in keys)
            lines.append(f"{i},{rep.total!r},{vals}")
        Path(args.trace).write_text("\n".join(lines) + "\n")

    if result.abort_reason:
        print(f"soy fit: aborted ({result.abort_reason}); best iterate written", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_synth(args) -> int:
    model = load_model(_resolve_model_path(args))
    spec = SceneSpec(
        beta_mode=args.beta_mode,
        sigma_theta=args.sigma_theta,
        n_records=args.n_records,
        noise_px=args.noise_px,
        size=args.size,
        focal=args.focal,
        seed=args.seed,
    )
    scene = generate_scene(model, spec)
    try:
        write_scene(scene, args.out)
    except OSError as exc:
        raise InputFileError(args.out, f"cannot write scene: {exc}") from exc
    return EXIT_OK


def _cmd_metrics(args) -> int:
    model = load_model(_resolve_model_path(args))
    pred, _ = read_params(args.pred)
    if args.metric == "pve-t-sc":
        gt, _ = read_params(args.gt)
        value = pve_t_sc(model, pred.beta, gt.beta)
    else:
        gt_mask = read_pgm(args.mask)
        size = args.size if args.size else gt_mask.size
        if size != gt_mask.size:
            raise InputFileError(args.mask, f"mask size {gt_mask.size} != --size {size}")
        cam = Camera(focal=args.focal, image_size=size, cam_t=pred.cam_t)
        pred_mask, _ = rasterize(model, pred, cam)
        value = miou(pred_mask, gt_mask)
    print(repr(float(value)))
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    if getattr(args, "model", None) or os.environ.get("SOY_MODEL"):
        model = load_model(_resolve_model_path(args))
    else:
        model = build_mini_model()
    if args.trials < 1:
        raise InputFileError("--trials", "must be >= 1")
    result = run_gradcheck(model, trials=args.trials, seed=args.seed)
    for name in sorted(result.worst):
        status = "ok" if result.worst[name] < result.tolerance else "FAIL"
        print(f"{name:12s} worst relative error {result.worst[name]:.3e}  {status}")
    if not result.passed:
        print(f"gradcheck FAILED: {', '.join(result.failing())}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _cmd_fixture(args) -> int:
    model = build_mini_model(num_betas=args.num_betas)
    save_model(model, args.out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "fit": _cmd_fit,
        "synth": _cmd_synth,
        "metrics": _cmd_metrics,
        "gradcheck": _cmd_gradcheck,
        "fixture": _cmd_fixture,
    }
    try:
        return handlers[args.command](args)
    except (InputFileError, smf.SmfError, SceneError) as exc:
        print(f"soy: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, BehindCameraError) as exc:
        print(f"soy: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"soy: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
