"""Command-line entry point.

Exit codes:
  0  success
  2  bad input (files, config, mesh attributes)
  3  external service failure
  4  internal error
  5  asset rejected by quality inspection
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import apply_overrides, dump, load_config, parse_set, require_paths, cameras_from_config
from .errors import AssetError, InputError, ServiceError
from .fileio import load_obj, write_png
from .inspection import evaluate_checkers, load_eval_records
from .mesh import validate_mesh
from .rasterizer import render_geometry_buffers

log = logging.getLogger("assetforge")

EXIT_OK, EXIT_INPUT, EXIT_SERVICE, EXIT_INTERNAL, EXIT_REJECTED = 0, 2, 3, 4, 5


def exit_code_for(exc):
    if isinstance(exc, InputError):
        return EXIT_INPUT
    if isinstance(exc, ServiceError):
        return EXIT_SERVICE
    return EXIT_INTERNAL


def _config(args, overrides, config_path=None):
    cfg = load_config(config_path if config_path is not None else getattr(args, "config", None))
    apply_overrides(cfg, overrides)
    apply_overrides(cfg, parse_set(getattr(args, "set", None)))
    log.info("effective config:\n%s", dump(cfg))
    return cfg


def cmd_bake(args):
    from .pipeline import bake_from_config, write_bake_outputs

    cfg = _config(args, {
        "mesh": args.mesh,
        "images": args.images,
        "output": args.out,
        "bake.texture_size": args.texture_size,
        "bake.angle_threshold": args.angle_threshold,
        "jobs": args.jobs,
        "report_dir": args.report,
    })
    baked = bake_from_config(cfg)
    tex, holes = write_bake_outputs(baked, cfg["output"])
    print(f"texture\t{tex}")
    print(f"hole_mask\t{holes}")
    print(f"hole_fraction\t{baked.hole_fraction:.6f}")
    if cfg.get("report_dir"):
        from .report import bake_report

        for p in bake_report(baked, cfg["report_dir"]):
            print(f"report\t{p}")
    return EXIT_OK


def _asset_overrides(args):
    return {
        "output": args.out,
        "max_retries": args.max_retries,
        "base_seed": args.base_seed,
        "estimator.mode": args.estimator,
        "estimator.height": args.height,
        "estimator.mass": args.mass,
        "estimator.friction": args.friction,
        "estimator.context": args.context,
        "timestamp": False if args.no_timestamp else None,
        "overwrite": True if args.overwrite else None,
        "report_dir": args.report,
    }


def _one_asset(args, config_path):
    from .pipeline import run_asset

    cfg = _config(args, _asset_overrides(args), config_path)
    run, bundle = run_asset(cfg)
    lines = run.summary_lines()
    if bundle is not None:
        lines.append(f"bundle: {bundle.root}")
    if cfg.get("report_dir"):
        from .report import pipeline_report

        lines += [f"report: {p}" for p in pipeline_report(run, cfg["report_dir"])]
    return (EXIT_OK if bundle is not None else EXIT_REJECTED), lines


def cmd_asset(args):
    configs = args.config or [None]
    if len(configs) == 1:
        code, lines = _one_asset(args, configs[0])
        print("\n".join(lines))
        return code
    if args.out:
        raise InputError("--out cannot be shared by several assets; set 'output' per config")

    def guarded(path):
        try:
            return _one_asset(args, path)
        except AssetError as exc:
            return exit_code_for(exc), [f"error: {exc}"]

    with ThreadPoolExecutor(max_workers=max(1, args.jobs or 1)) as pool:
        results = list(pool.map(guarded, configs))
    worst = EXIT_OK
    for path, (code, lines) in zip(configs, results):
        print(f"== {path} (exit {code})")
        print("\n".join(lines))
        worst = max(worst, code)
    return worst


def cmd_eval(args):
    cfg = _config(args, {"predictions": args.predictions, "labels": args.labels, "report_dir": args.report})
    if not cfg.get("predictions"):
        raise InputError("eval needs a predictions file")
    _, pred, labels = load_eval_records(cfg["predictions"], cfg.get("labels"))
    res = evaluate_checkers(pred, labels)

    def pct(value, defined):
        return f"{value * 100:.2f}%" if defined else "undefined (0.00%)"

    print("metric\tvalue")
    print(f"assets\t{res.total}")
    print(f"true_positives\t{res.true_positives}")
    print(f"false_positives\t{res.false_positives}")
    print(f"false_negatives\t{res.false_negatives}")
    print(f"true_negatives\t{res.true_negatives}")
    print(f"precision\t{pct(res.precision, res.precision_defined)}")
    print(f"recall\t{pct(res.recall, res.recall_defined)}")
    if cfg.get("report_dir"):
        from .report import eval_report

        for p in eval_report(res, cfg["report_dir"]):
            print(f"report\t{p}")
    return EXIT_OK


def cmd_validate(args):
    cfg = _config(args, {"mesh": args.mesh})
    require_paths(cfg, ["mesh"])
    report = validate_mesh(load_obj(cfg["mesh"], check_winding=False))
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def cmd_rasterize(args):
    cfg = _config(args, {"mesh": args.mesh, "output": args.out, "cameras.preset": args.preset})
    require_paths(cfg, ["mesh"])
    mesh = load_obj(cfg["mesh"])
    w, h = args.resolution
    out = Path(cfg["output"])
    for i, cam in enumerate(cameras_from_config(cfg, None, (w, h))):
        buf = render_geometry_buffers(mesh, cam)
        m = buf.mask[..., None]
        write_png(out / f"view{i}_mask.png", buf.mask.astype(np.float64))
        write_png(out / f"view{i}_depth.png", buf.depth)
        write_png(out / f"view{i}_normal.png", np.where(m, 0.5 * (buf.normals + 1.0), 0.0))
        uv = np.concatenate([buf.uv, np.zeros(buf.uv.shape[:2] + (1,))], axis=2)
        write_png(out / f"view{i}_uv.png", uv)
        print(f"view{i}\televation={cam.elevation:g}\tazimuth={cam.azimuth:g}\tcovered={int(buf.mask.sum())}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="assetforge",
        description="Mesh + multi-view images -> textured, scaled, inspected URDF asset.",
        epilog="exit codes: 0 ok, 2 input error, 3 service error, 4 internal error, 5 asset rejected",
    )
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    p.add_argument("--log-file", help="also write the run log here")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, multi_config=False):
        if multi_config:
            sp.add_argument("--config", action="append", help="YAML config; repeat for batch mode")
        else:
            sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a dotted config key")

    b = sub.add_parser("bake", help="back-project view images into a UV texture")
    common(b)
    b.add_argument("--mesh")
    b.add_argument("--images", nargs="+")
    b.add_argument("--out", help="output directory for albedo.png and holes.png")
    b.add_argument("--texture-size", nargs=2, type=int, metavar=("W", "H"))
    b.add_argument("--angle-threshold", type=float)
    b.add_argument("--jobs", type=int, help="worker threads for per-view work")
    b.add_argument("--report", help="write bake_views.csv and bake_report.png here")
    b.set_defaults(func=cmd_bake)

    a = sub.add_parser("asset", help="full pipeline: validate, bake, scale, inspect, package")
    common(a, multi_config=True)
    a.add_argument("--out", help="bundle directory")
    a.add_argument("--max-retries", type=int)
    a.add_argument("--base-seed", type=int)
    a.add_argument("--estimator", choices=["offline", "override", "service"])
    a.add_argument("--height", type=float, help="override estimator: height in meters")
    a.add_argument("--mass", type=float, help="override estimator: mass in kg")
    a.add_argument("--friction", type=float, help="override estimator: friction coefficient")
    a.add_argument("--context", help="text hint for the estimator, e.g. 'a tiger plush toy'")
    a.add_argument("--no-timestamp", action="store_true", help="omit created_at for reproducible bundles")
    a.add_argument("--overwrite", action="store_true")
    a.add_argument("--jobs", type=int, help="assets processed in parallel (batch mode)")
    a.add_argument("--report", help="write attempts.csv and attempts.png here")
    a.set_defaults(func=cmd_asset)

    e = sub.add_parser("eval", help="precision/recall of checker verdicts")
    common(e)
    e.add_argument("predictions", nargs="?", help="JSONL {asset_id, predicted_unusable, label_unusable}")
    e.add_argument("labels", nargs="?", help="optional JSONL {asset_id, label_unusable}")
    e.add_argument("--report", help="write eval_metrics.csv and confusion.png here")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("validate", help="watertightness / manifold report for an OBJ")
    common(v)
    v.add_argument("mesh", nargs="?")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("rasterize", help="dump per-view geometry buffers as PNGs")
    common(r)
    r.add_argument("--mesh")
    r.add_argument("--out")
    r.add_argument("--preset", choices=["default", "orthogonal"])
    r.add_argument("--resolution", nargs=2, type=int, default=(512, 512), metavar=("W", "H"))
    r.set_defaults(func=cmd_rasterize)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    handlers = [logging.StreamHandler(sys.stderr)]
    if args.log_file:
        handlers.append(logging.FileHandler(args.log_file))
        level = min(level, logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", handlers=handlers, force=True)
    try:
        return args.func(args)
    except AssetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(f"diagnostics: {json.dumps(diag, default=str)}", file=sys.stderr)
        return exit_code_for(exc)
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
