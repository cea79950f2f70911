"""End-to-end runs assembled from the library pieces, driven by a config dict."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .bundle import write_bundle
from .config import (
    bake_params_from_config,
    cameras_from_config,
    require_paths,
)
from .errors import InputError
from .fileio import load_obj, read_png, write_png
from .inspection import (
    CheckReport,
    ScoreService,
    Stage,
    VlmService,
    aesthetic_check,
    geo_check,
    run_pipeline,
    seg_check,
    vlm_from_config,
)
from .mesh import bounding_box, compute_inertia, extents, validate_mesh
from .physics import (
    EstimatorRequest,
    estimate_height,
    estimate_properties,
    estimator_from_config,
    restore_scale,
)
from .rasterizer import Camera, framing_radius, orthogonal_view_set, rasterize, render_color
from .services import image_service_from_config
from .texture_bake import bake_texture

log = logging.getLogger(__name__)

RENDER_SIZE = (256, 256)


def load_inputs(cfg):
    require_paths(cfg, ["mesh", "images"])
    mesh = load_obj(cfg["mesh"])
    images = [read_png(p) for p in cfg["images"]]
    return mesh, images


def bake_from_config(cfg, mesh=None, images=None):
    if mesh is None or images is None:
        mesh, images = load_inputs(cfg)
    if not images:
        raise InputError("config lists no images")
    h, w = images[0].shape[:2]
    cameras = cameras_from_config(cfg, len(images), (w, h))
    params = bake_params_from_config(cfg)
    delight = image_service_from_config(cfg["services"].get("delight"))
    superres = image_service_from_config(cfg["services"].get("superres"))
    return bake_texture(mesh, images, cameras, params, delight, superres)


def write_bake_outputs(baked, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_png(out_dir / "albedo.png", baked.pixels)
    write_png(out_dir / "holes.png", baked.hole_mask.astype(np.float64))
    return out_dir / "albedo.png", out_dir / "holes.png"


def _centered(mesh):
    lo, hi = bounding_box(mesh)
    return mesh.with_vertices(mesh.vertices - (lo + hi) / 2.0)


def asset_renders(mesh, texture, views):
    """Textured renders of ``mesh`` (recentred) from (elevation, azimuth) pairs."""
    m = _centered(mesh)
    radius = framing_radius(m)
    out = []
    for el, az in views:
        cam = Camera(el, az, radius, 40.0, RENDER_SIZE)
        out.append(render_color(m, cam, texture, rasterize(m, cam)))
    return out


FRONT = [(0.0, 0.0)]
ORTHOGONAL = [(c.elevation, c.azimuth) for c in orthogonal_view_set()]


def build_stages(cfg, extra_checkers=None):
    """Geometry -> texture -> physics stages for one asset."""
    extra = extra_checkers or {}
    checks = cfg["checks"]
    client = vlm_from_config(checks.get("service"))
    vlm = VlmService(client) if client else None
    scorer = ScoreService(client) if client else None
    estimator = estimator_from_config(cfg["estimator"])
    context = cfg["estimator"].get("context")

    def geometry(seed, settings, upstream):
        mesh, images = load_inputs(cfg)
        return {"mesh": mesh, "images": images, "validation": validate_mesh(mesh)}

    def texture(seed, settings, upstream):
        geo = upstream["geometry"]
        baked = bake_from_config(cfg, geo["mesh"], geo["images"])
        front = asset_renders(geo["mesh"], baked.pixels, FRONT)[0]
        return {"baked": baked, "front": front}

    def physics(seed, settings, upstream):
        mesh = upstream["geometry"]["mesh"]
        tex = upstream["texture"]["baked"].pixels
        front = upstream["texture"]["front"]
        height = estimate_height(EstimatorRequest([front], context, tuple(extents(mesh))), estimator)
        scaled, factor = restore_scale(mesh, height)
        renders = asset_renders(scaled, tex, ORTHOGONAL)
        props = estimate_properties(EstimatorRequest(renders, context, tuple(extents(scaled))), estimator, height=height)
        validation = validate_mesh(scaled)
        inertia = compute_inertia(scaled, props.mass, validation)
        return {"mesh": scaled, "factor": factor, "properties": props, "inertia": inertia, "validation": validation}

    def check_geometry(out):
        return geo_check(out["mesh"], vlm, checks["max_components"], checks["max_degenerate_fraction"])

    def check_aesthetic(out):
        return aesthetic_check(out["front"], checks["aesthetic_threshold"], scorer)

    def check_scale(out):
        z = float(extents(out["mesh"])[2])
        h = out["properties"].height
        ok = abs(z - h) <= 1e-9 * max(1.0, h)
        return CheckReport("scale", ok, z, [] if ok else [f"height {z} differs from target {h}"])

    texture_checks = [check_aesthetic]
    if cfg.get("foreground"):
        fg = read_png(cfg["foreground"], keep_alpha=True)
        if fg.shape[2] != 4:
            raise InputError(f"foreground image {cfg['foreground']} has no alpha channel")
        texture_checks.append(lambda out: seg_check(fg, vlm))

    stages = [
        Stage("geometry", geometry, [check_geometry]),
        Stage("texture", texture, texture_checks),
        Stage("physics", physics, [check_scale]),
    ]
    for stage in stages:
        stage.checkers.extend(extra.get(stage.name, []))
    return stages


def run_asset(cfg, extra_checkers=None):
    """Run the inspected pipeline; write the bundle if every stage passes.

    Returns ``(run, bundle)``; ``bundle`` is ``None`` when rejected.
    """
    stages = build_stages(cfg, extra_checkers)
    run = run_pipeline(stages, int(cfg["max_retries"]), int(cfg["base_seed"]))
    if run.status != "accepted":
        return run, None
    phys = run.outputs["physics"]
    provenance = {
        "base_seed": int(cfg["base_seed"]),
        "seeds": {name: [a.seed for a in run.attempts[name]] for name in run.stages},
        "scale_factor": phys["factor"],
        "pipeline": run.history(),
    }
    bundle = write_bundle(
        phys["mesh"],
        run.outputs["texture"]["baked"],
        phys["properties"],
        phys["inertia"],
        run.final_reports(),
        cfg["output"],
        validation=phys["validation"],
        provenance=provenance,
        overwrite=bool(cfg.get("overwrite")),
        timestamp=bool(cfg.get("timestamp", True)),
    )
    return run, bundle
