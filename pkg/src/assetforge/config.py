"""YAML pipeline configuration: defaults, merging, overrides and validation.

Relative paths in a config file resolve against the file's directory.
Secrets never live in the file; services name an environment variable
(``api_key_env``) instead.
"""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .errors import InputError
from .rasterizer import default_view_set, make_camera, orthogonal_view_set
from .texture_bake import BakeParams

DEFAULTS = {
    "mesh": None,
    "images": [],
    "foreground": None,
    "cameras": {"preset": "default", "radius": 2.0, "fov_y": 40.0, "views": None},
    "bake": {
        "texture_size": [2048, 2048],
        "angle_threshold": 70.0,
        "view_weights": None,
        "epsilon": 1e-8,
        "upscale": None,
        "canny": {"sigma": 1.0, "low": 0.05, "high": 0.15},
    },
    "services": {"delight": {"mode": "identity"}, "superres": {"mode": "identity"}},
    "estimator": {"mode": "offline", "context": None},
    "checks": {
        "aesthetic_threshold": 0.0,
        "max_components": 3,
        "max_degenerate_fraction": 0.01,
        "service": {"mode": "offline"},
    },
    "max_retries": 2,
    "base_seed": 0,
    "output": "out",
    "overwrite": False,
    "timestamp": True,
    "jobs": 1,
    "predictions": None,
    "labels": None,
    "report_dir": None,
}

PATH_KEYS = ("mesh", "foreground", "output", "predictions", "labels", "report_dir")


def deep_merge(base, override):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _resolve_paths(cfg, base_dir):
    def fix(p):
        if p is None:
            return None
        p = Path(p).expanduser()
        return str(p if p.is_absolute() else base_dir / p)

    for key in PATH_KEYS:
        if cfg.get(key) is not None:
            cfg[key] = fix(cfg[key])
    cfg["images"] = [fix(p) for p in cfg.get("images") or []]
    return cfg


def load_config(path=None):
    """Defaults merged with the YAML file at ``path`` (if any)."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise InputError(f"malformed config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise InputError(f"config {path} must be a mapping")
    return deep_merge(DEFAULTS, _resolve_paths(data, path.parent.resolve()))


def set_dotted(cfg, dotted, value):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value


def apply_overrides(cfg, overrides):
    """``overrides`` maps dotted keys to values; ``None`` values are skipped."""
    for key, value in overrides.items():
        if value is not None:
            set_dotted(cfg, key, value)
    return cfg


def parse_set(items):
    """``["a.b=1", ...]`` -> {"a.b": 1} with YAML value parsing."""
    out = {}
    for item in items or []:
        if "=" not in item:
            raise InputError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        out[key.strip()] = yaml.safe_load(raw)
    return out


def require_paths(cfg, keys):
    for key in keys:
        value = cfg.get(key)
        if not value:
            raise InputError(f"config needs '{key}'")
        values = value if isinstance(value, list) else [value]
        for v in values:
            if not Path(v).exists():
                raise InputError(f"{key}: {v} does not exist")


def cameras_from_config(cfg, n_views, resolution=(512, 512)):
    cam = cfg["cameras"]
    radius, fov = float(cam.get("radius", 2.0)), float(cam.get("fov_y", 40.0))
    if cam.get("views"):
        cams = [
            make_camera(v["elevation"], v["azimuth"], v.get("radius", radius), v.get("fov_y", fov), resolution)
            for v in cam["views"]
        ]
    elif cam.get("preset", "default") == "default":
        cams = default_view_set(radius, fov, resolution)
    elif cam["preset"] == "orthogonal":
        cams = orthogonal_view_set(radius, fov, resolution)
    else:
        raise InputError(f"unknown camera preset {cam['preset']!r}")
    if n_views is not None and len(cams) != n_views:
        raise InputError(f"{len(cams)} cameras configured for {n_views} images")
    return cams


def bake_params_from_config(cfg):
    b = cfg["bake"]
    canny = b.get("canny") or {}
    try:
        return BakeParams(
            angle_threshold=float(b["angle_threshold"]),
            texture_size=tuple(b["texture_size"]),
            view_weights=b.get("view_weights"),
            epsilon=float(b["epsilon"]),
            upscale=tuple(b["upscale"]) if b.get("upscale") else None,
            canny_sigma=float(canny.get("sigma", 1.0)),
            canny_low=float(canny.get("low", 0.05)),
            canny_high=float(canny.get("high", 0.15)),
            jobs=int(cfg.get("jobs", 1)),
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise InputError(f"invalid bake settings: {exc}") from None


def dump(cfg):
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)
