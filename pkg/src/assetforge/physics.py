"""Real-world scale and physical property restoration.

Estimators answer structured queries about an asset from its renders.
Three flavors exist: fixed values from configuration, an offline
density heuristic, and a remote multimodal service.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, MeshError, ServiceError
from .mesh import bounding_box, scale_uniform
from .services import JsonServiceClient, b64_png

FRICTION_BAND = (0.0, 2.0)
PROPERTY_FIELDS = ("mass_kg", "friction", "category", "description")


@dataclass(frozen=True)
class PhysicalProperties:
    height: float
    mass: float
    friction: float
    category: str
    description: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.height) and self.height > 0):
            raise InputError(f"implausible height {self.height}")
        if not (math.isfinite(self.mass) and self.mass > 0):
            raise InputError(f"implausible mass {self.mass}")
        lo, hi = FRICTION_BAND
        if not (math.isfinite(self.friction) and lo <= self.friction <= hi):
            raise InputError(f"implausible friction {self.friction}")

    def to_dict(self):
        return {
            "height": self.height,
            "mass": self.mass,
            "friction": self.friction,
            "category": self.category,
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["height"]), float(d["mass"]), float(d["friction"]), d["category"], d.get("description", ""))


@dataclass
class EstimatorRequest:
    """Renders of the asset plus an optional free-text hint.

    ``extents`` (bounding-box size in meters) is only consumed by the
    offline heuristic.
    """

    renders: list
    user_context: str | None = None
    extents: tuple | None = None

    def __post_init__(self):
        if len(self.renders) not in (1, 4):
            raise InputError(f"estimator requests carry 1 or 4 renders, got {len(self.renders)}")


class PropertyEstimator:
    def query(self, request, fields):
        """Return a dict with (a subset of) the requested keys."""
        raise NotImplementedError


class OverrideEstimator(PropertyEstimator):
    """Answers from configuration, verbatim; unset keys go to ``fallback`` if given."""

    def __init__(self, fallback=None, **values):
        self.fallback = fallback
        self.values = {k: v for k, v in values.items() if v is not None}

    def query(self, request, fields):
        answer = {k: self.values[k] for k in fields if k in self.values}
        rest = [k for k in fields if k not in answer]
        if rest and self.fallback is not None:
            answer.update(self.fallback.query(request, rest))
        return answer


class HeuristicEstimator(PropertyEstimator):
    """Offline placeholder: keeps the current height, mass from a fixed density."""

    def __init__(self, density=300.0, friction=0.5, category="unknown"):
        self.density = density
        self.friction = friction
        self.category = category

    def query(self, request, fields):
        if request.extents is None:
            raise InputError("the offline estimator needs the asset's bounding-box extents")
        ext = np.asarray(request.extents, dtype=np.float64)
        answers = {
            "height_m": float(ext[2]),
            "mass_kg": float(self.density * np.prod(ext)),
            "friction": self.friction,
            "category": self.category,
            "description": f"offline estimate at {self.density:g} kg/m^3",
        }
        return {k: answers[k] for k in fields}


class ServiceEstimator(PropertyEstimator):
    """Remote estimator: POST {images, context, fields} -> {height_m?, mass_kg?, ...}."""

    def __init__(self, client):
        self.client = client

    @classmethod
    def from_endpoint(cls, endpoint, api_key_env=None, timeout=30.0, retries=1):
        return cls(JsonServiceClient(endpoint, api_key_env, timeout, retries))

    def query(self, request, fields):
        payload = {
            "images": [b64_png(r) for r in request.renders],
            "context": request.user_context or "",
            "fields": list(fields),
        }
        return self.client.post(payload)


def _number(answer, key):
    value = answer.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ServiceError(f"field {key!r} is not a number: {value!r}", diagnostics={"answer": answer})
    return float(value)


def estimate_height(request, estimator):
    if len(request.renders) != 1:
        raise InputError("height estimation takes exactly one frontal render")
    answer = estimator.query(request, ["height_m"])
    if "height_m" not in answer:
        raise ServiceError("estimator reply lacks 'height_m'", diagnostics={"answer": answer})
    height = _number(answer, "height_m")
    if not (math.isfinite(height) and height > 0):
        raise ServiceError(f"implausible height {height}", diagnostics={"answer": answer})
    return height


def estimate_properties(request, estimator, height=None):
    """Mass, friction, category and description; height is queried too unless given.

    A reply without ``description`` gets an empty one; every other field is required.
    """
    if len(request.renders) != 4:
        raise InputError("property estimation takes four orthogonal renders")
    fields = list(PROPERTY_FIELDS) + ([] if height is not None else ["height_m"])
    answer = estimator.query(request, fields)
    missing = [k for k in fields if k not in answer and k != "description"]
    if missing:
        raise ServiceError("estimator reply lacks field(s): " + ", ".join(missing), diagnostics={"answer": answer})
    mass = _number(answer, "mass_kg")
    friction = _number(answer, "friction")
    h = float(height) if height is not None else _number(answer, "height_m")
    category = str(answer["category"]).strip()
    if not category:
        raise ServiceError("estimator returned an empty category", diagnostics={"answer": answer})
    for name, value, ok in (
        ("height", h, h > 0),
        ("mass", mass, mass > 0),
        ("friction", friction, FRICTION_BAND[0] <= friction <= FRICTION_BAND[1]),
    ):
        if not (math.isfinite(value) and ok):
            raise ServiceError(f"implausible {name} {value}", diagnostics={"answer": answer})
    return PhysicalProperties(h, mass, friction, category, str(answer.get("description", "")))


def restore_scale(mesh, height):
    """Uniformly scale so the Z extent equals ``height``; returns (mesh, factor)."""
    height = float(height)
    if not (math.isfinite(height) and height > 0):
        raise InputError(f"target height must be positive, got {height}")
    lo, hi = bounding_box(mesh)
    z_extent = float(hi[2] - lo[2])
    if z_extent <= 0:
        raise MeshError("cannot restore scale of a flat mesh (zero Z extent)")
    factor = height / z_extent
    return scale_uniform(mesh, factor), factor


def estimator_from_config(cfg):
    cfg = dict(cfg or {})
    mode = cfg.pop("mode", "offline")
    cfg.pop("context", None)
    if mode == "offline":
        return HeuristicEstimator(
            density=cfg.get("density", 300.0), friction=cfg.get("friction", 0.5), category=cfg.get("category", "unknown")
        )
    if mode == "override":
        keys = {"height": "height_m", "mass": "mass_kg", "friction": "friction", "category": "category", "description": "description"}
        values = {keys[k]: v for k, v in cfg.items() if k in keys}
        if "height_m" not in values:
            raise InputError("override estimator needs at least 'height'")
        for k in ("height_m", "mass_kg", "friction"):
            if k in values and (isinstance(values[k], bool) or not isinstance(values[k], (int, float))):
                raise InputError(f"override value {k} must be a number")
        return OverrideEstimator(fallback=HeuristicEstimator(), **values)
    if mode == "service":
        if not cfg.get("endpoint"):
            raise InputError("service estimator needs an 'endpoint'")
        return ServiceEstimator.from_endpoint(
            cfg["endpoint"], cfg.get("api_key_env"), cfg.get("timeout", 30.0), cfg.get("retries", 1)
        )
    raise InputError(f"unknown estimator mode {mode!r}")
