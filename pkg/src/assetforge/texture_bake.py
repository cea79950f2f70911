"""Multi-view color back-projection into a UV texture.

Pipeline per bake: delight the views as one tiled grid, super-resolve each
view independently, rasterize geometry buffers at the super-resolved size,
weight every pixel by how squarely it faces the camera (dropping grazing
angles and depth edges), scatter weighted colors into the atlas, then
divide by the accumulated confidence and inpaint what no view reached.
"""

from __future__ import annotations

import hashlib
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .edges import HIGH, LOW, SIGMA, detect_depth_edges
from .errors import AssetError, InputError, ServiceError
from .inpaint import push_pull
from .rasterizer import rasterize, render_geometry_buffers, texel_index
from .services import IdentityService

log = logging.getLogger(__name__)

HOLE_FILL = 0.5


@dataclass
class BakeParams:
    angle_threshold: float = 70.0
    texture_size: tuple = (2048, 2048)  # (width, height)
    view_weights: list | None = None  # None -> 1.0 per view
    epsilon: float = 1e-8
    upscale: tuple | None = None  # None -> (4, 4) with a super-resolution service, else (1, 1)
    canny_sigma: float = SIGMA
    canny_low: float = LOW
    canny_high: float = HIGH
    jobs: int = 1

    def __post_init__(self):
        if not 0 < self.angle_threshold < 90:
            raise InputError(f"angle_threshold must lie in (0, 90), got {self.angle_threshold}")
        w, h = self.texture_size
        if int(w) < 1 or int(h) < 1:
            raise InputError(f"texture_size must be at least 1x1, got {self.texture_size}")
        self.texture_size = (int(w), int(h))
        if not self.epsilon > 0:
            raise InputError("epsilon must be positive")
        if self.view_weights is not None:
            self.view_weights = [float(x) for x in self.view_weights]
            if any(not (x >= 0 and math.isfinite(x)) for x in self.view_weights):
                raise InputError("view weights must be finite and non-negative")
        if self.upscale is not None:
            sx, sy = self.upscale
            if int(sx) < 1 or int(sy) < 1:
                raise InputError(f"upscale factors must be >= 1, got {self.upscale}")
            self.upscale = (int(sx), int(sy))

    def weights_for(self, n_views):
        if self.view_weights is None:
            return [1.0] * n_views
        if len(self.view_weights) != n_views:
            raise InputError(f"{len(self.view_weights)} view weights for {n_views} views")
        return list(self.view_weights)


@dataclass
class TextureAtlas:
    color_accum: np.ndarray  # H x W x 3
    confidence_accum: np.ndarray  # H x W

    @classmethod
    def empty(cls, size):
        w, h = size
        return cls(np.zeros((h, w, 3)), np.zeros((h, w)))

    @property
    def size(self):
        return self.confidence_accum.shape[1], self.confidence_accum.shape[0]

    def copy(self):
        return TextureAtlas(self.color_accum.copy(), self.confidence_accum.copy())


@dataclass
class ViewStats:
    index: int
    weight: float
    visible_pixels: int
    edge_pixels: int
    contributing_pixels: int
    texels: int


@dataclass
class BakedTexture:
    pixels: np.ndarray  # H x W x 3 in [0, 1]
    hole_mask: np.ndarray  # H x W bool, True where no view contributed
    confidence: np.ndarray | None = None
    views: list = field(default_factory=list)

    @property
    def hole_fraction(self):
        return float(self.hole_mask.mean())


@contextmanager
def _stage(name):
    try:
        yield
    except AssetError as exc:
        if exc.stage is None:
            exc.stage = name
        raise
    except Exception as exc:
        raise AssetError(f"{type(exc).__name__}: {exc}", stage=name) from exc


def _check_images(images):
    if not images:
        raise InputError("at least one image is required")
    arrs = [np.asarray(im, dtype=np.float64)[..., :3] for im in images]
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise InputError("all views must share one image size: " + ", ".join(str(a.shape) for a in arrs))
    return arrs


def _call_service(service, image, transform, params):
    try:
        return np.asarray(service.transform(image, transform, params), dtype=np.float64)
    except AssetError:
        raise
    except Exception as exc:
        raise ServiceError(
            f"{transform} service failed: {exc}",
            diagnostics={"service": getattr(service, "name", type(service).__name__), "error": repr(exc)},
        ) from exc


def delight_images(images, service=None):
    """Run the delighting service once over all views stacked vertically."""
    arrs = _check_images(images)
    service = service or IdentityService()
    grid = np.concatenate(arrs, axis=0)
    out = _call_service(service, grid, "delight", {})
    if out.shape != grid.shape:
        raise ServiceError(
            f"delight service returned shape {out.shape}, expected {grid.shape}",
            diagnostics={"expected": grid.shape, "got": out.shape},
        )
    return list(np.split(out, len(arrs), axis=0))


def superres_images(images, service=None, upscale=(1, 1)):
    """Super-resolve each view on its own; output is input size times ``upscale``."""
    sx, sy = (int(x) for x in upscale)
    if sx < 1 or sy < 1:
        raise InputError(f"upscale factors must be >= 1, got {upscale}")
    service = service or IdentityService()
    out = []
    for i, img in enumerate(_check_images(images)):
        res = _call_service(service, img, "superres", {"upscale": [sx, sy]})
        expected = (img.shape[0] * sy, img.shape[1] * sx, 3)
        if res.shape[:2] != expected[:2]:
            raise ServiceError(
                f"superres output for view {i} has shape {res.shape}, expected {expected}",
                diagnostics={"view": i, "expected": expected, "got": res.shape},
            )
        out.append(res[..., :3])
    return out


def compute_view_confidence(buffers, params, view_weight=1.0, edges=None):
    """Per-pixel weight: cosine to the view axis, cut at the angle threshold, masked and scaled."""
    conf = np.maximum(0.0, buffers.normals[..., 2])
    conf[conf < math.cos(math.radians(params.angle_threshold))] = 0.0
    if edges is None:
        edges = detect_depth_edges(
            buffers.depth, buffers.mask, params.canny_sigma, params.canny_low, params.canny_high
        )
    keep = buffers.mask & ~edges
    conf[~keep] = 0.0
    return conf * float(view_weight)


@dataclass
class _Contribution:
    texels: np.ndarray  # unique flat texel indices, ascending
    color: np.ndarray  # n x 3
    confidence: np.ndarray  # n

    def digest(self):
        h = hashlib.sha256()
        for arr in (self.texels, self.color, self.confidence):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.digest()


def _contribution(image, buffers, confidence, texture_size):
    image = np.asarray(image, dtype=np.float64)
    if image.shape[:2] != buffers.shape or confidence.shape != buffers.shape:
        raise InputError(
            f"image {image.shape[:2]}, buffers {buffers.shape} and confidence {confidence.shape} differ"
        )
    sel = confidence > 0
    W, H = texture_size
    if not sel.any():
        return _Contribution(np.zeros(0, np.int64), np.zeros((0, 3)), np.zeros(0))
    row, col = texel_index(buffers.uv[sel], texture_size)
    flat = row * W + col
    c = confidence[sel]
    weighted = image[sel][:, :3] * c[:, None]
    texels, inverse = np.unique(flat, return_inverse=True)
    n = len(texels)
    color = np.stack([np.bincount(inverse, weighted[:, k], minlength=n) for k in range(3)], axis=1)
    conf = np.bincount(inverse, c, minlength=n)
    return _Contribution(texels, color, conf)


def _accumulate(atlas, contrib):
    if len(contrib.texels) == 0:
        return
    atlas.color_accum.reshape(-1, 3)[contrib.texels] += contrib.color
    atlas.confidence_accum.reshape(-1)[contrib.texels] += contrib.confidence


def back_project_view(image, buffers, confidence, atlas):
    """Scatter one view into a copy of ``atlas``.

    Each pixel with positive confidence adds ``color * confidence`` and
    ``confidence`` to the texel holding its UV; collisions add up.
    """
    out = atlas.copy()
    _accumulate(out, _contribution(image, buffers, np.asarray(confidence, dtype=np.float64), atlas.size))
    return out


def inpaint_holes(texture, weights=None):
    """Fill hole texels by push-pull from the valid ones."""
    holes = texture.hole_mask
    if not holes.any():
        return texture
    pixels = texture.pixels.copy()
    if holes.all():
        warnings.warn("no view contributed to any texel; texture filled with mid-gray", RuntimeWarning)
        log.warning("texture has no valid texels; filling with mid-gray")
        pixels[:] = HOLE_FILL
    else:
        pixels = np.clip(push_pull(pixels, ~holes, weights), 0.0, 1.0)
    return BakedTexture(pixels, holes.copy(), texture.confidence, texture.views)


def fuse_texture(atlas, epsilon=1e-8, inpaint=True):
    """Confidence-normalize the accumulators; uncovered texels become holes."""
    conf = atlas.confidence_accum
    pixels = np.clip(atlas.color_accum / (conf + epsilon)[..., None], 0.0, 1.0)
    holes = conf == 0
    pixels[holes] = 0.0
    baked = BakedTexture(pixels, holes, conf.copy())
    if inpaint:
        baked = inpaint_holes(baked, weights=conf)
    return baked


def merge_contributions(contributions, texture_size):
    """Sum view contributions in an order fixed by their content.

    Floating-point addition is not associative; ordering by digest makes
    the result independent of the order views were supplied in.
    """
    atlas = TextureAtlas.empty(texture_size)
    for contrib in sorted(contributions, key=lambda c: c.digest()):
        _accumulate(atlas, contrib)
    return atlas


def bake_texture(mesh, images, cameras, params=None, delight=None, superres=None, inpaint=True):
    """Back-project multi-view images onto ``mesh``'s UV layout.

    Camera resolutions are replaced by the size of the super-resolved
    images. Errors carry the label of the stage that raised them.
    """
    params = params or BakeParams()
    if len(images) != len(cameras):
        raise InputError(f"{len(images)} images for {len(cameras)} cameras")
    weights = params.weights_for(len(images))
    missing = [a for a in ("uvs", "vertex_normals") if getattr(mesh, a) is None]
    if missing:
        raise InputError("mesh is missing required attribute(s): " + ", ".join(missing), stage="input")
    upscale = params.upscale
    if upscale is None:
        upscale = (1, 1) if superres is None or isinstance(superres, IdentityService) else (4, 4)

    with _stage("delight"):
        views = delight_images(images, delight)
    with _stage("superres"):
        views = superres_images(views, superres, upscale)

    def one_view(i):
        img = views[i]
        cam = cameras[i].with_resolution((img.shape[1], img.shape[0]))
        with _stage("rasterize"):
            buffers = render_geometry_buffers(mesh, cam, rasterize(mesh, cam))
        with _stage("back-project"):
            edges = detect_depth_edges(
                buffers.depth, buffers.mask, params.canny_sigma, params.canny_low, params.canny_high
            )
            conf = compute_view_confidence(buffers, params, weights[i], edges)
            contrib = _contribution(img, buffers, conf, params.texture_size)
        stats = ViewStats(
            index=i,
            weight=weights[i],
            visible_pixels=int(buffers.mask.sum()),
            edge_pixels=int((edges & buffers.mask).sum()),
            contributing_pixels=int((conf > 0).sum()),
            texels=len(contrib.texels),
        )
        return contrib, stats

    jobs = max(1, int(params.jobs))
    if jobs > 1 and len(views) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one_view, range(len(views))))
    else:
        results = [one_view(i) for i in range(len(views))]

    with _stage("fuse"):
        atlas = merge_contributions([r[0] for r in results], params.texture_size)
        baked = fuse_texture(atlas, params.epsilon, inpaint=inpaint)
    baked.views = [r[1] for r in results]
    return baked
