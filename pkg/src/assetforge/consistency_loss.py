"""Cross-view feature consistency and noise-prediction losses.

Includes the correspondence projection that pairs latent pixels seeing the
same surface point in two views, and closed-form gradients for checking
against finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError

DEPTH_TOL = 1e-3


@dataclass
class CorrespondenceSet:
    """Paired integer (x, y) coordinates into one feature map."""

    reference_coords: np.ndarray  # N x 2
    search_coords: np.ndarray  # N x 2

    def __post_init__(self):
        self.reference_coords = np.asarray(self.reference_coords, dtype=np.int64).reshape(-1, 2)
        self.search_coords = np.asarray(self.search_coords, dtype=np.int64).reshape(-1, 2)
        if len(self.reference_coords) != len(self.search_coords):
            raise InputError("reference and search sets must have equal length")

    def __len__(self):
        return len(self.reference_coords)

    def swapped(self):
        return CorrespondenceSet(self.search_coords, self.reference_coords)

    def to_json(self):
        return json.dumps(
            {"reference": self.reference_coords.tolist(), "search": self.search_coords.tolist()}
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["reference"], d["search"])


@dataclass
class NoisePair:
    target_noise: np.ndarray
    predicted_noise: np.ndarray

    def __post_init__(self):
        self.target_noise = np.asarray(self.target_noise, dtype=np.float64).reshape(-1)
        self.predicted_noise = np.asarray(self.predicted_noise, dtype=np.float64).reshape(-1)
        if self.target_noise.shape != self.predicted_noise.shape:
            raise InputError("noise arrays must have equal length")


@dataclass(frozen=True)
class LossWeights:
    lambda_ldm: float = 1.0
    lambda_spatial: float = 0.02

    def __post_init__(self):
        if self.lambda_ldm < 0 or self.lambda_spatial < 0:
            raise InputError("loss weights must be non-negative")


def _visible(points, camera, buffers, depth_tol):
    xy, z = camera.project(points)
    H, W = buffers.shape
    finite = np.all(np.isfinite(xy), axis=1) & (z > 0)
    x = np.where(finite, xy[:, 0], -1.0)
    y = np.where(finite, xy[:, 1], -1.0)
    px, py = np.floor(x).astype(np.int64), np.floor(y).astype(np.int64)
    ok = finite & (px >= 0) & (px < W) & (py >= 0) & (py < H)
    idx = np.flatnonzero(ok)
    idx = idx[buffers.mask[py[idx], px[idx]]]
    # The buffer holds depth at pixel centres; the point generally sits between
    # four of them, so it is accepted if its depth lies within their range.
    x0 = np.clip(np.floor(x[idx] - 0.5).astype(np.int64), 0, W - 1)
    y0 = np.clip(np.floor(y[idx] - 0.5).astype(np.int64), 0, H - 1)
    lo = np.full(len(idx), np.inf)
    hi = np.full(len(idx), -np.inf)
    for dy in (0, 1):
        for dx in (0, 1):
            cx, cy = np.minimum(x0 + dx, W - 1), np.minimum(y0 + dy, H - 1)
            m = buffers.mask[cy, cx]
            d = buffers.depth[cy, cx]
            lo = np.where(m, np.minimum(lo, d), lo)
            hi = np.where(m, np.maximum(hi, d), hi)
    d = buffers.normalize_depth(z[idx])
    consistent = (d >= lo - depth_tol) & (d <= hi + depth_tol)
    ok[:] = False
    ok[idx[consistent]] = True
    return ok, xy


def project_correspondences(points3d, camera_a, camera_b, buffers_a, buffers_b, downsample=1, depth_tol=DEPTH_TOL):
    """Latent-pixel pairs for surface points visible in both views.

    A point is visible in a view when it lands on a masked pixel and its
    normalized depth lies within ``depth_tol`` of the range spanned by the
    surrounding pixel centres.
    Coordinates are (x, y), divided by ``downsample`` and floored.
    """
    if downsample < 1:
        raise InputError("downsample must be >= 1")
    pts = np.asarray(points3d, dtype=np.float64).reshape(-1, 3)
    vis_a, xy_a = _visible(pts, camera_a, buffers_a, depth_tol)
    vis_b, xy_b = _visible(pts, camera_b, buffers_b, depth_tol)
    both = vis_a & vis_b
    ref = np.floor(xy_a[both] / downsample).astype(np.int64)
    srch = np.floor(xy_b[both] / downsample).astype(np.int64)
    return CorrespondenceSet(ref, srch)


def gather_features(feature_map, coords):
    """C x N matrix of features at integer (x, y) coordinates."""
    fmap = np.asarray(feature_map, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
    C, H, W = fmap.shape
    if len(coords) == 0:
        return np.zeros((C, 0))
    x, y = coords[:, 0], coords[:, 1]
    bad = (x < 0) | (x >= W) | (y < 0) | (y >= H)
    if bad.any():
        raise InputError(f"coordinate {tuple(coords[np.argmax(bad)])} outside a {W}x{H} feature map")
    return fmap[:, y, x]


def smooth_l1(d):
    a = np.abs(d)
    return np.where(a < 1.0, 0.5 * d * d, a - 0.5)


def smooth_l1_grad(d):
    return np.where(np.abs(d) < 1.0, d, np.sign(d))


def _sample_loss(fmap, corr):
    if len(corr) == 0:
        return 0.0
    d = gather_features(fmap, corr.reference_coords) - gather_features(fmap, corr.search_coords)
    return float(smooth_l1(d).mean())


def spatial_loss(batch):
    """Mean over samples of the mean smooth-L1 gap between paired features.

    ``batch`` is a sequence of (feature map C x H x W, CorrespondenceSet).
    Samples without correspondences contribute zero but still count in B.
    """
    if len(batch) == 0:
        raise InputError("batch must contain at least one sample")
    return float(sum(_sample_loss(f, c) for f, c in batch) / len(batch))


def spatial_loss_grad(batch):
    """Gradient of ``spatial_loss`` with respect to each feature map."""
    grads = []
    B = len(batch)
    for fmap, corr in batch:
        fmap = np.asarray(fmap, dtype=np.float64)
        g = np.zeros_like(fmap)
        if len(corr):
            d = gather_features(fmap, corr.reference_coords) - gather_features(fmap, corr.search_coords)
            gd = smooth_l1_grad(d) / (d.size * B)
            rx, ry = corr.reference_coords[:, 0], corr.reference_coords[:, 1]
            sx, sy = corr.search_coords[:, 0], corr.search_coords[:, 1]
            for c in range(fmap.shape[0]):
                np.add.at(g[c], (ry, rx), gd[c])
                np.add.at(g[c], (sy, sx), -gd[c])
        grads.append(g)
    return grads


def ldm_loss(pair):
    """Mean squared error between target and predicted noise."""
    d = pair.target_noise - pair.predicted_noise
    if d.size == 0:
        return 0.0
    return float(np.mean(d * d))


def ldm_loss_grad(pair):
    """Gradient with respect to the predicted noise."""
    d = pair.target_noise - pair.predicted_noise
    return -2.0 * d / max(d.size, 1)


def total_loss(ldm, spatial, weights=None):
    weights = weights or LossWeights()
    return weights.lambda_ldm * ldm + weights.lambda_spatial * spatial
