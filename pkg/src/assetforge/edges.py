"""Canny edge detection on normalized depth maps."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

SIGMA = 1.0
LOW = 0.05
HIGH = 0.15

# Sobel response / 8 estimates the per-pixel slope. A [0, 1]-valued image
# has slope at most 0.5 along each axis, so magnitudes stay below 1/sqrt(2).
_MAG_SCALE = math.sqrt(2.0) / 8.0


def gradient_magnitude(image, sigma=SIGMA):
    """Gaussian-smoothed Sobel gradients; magnitude scaled into [0, 1]."""
    smooth = ndimage.gaussian_filter(np.asarray(image, dtype=np.float64), sigma, mode="nearest")
    gy = ndimage.sobel(smooth, axis=0, mode="nearest")
    gx = ndimage.sobel(smooth, axis=1, mode="nearest")
    return np.hypot(gx, gy) * _MAG_SCALE, gx, gy


def _non_max_suppression(mag, gx, gy):
    H, W = mag.shape
    p = np.pad(mag, 1, mode="edge")
    angle = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    r, c = np.mgrid[1 : H + 1, 1 : W + 1]
    # neighbor offsets (drow, dcol) along the gradient for the four direction bins
    dr = np.zeros((H, W), dtype=np.int64)
    dc = np.zeros((H, W), dtype=np.int64)
    horiz = (angle < 22.5) | (angle >= 157.5)
    diag = (angle >= 22.5) & (angle < 67.5)
    vert = (angle >= 67.5) & (angle < 112.5)
    anti = (angle >= 112.5) & (angle < 157.5)
    dc[horiz] = 1
    dr[diag], dc[diag] = 1, 1
    dr[vert] = 1
    dr[anti], dc[anti] = 1, -1
    n1 = p[r + dr, c + dc]
    n2 = p[r - dr, c - dc]
    return np.where((mag >= n1) & (mag >= n2), mag, 0.0)


def canny(image, sigma=SIGMA, low=LOW, high=HIGH):
    """Binary edge map with hysteresis thresholds on the [0, 1] magnitude scale."""
    mag, gx, gy = gradient_magnitude(image, sigma)
    thin = _non_max_suppression(mag, gx, gy)
    weak = thin >= low
    if not weak.any():
        return np.zeros(mag.shape, dtype=bool)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    strong_labels = np.unique(labels[thin >= high])
    keep = np.zeros(n + 1, dtype=bool)
    keep[strong_labels] = True
    keep[0] = False
    return keep[labels]


def detect_depth_edges(depth, mask=None, sigma=SIGMA, low=LOW, high=HIGH):
    """Depth-discontinuity map for one view.

    Background pixels are treated as infinitely far (depth 1) so that
    silhouettes register as discontinuities.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if mask is not None:
        depth = np.where(mask, depth, 1.0)
    return canny(depth, sigma, low, high)
