"""Multi-resolution push-pull hole filling."""

from __future__ import annotations

import numpy as np


def _pull(color_sum, weight_sum):
    H, W = weight_sum.shape
    ph, pw = H % 2, W % 2
    if ph or pw:
        color_sum = np.pad(color_sum, ((0, ph), (0, pw), (0, 0)))
        weight_sum = np.pad(weight_sum, ((0, ph), (0, pw)))
    h, w = weight_sum.shape[0] // 2, weight_sum.shape[1] // 2
    cs = color_sum.reshape(h, 2, w, 2, -1).sum(axis=(1, 3))
    ws = weight_sum.reshape(h, 2, w, 2).sum(axis=(1, 3))
    return cs, ws


def push_pull(colors, valid, weights=None):
    """Fill invalid texels from coarser averages of valid ones.

    ``weights`` (defaults to 1 on valid texels) weight each valid texel in
    the coarse averages. Valid texels are returned unchanged. Every filled
    value is a weighted mean of valid colors. Requires at least one valid
    texel.
    """
    colors = np.asarray(colors, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    w = np.where(valid, 1.0 if weights is None else np.asarray(weights, dtype=np.float64), 0.0)
    # valid texels with zero weight still count as data
    w = np.where(valid & (w <= 0), 1e-12, w)
    if not valid.any():
        raise ValueError("push_pull needs at least one valid texel")
    out = _fill(colors * w[..., None], w)
    out[valid] = colors[valid]
    return out


def _fill(color_sum, weight_sum):
    H, W = weight_sum.shape
    have = weight_sum > 0
    color = np.zeros_like(color_sum)
    color[have] = color_sum[have] / weight_sum[have][:, None]
    if have.all():
        return color
    cs, ws = _pull(color_sum, weight_sum)
    coarse = _fill(cs, ws)
    up = np.repeat(np.repeat(coarse, 2, axis=0), 2, axis=1)[:H, :W]
    color[~have] = up[~have]
    return color
