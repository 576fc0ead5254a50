"""Single-frame ROI Align with border-clamped bilinear sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_POOL = 7
DEFAULT_SAMPLING_RATIO = 2


@dataclass(frozen=True)
class RoiBox:
    """Proposal rectangle in feature-map coordinates (pixel centers at integers)."""

    x1: float
    y1: float
    x2: float
    y2: float
    scale: float = 1.0

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box {coords}")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"inverted box {coords}")

    @classmethod
    def from_image(cls, x1, y1, x2, y2, scale: float) -> "RoiBox":
        """Map an image-space box onto a feature map with the given scale (e.g. 1/16)."""
        return cls(x1 * scale, y1 * scale, x2 * scale, y2 * scale, scale)


def _corners(height: int, width: int, x, y):
    """Clamp coordinates and return neighbor indices plus the four weights."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, width - 1)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, height - 1)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    lx = x - x0
    ly = y - y0
    hx = 1.0 - lx
    hy = 1.0 - ly
    return (y0, x0, y1, x1), (hy * hx, hy * lx, ly * hx, ly * lx)


def bilinear_sample(fmap: np.ndarray, x, y) -> np.ndarray:
    """Interpolate the channel vector of ``fmap`` (H, W, C) at column x, row y.

    ``x`` and ``y`` may be arrays of equal shape; the result then has that
    shape plus a trailing channel axis.
    """
    fmap = np.asarray(fmap)
    if not (math.isfinite(np.min(x)) and math.isfinite(np.max(x))
            and math.isfinite(np.min(y)) and math.isfinite(np.max(y))):
        raise ValueError("bilinear_sample: non-finite coordinate")
    height, width = fmap.shape[:2]
    (y0, x0, y1, x1), (w00, w01, w10, w11) = _corners(height, width, x, y)
    dt = fmap.dtype
    out = w00.astype(dt)[..., None] * fmap[y0, x0]
    out = out + w01.astype(dt)[..., None] * fmap[y0, x1]
    out = out + w10.astype(dt)[..., None] * fmap[y1, x0]
    out = out + w11.astype(dt)[..., None] * fmap[y1, x1]
    return out


def bilinear_sample_vjp(g, fmap_shape, x, y, dtype=np.float64) -> np.ndarray:
    """Scatter the cotangent ``g`` (..., C) back onto a map of ``fmap_shape``."""
    height, width, channels = fmap_shape
    g = np.asarray(g, dtype=dtype).reshape(-1, channels)
    (y0, x0, y1, x1), weights = _corners(height, width, x, y)
    grad = np.zeros((height, width, channels), dtype=dtype)
    for (yy, xx), wt in zip(((y0, x0), (y0, x1), (y1, x0), (y1, x1)), weights):
        np.add.at(grad, (yy.ravel(), xx.ravel()), wt.reshape(-1, 1).astype(dtype) * g)
    return grad


def sample_grid(box: RoiBox, h: int, w: int, sampling_ratio: int):
    """Sample coordinates of shape (h, w, r, r) for every bin of ``box``."""
    if h < 1 or w < 1:
        raise ValueError("pool size must be >= 1")
    if sampling_ratio < 1:
        raise ValueError("sampling_ratio must be >= 1")
    bin_h = (box.y2 - box.y1) / h
    bin_w = (box.x2 - box.x1) / w
    r = sampling_ratio
    offs = (np.arange(r) + 0.5)
    ys = box.y1 + np.arange(h)[:, None] * bin_h + offs[None, :] * bin_h / r
    xs = box.x1 + np.arange(w)[:, None] * bin_w + offs[None, :] * bin_w / r
    yy = np.broadcast_to(ys[:, None, :, None], (h, w, r, r))
    xx = np.broadcast_to(xs[None, :, None, :], (h, w, r, r))
    return xx, yy


def roi_align(fmap, box: RoiBox, h: int = DEFAULT_POOL, w: int = DEFAULT_POOL,
              sampling_ratio: int = DEFAULT_SAMPLING_RATIO) -> np.ndarray:
    """Pool an (h, w, C) grid from ``fmap`` for ``box``.

    Each bin averages ``sampling_ratio**2`` bilinear samples placed at the
    centers of an even sub-grid. Degenerate boxes are legal.
    """
    fmap = np.asarray(fmap)
    if fmap.ndim != 3:
        raise ValueError(f"feature map must be (H, W, C), got {fmap.shape}")
    xx, yy = sample_grid(box, h, w, sampling_ratio)
    samples = bilinear_sample(fmap, xx, yy)  # (h, w, r, r, C)
    acc = np.zeros((h, w, fmap.shape[2]), dtype=fmap.dtype)
    for iy in range(sampling_ratio):
        for ix in range(sampling_ratio):
            acc = acc + samples[:, :, iy, ix]
    return acc / fmap.dtype.type(sampling_ratio * sampling_ratio)


def roi_align_vjp(g, fmap_shape, box: RoiBox, h: int = DEFAULT_POOL, w: int = DEFAULT_POOL,
                  sampling_ratio: int = DEFAULT_SAMPLING_RATIO, dtype=np.float64) -> np.ndarray:
    """Gradient of ``roi_align`` with respect to the feature map."""
    g = np.asarray(g, dtype=dtype)
    xx, yy = sample_grid(box, h, w, sampling_ratio)
    r = sampling_ratio
    gs = np.broadcast_to(g[:, :, None, None, :], (h, w, r, r, g.shape[-1])) / (r * r)
    return bilinear_sample_vjp(gs, fmap_shape, xx, yy, dtype=dtype)
