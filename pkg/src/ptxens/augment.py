"""Label-preserving stochastic augmentation for grayscale images.

Each training image is perturbed independently every epoch: an optional
horizontal mirror, a mild rescale about the image centre, a small
translation, and an additive intensity shift.  Geometry is resolved in one
bilinear resampling pass with edge replication, so the output keeps the
input's size and intensity range.  Rotation is deliberately absent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgio import GrayImage


@dataclass(frozen=True)
class AugmentConfig:
    """Sampling intervals for the per-image augmentation parameters."""

    rescale_min: float = 0.875
    rescale_max: float = 1.125
    max_crop_frac: float = 0.125
    flip_prob: float = 0.5
    shift_frac: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.rescale_min <= self.rescale_max:
            raise ValueError("need 0 < rescale_min <= rescale_max")
        if not 0.0 <= self.max_crop_frac < 1.0:
            raise ValueError("max_crop_frac must be in [0, 1)")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")
        if not 0.0 <= self.shift_frac <= 1.0:
            raise ValueError("shift_frac must lie in [0, 1]")


@dataclass(frozen=True)
class AugmentParams:
    """One concrete draw: everything `apply` needs to be deterministic."""

    flip: bool
    scale: float
    crop_dx: float
    crop_dy: float
    shift: float


def sample_params(rng: np.random.Generator, config: AugmentConfig) -> AugmentParams:
    """Draw one parameter set; consumes exactly five variates in a fixed order."""
    flip = bool(rng.random() < config.flip_prob)
    scale = float(rng.uniform(config.rescale_min, config.rescale_max))
    crop_dx = float(rng.uniform(-config.max_crop_frac, config.max_crop_frac))
    crop_dy = float(rng.uniform(-config.max_crop_frac, config.max_crop_frac))
    shift = float(rng.uniform(-config.shift_frac, config.shift_frac))
    return AugmentParams(flip=flip, scale=scale, crop_dx=crop_dx, crop_dy=crop_dy, shift=shift)


def _sample_bilinear(values: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear lookup at float coordinates, clamped to the grid (edge replication)."""
    h, w = values.shape
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    top = values[y0, x0] * (1.0 - fx) + values[y0, x1] * fx
    bot = values[y1, x0] * (1.0 - fx) + values[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def apply(img: GrayImage, params: AugmentParams) -> GrayImage:
    """Transform one image.  Output has the same size and max_value.

    Order: horizontal flip, rescale about the image centre, translate by
    ``(crop_dx * width, crop_dy * height)`` pixels, then add
    ``shift * max_value`` to every pixel.  Geometry is one inverse-mapped
    bilinear resample; out-of-frame reads replicate the nearest edge pixel.
    Results are rounded half-up and clipped to ``[0, max_value]``.
    """
    if params.scale <= 0:
        raise ValueError("scale must be positive")
    values = img.pixels.astype(np.float64)
    if params.flip:
        values = values[:, ::-1]
    h, w = values.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ty = params.crop_dy * h
    tx = params.crop_dx * w
    dst_y, dst_x = np.meshgrid(np.arange(h, dtype=np.float64),
                               np.arange(w, dtype=np.float64), indexing="ij")
    src_y = cy + (dst_y - ty - cy) / params.scale
    src_x = cx + (dst_x - tx - cx) / params.scale
    out = _sample_bilinear(values, src_y, src_x)
    out += params.shift * img.max_value
    out = np.clip(np.floor(out + 0.5), 0, img.max_value)
    return GrayImage(width=img.width, height=img.height, max_value=img.max_value,
                     pixels=out.astype(np.int32))


def resize_bilinear(img: GrayImage, out_w: int, out_h: int) -> GrayImage:
    """Resize with half-pixel-centre bilinear sampling.

    Source coordinates follow ``(i + 0.5) * in / out - 0.5``, clamped to the
    grid, so resizing to the same size reproduces the input exactly.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be positive")
    values = img.pixels.astype(np.float64)
    h, w = values.shape
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    out = _sample_bilinear(values, grid_y, grid_x)
    out = np.clip(np.floor(out + 0.5), 0, img.max_value)
    return GrayImage(width=out_w, height=out_h, max_value=img.max_value,
                     pixels=out.astype(np.int32))
