"""Synthetic grayscale datasets with a scale-sensitive positive class.

Negatives are smooth multi-scale random textures plus pixel noise.
Positives add one low-contrast elliptical blob whose radius is drawn from
a range wide enough that aggressive downsampling erases the small blobs
while the large ones survive — so classifiers fed different input sizes
genuinely see different amounts of evidence.  Everything is a pure
function of (config, seed).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .imgio import GrayImage, ManifestEntry, save_image, save_manifest
from .rng import make_rng

MAX_VALUE = 255
_TEXTURE_AMP = 0.06  # per-scale amplitude of the smooth background fields


@dataclass(frozen=True)
class SynthConfig:
    n_negative: int
    n_positive: int
    image_size: int = 128
    blob_radius_range: tuple = (2.0, 10.0)
    blob_contrast: float = 0.25
    noise_sigma: float = 0.02
    texture_scales: tuple = (4, 8, 16)

    def __post_init__(self):
        object.__setattr__(self, "blob_radius_range", tuple(self.blob_radius_range))
        object.__setattr__(self, "texture_scales", tuple(self.texture_scales))
        if self.n_negative < 1 or self.n_positive < 1:
            raise ValueError("need at least one image per class")
        if self.image_size < 8:
            raise ValueError("image_size must be >= 8")
        lo, hi = self.blob_radius_range
        if not 1.0 <= lo <= hi or hi >= self.image_size / 2:
            raise ValueError("blob radii must satisfy 1 <= lo <= hi < image_size/2")
        if not 0.0 <= self.blob_contrast <= 1.0:
            raise ValueError("blob_contrast must be in [0, 1]")
        if not 0.0 <= self.noise_sigma <= 1.0:
            raise ValueError("noise_sigma must be in [0, 1]")
        if not self.texture_scales or min(self.texture_scales) < 2:
            raise ValueError("texture_scales must all be >= 2")


def _upsample_field(coarse: np.ndarray, size: int) -> np.ndarray:
    """Bilinear stretch of a coarse grid to size x size (half-pixel centres)."""
    g = coarse.shape[0]
    coords = (np.arange(size, dtype=np.float64) + 0.5) * (g / size) - 0.5
    coords = np.clip(coords, 0.0, g - 1.0)
    i0 = np.floor(coords).astype(np.int64)
    i1 = np.minimum(i0 + 1, g - 1)
    frac = coords - i0
    rows = coarse[i0][:, i1] * frac[None, :] + coarse[i0][:, i0] * (1.0 - frac[None, :])
    rows1 = coarse[i1][:, i1] * frac[None, :] + coarse[i1][:, i0] * (1.0 - frac[None, :])
    return rows * (1.0 - frac[:, None]) + rows1 * frac[:, None]


def _texture(config: SynthConfig, rng) -> np.ndarray:
    size = config.image_size
    field = np.full((size, size), 0.5, dtype=np.float64)
    for scale in config.texture_scales:
        coarse = rng.normal(0.0, 1.0, size=(scale, scale))
        field += _TEXTURE_AMP * _upsample_field(coarse, size)
    return field


def _add_blob(field: np.ndarray, config: SynthConfig, rng) -> None:
    """Stamp one cosine-tapered elliptical bump, kept fully inside the frame."""
    size = config.image_size
    lo, hi = config.blob_radius_range
    radius = float(rng.uniform(lo, hi))
    margin = radius + size // 8 + 2
    if 2 * margin >= size - 1:
        margin = radius + 1
    aspect_cap = min(1.3, margin / radius)
    aspect = float(rng.uniform(1.0 / aspect_cap, aspect_cap))
    theta = float(rng.uniform(0.0, np.pi))
    cy = float(rng.uniform(margin, size - 1 - margin))
    cx = float(rng.uniform(margin, size - 1 - margin))

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    ct, st = np.cos(theta), np.sin(theta)
    u = (dx * ct + dy * st) / (radius * aspect)
    v = (-dx * st + dy * ct) / (radius / aspect)
    d = np.sqrt(u * u + v * v)
    taper = np.where(d < 1.0, 0.5 * (1.0 + np.cos(np.pi * np.minimum(d, 1.0))), 0.0)
    field += config.blob_contrast * taper


def generate(config: SynthConfig, seed: int):
    """Returns (images, labels): n_negative label-0 then n_positive label-1."""
    rng = make_rng(seed, "synth")
    images, labels = [], []
    for label in (0, 1):
        count = config.n_negative if label == 0 else config.n_positive
        for _ in range(count):
            field = _texture(config, rng)
            if label == 1:
                _add_blob(field, config, rng)
            field += rng.normal(0.0, config.noise_sigma, size=field.shape)
            pixels = np.clip(np.floor(field * MAX_VALUE + 0.5), 0, MAX_VALUE)
            images.append(GrayImage(width=config.image_size, height=config.image_size,
                                    max_value=MAX_VALUE, pixels=pixels.astype(np.int32)))
            labels.append(label)
    return images, labels


def write_dataset(config: SynthConfig, seed: int, dirpath) -> str:
    """Write PGM files plus a manifest; returns the manifest path."""
    images, labels = generate(config, seed)
    img_dir = os.path.join(dirpath, "images")
    os.makedirs(img_dir, exist_ok=True)
    entries = []
    for i, (img, label) in enumerate(zip(images, labels)):
        rel = os.path.join("images", f"img_{i:05d}.pgm")
        save_image(img, os.path.join(dirpath, rel))
        entries.append(ManifestEntry(path=rel, label=label))
    manifest = os.path.join(dirpath, "manifest.csv")
    save_manifest(entries, manifest)
    return manifest
