import os

import numpy as np
import pytest

from ptxens import synth
from ptxens.imgio import load_image, load_manifest
from ptxens.metrics import ScoredSample, auc, roc_curve
from ptxens.synth import SynthConfig, generate, write_dataset


def test_generate_counts_and_order():
    cfg = SynthConfig(n_negative=5, n_positive=3, image_size=32)
    images, labels = generate(cfg, seed=0)
    assert labels == [0] * 5 + [1] * 3
    assert len(images) == 8
    for img in images:
        assert (img.width, img.height, img.max_value) == (32, 32, 255)


def test_generate_deterministic():
    cfg = SynthConfig(n_negative=10, n_positive=10, image_size=32)
    a, la = generate(cfg, seed=7)
    b, lb = generate(cfg, seed=7)
    assert la == lb
    for x, y in zip(a, b):
        assert np.array_equal(x.pixels, y.pixels)


def test_generate_seed_changes_content():
    cfg = SynthConfig(n_negative=2, n_positive=2, image_size=32)
    a, _ = generate(cfg, seed=1)
    b, _ = generate(cfg, seed=2)
    assert not np.array_equal(a[0].pixels, b[0].pixels)


def test_pixels_within_range():
    cfg = SynthConfig(n_negative=6, n_positive=6, image_size=48,
                      blob_contrast=0.9, noise_sigma=0.2)
    images, _ = generate(cfg, seed=3)
    for img in images:
        assert img.pixels.min() >= 0
        assert img.pixels.max() <= 255


def _mean_abs_contrast(images_a, images_b):
    da = np.mean([i.pixels.astype(float).mean() for i in images_a])
    db = np.mean([i.pixels.astype(float).mean() for i in images_b])
    return abs(da - db)


def test_zero_contrast_removes_class_signal():
    """With blob_contrast 0 both classes come from the same distribution, so a
    mean-intensity detector stays near chance."""
    cfg = SynthConfig(n_negative=40, n_positive=40, image_size=32,
                      blob_contrast=0.0)
    images, labels = generate(cfg, seed=5)
    samples = [ScoredSample(score=img.pixels.astype(float).mean(), label=lab)
               for img, lab in zip(images, labels)]
    a = auc(roc_curve(samples))
    assert 0.3 < a < 0.7


def test_positive_contrast_is_detectable():
    """A crude bright-peak detector separates classes once blobs have contrast."""
    cfg = SynthConfig(n_negative=40, n_positive=40, image_size=32,
                      blob_radius_range=(4.0, 8.0), blob_contrast=0.5,
                      texture_scales=(2, 4))
    images, labels = generate(cfg, seed=6)
    samples = []
    for img, lab in zip(images, labels):
        pix = img.pixels.astype(float)
        samples.append(ScoredSample(score=float(pix.max() - pix.mean()), label=lab))
    assert auc(roc_curve(samples)) > 0.9


def test_blob_geometry_after_downsampling():
    """Radius-2 blobs at size 128 all but vanish under a 4x downsample while
    radius-10 blobs keep a multi-pixel footprint."""
    from ptxens.augment import resize_bilinear

    def footprints(radius):
        cfg = SynthConfig(n_negative=1, n_positive=30, image_size=128,
                          blob_radius_range=(radius, radius), blob_contrast=0.8,
                          noise_sigma=0.0, texture_scales=(2,))
        images, labels = generate(cfg, seed=8)
        sizes = []
        for img, lab in zip(images, labels):
            if lab != 1:
                continue
            small = resize_bilinear(img, 32, 32).pixels.astype(float)
            sizes.append(int((small > np.median(small) + 40.0).sum()))
        return sizes

    assert np.median(footprints(2.0)) <= 1
    assert np.median(footprints(10.0)) >= 4


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(n_negative=0, n_positive=1)
    with pytest.raises(ValueError):
        SynthConfig(n_negative=1, n_positive=1, blob_radius_range=(5.0, 4.0))
    with pytest.raises(ValueError):
        SynthConfig(n_negative=1, n_positive=1, image_size=16,
                    blob_radius_range=(2.0, 9.0))
    with pytest.raises(ValueError):
        SynthConfig(n_negative=1, n_positive=1, blob_contrast=1.5)


def test_write_dataset_round_trip(tmp_path):
    cfg = SynthConfig(n_negative=3, n_positive=2, image_size=16,
                      blob_radius_range=(2.0, 4.0))
    manifest = write_dataset(cfg, 9, tmp_path)
    entries = load_manifest(manifest)
    assert len(entries) == 5
    assert [e.label for e in entries] == [0, 0, 0, 1, 1]
    images, _ = generate(cfg, 9)
    for i, e in enumerate(entries):
        img = load_image(os.path.join(tmp_path, e.path))
        assert np.array_equal(img.pixels, images[i].pixels)
