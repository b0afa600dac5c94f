import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pie.metrics import train_classifier
from pie.synthdata import (BlobImageSpec, LatentWorld, PgmError, decode_image, default_latent_world,
                           disk_mask, encode_image, make_dataset, read_image, render_blob, roi_mask,
                           sample_latent, write_dataset, write_image)


def test_sample_latent_zero_variance_hits_mean():
    w = LatentWorld(means=np.array([[1.0, 2.0], [0.0, 0.0]]), var=1e-300, priors=np.array([0.5, 0.5]),
                    names=("a", "b"))
    np.testing.assert_allclose(sample_latent(w, "a", np.random.default_rng(0)), [1.0, 2.0], atol=1e-140)


def test_sample_latent_covariance():
    w = default_latent_world(3, 2.0, 0.7)
    rng = np.random.default_rng(1)
    xs = np.stack([sample_latent(w, 1, rng) for _ in range(100_000)])
    cov = np.cov(xs.T)
    np.testing.assert_allclose(np.diag(cov), 0.7, rtol=0.05)
    assert np.max(np.abs(cov - np.diag(np.diag(cov)))) < 0.05 * 0.7


def test_sample_latent_seeded():
    w = default_latent_world(5)
    assert np.array_equal(sample_latent(w, 0, np.random.default_rng(9)), sample_latent(w, 0, np.random.default_rng(9)))
    with pytest.raises(ValueError):
        sample_latent(w, "unknown", np.random.default_rng(0))


def test_render_blob_background_and_peak():
    spec = BlobImageSpec(noise=0.0)
    bg = render_blob(spec, 0.0)
    cols = np.arange(spec.size)
    np.testing.assert_allclose(bg, np.tile(spec.background + spec.gradient * (cols - spec.center[1]) / spec.size, (spec.size, 1)))
    full = render_blob(spec, 1.0)
    assert full[spec.center] == pytest.approx(min(1.0, spec.background + spec.peak))
    with pytest.raises(ValueError):
        render_blob(spec, 1.2)


def test_roi_intensity_increases_with_severity():
    spec = BlobImageSpec(noise=0.0)
    m = disk_mask(spec.size, spec.center, spec.r_max)
    means = [render_blob(spec, s)[m > 0].mean() for s in np.linspace(0, 1, 5)]
    assert all(b > a for a, b in zip(means, means[1:]))


def test_make_dataset_counts_and_labels():
    spec = BlobImageSpec()
    assert len(make_dataset(spec, 0, rng=np.random.default_rng(0))) == 0
    ds = make_dataset(spec, 100, severities=(0.0, 1.0), rng=np.random.default_rng(0))
    assert len(ds) == 200 and np.sum(ds.labels == 0) == 100 and np.sum(ds.labels == 1) == 100
    ds2 = make_dataset(spec, 3, rng=np.random.default_rng(0))
    assert np.array_equal(ds2.labels, (ds2.severities >= 0.5).astype(int))


def test_dataset_dump_is_byte_identical(tmp_path):
    spec = BlobImageSpec()
    blobs = []
    for run in ("a", "b"):
        ds = make_dataset(spec, 2, rng=np.random.default_rng(3))
        manifest = write_dataset(ds, str(tmp_path / run))
        files = sorted((tmp_path / run).iterdir())
        blobs.append([f.read_bytes() for f in files])
        rows = [json.loads(line) for line in open(manifest)]
        assert set(rows[0]) == {"path", "class", "severity", "seed"}
    assert blobs[0] == blobs[1]


def test_default_dataset_is_linearly_separable():
    ds = make_dataset(BlobImageSpec(), 100, rng=np.random.default_rng(0))
    assert train_classifier(ds).heldout_accuracy >= 0.95


def test_disk_mask_cases():
    assert np.all(disk_mask(32, (16, 16), 100.0) == 1.0)
    tiny = disk_mask(32, (16, 16), 1e-9)
    assert tiny.sum() <= 1.0 and tiny[16, 16] == 1.0
    frac = disk_mask(32, (16, 16), 8.0).mean()
    ring = 2 * math.pi * 8 / 1024  # one pixel ring of circumference
    assert abs(frac - math.pi * 64 / 1024) <= ring
    soft = disk_mask(32, (16, 16), 8.0, 2.0)
    assert soft.min() >= 0.0 and soft.max() <= 1.0
    assert soft[16, 16] == 1.0 and soft[16, 16 + 11] == 0.0 and 0 < soft[16, 16 + 8] < 1
    with pytest.raises(ValueError):
        disk_mask(32, (16, 16), 0.0)


def test_roi_mask_covers_full_blob():
    spec = BlobImageSpec(noise=0.0)
    lesion = render_blob(spec, 1.0) - render_blob(spec, 0.0)
    assert np.all(roi_mask(spec)[lesion > 0] == 1.0)


def test_pgm_header_and_payload():
    data = encode_image(np.zeros((32, 32)))
    assert data.startswith(b"P5\n32 32\n255\n") and data[13:] == bytes(1024) and len(data) == 13 + 1024


def test_pgm_roundtrip_and_stability(tmp_path):
    img = np.random.default_rng(0).uniform(size=(7, 5))
    path = tmp_path / "a.pgm"
    write_image(str(path), img)
    back = read_image(str(path))
    assert back.shape == (7, 5)
    assert np.max(np.abs(back - img)) <= 1 / 255 + 1e-12
    assert encode_image(back) == path.read_bytes()


def test_pgm_errors():
    data = encode_image(np.zeros((4, 4)))
    with pytest.raises(PgmError, match="expected 16 payload bytes, got 10"):
        decode_image(data[:-6])
    with pytest.raises(PgmError) as exc:
        decode_image(b"P2\n4 4\n255\n" + bytes(16))
    assert exc.value.offset == 0
    with pytest.raises(PgmError):
        decode_image(b"P5\n4 x\n255\n" + bytes(16))
    with pytest.raises(ValueError):
        encode_image(np.full((2, 2), 1.5))


def test_pgm_skips_comments():
    img = decode_image(b"P5\n# a comment\n2 1\n255\n\x00\xff")
    np.testing.assert_array_equal(img, [[0.0, 1.0]])


@given(arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9)), elements=st.floats(0, 1)))
def test_pgm_write_read_write_is_byte_stable(img):
    once = encode_image(img)
    back = decode_image(once)
    assert encode_image(back) == once
    assert np.max(np.abs(back - img)) <= 1 / 255 + 1e-12


@given(st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_rendered_pixels_are_clamped(severity, seed):
    img = render_blob(BlobImageSpec(noise=0.3), severity, np.random.default_rng(seed))
    assert img.min() >= 0.0 and img.max() <= 1.0
