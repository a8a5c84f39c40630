import numpy as np
import pytest

from camotion.attack import LeakageReport, autocorrelation, family_breakdown, leakage
from camotion.errors import DimensionError
from camotion.mask import Mask, delta_mask, generate_mask
from camotion.optics import CaptureConfig, capture


def spectral_cosine(scene, mask):
    """Independent route: leakage cosine written directly in the Fourier domain."""
    p = np.abs(np.fft.fft2(scene - scene.mean())) ** 2
    a2 = np.abs(np.fft.fft2(mask)) ** 2
    return np.sum(p * p * a2) / np.sqrt(np.sum(p * p) * np.sum(p * p * a2 * a2))


def test_autocorrelation_peak_at_center(rng):
    r = autocorrelation(rng.random((32, 48)))
    assert np.unravel_index(np.argmax(r), r.shape) == (16, 24)


def test_autocorrelation_white_noise_near_delta(rng):
    r = autocorrelation(rng.random((128, 128)))
    off = r.copy()
    off[64, 64] = 0
    assert np.abs(off).max() <= 0.2 * r[64, 64]


def test_autocorrelation_even_symmetric(rng):
    r = autocorrelation(rng.random((64, 64)))
    # about the center of an even grid: r[c + k] == r[c - k]
    flipped = np.roll(r[::-1, ::-1], (1, 1), axis=(0, 1))
    assert np.abs(r - flipped).max() <= 1e-6 * np.abs(r).max()


def test_autocorrelation_matches_direct_sum(rng):
    f = rng.random((12, 10))
    g = f - f.mean()
    direct = np.array([[np.sum(g * np.roll(g, (-dy, -dx), axis=(0, 1))) for dx in range(10)] for dy in range(12)])
    assert np.allclose(autocorrelation(f), np.fft.fftshift(direct))


def test_delta_mask_similarity_is_one(scene):
    s = scene(64)
    assert leakage(s, capture(s, delta_mask(64, 64))).autocorr_similarity == pytest.approx(1.0, abs=1e-6)


def test_all_ones_mask_destroys_scene(scene):
    s = scene(32)
    ca = capture(s, Mask(np.ones((32, 32), dtype=np.uint8), "custom", 0, 1.0))
    assert leakage(s, ca).autocorr_similarity == pytest.approx(0.0, abs=1e-6)


def test_leakage_matches_spectral_oracle(scene):
    s = scene(64)
    for seed in range(3):
        m = generate_mask("pseudorandom", 64, 64, 0.5, seed)
        got = leakage(s, capture(s, m)).autocorr_similarity
        assert got == pytest.approx(spectral_cosine(s, m.as_float()), abs=1e-9)


def test_leakage_dimension_mismatch():
    with pytest.raises(DimensionError):
        leakage(np.zeros((8, 8)), np.zeros((8, 9)))


def test_noise_degrades_leakage(scene):
    s = scene(64)
    clean, noisy = [], []
    for seed in range(20):
        m = generate_mask("pseudorandom", 64, 64, 0.5, seed)
        clean.append(leakage(s, capture(s, m)).autocorr_similarity)
        noisy.append(leakage(s, capture(s, m, CaptureConfig(noise_sigma=0.1, seed=seed))).autocorr_similarity)
    assert np.mean(clean) > np.mean(noisy)


def test_similarity_in_range(rng):
    for _ in range(5):
        rep = leakage(rng.random((16, 16)), rng.standard_normal((16, 16)))
        assert -1.0 <= rep.autocorr_similarity <= 1.0
    with pytest.raises(ValueError):
        LeakageReport(1.5)


def test_family_breakdown(scene):
    rep = family_breakdown(scene(32), seeds=range(3))
    assert set(rep.per_family) == {"pseudorandom", "mls-separable", "circular"}
    assert rep.autocorr_similarity == pytest.approx(np.mean(list(rep.per_family.values())))
    assert rep.to_dict()["per_family"] == rep.per_family
