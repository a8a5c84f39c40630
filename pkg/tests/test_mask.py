import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from camotion.errors import FormatError, ParameterError
from camotion.mask import (
    Mask,
    axis_energy_ratio,
    generate_mask,
    is_broadband,
    load_mask,
    save_mask,
    spectral_report,
)


def test_pseudorandom_half_open():
    m = generate_mask("pseudorandom", 256, 256, 0.5, seed=7)
    assert 0.45 <= m.open_fraction <= 0.55
    assert set(np.unique(m.pattern)) <= {0, 1}


def test_seeds_give_different_patterns():
    a = generate_mask("pseudorandom", 32, 32, 0.5, seed=1)
    b = generate_mask("pseudorandom", 32, 32, 0.5, seed=2)
    assert np.any(a.pattern != b.pattern)


@pytest.mark.parametrize("family", ["pseudorandom", "mls-separable", "circular"])
def test_deterministic(family):
    a = generate_mask(family, 40, 56, 0.3, seed=11)
    b = generate_mask(family, 40, 56, 0.3, seed=11)
    assert np.array_equal(a.pattern, b.pattern)


def test_circular_is_centered_disk_and_ignores_seed():
    a = generate_mask("circular", 64, 64, 0.4, seed=1)
    b = generate_mask("circular", 64, 64, 0.4, seed=99)
    assert np.array_equal(a.pattern, b.pattern)
    yy, xx = np.nonzero(a.pattern)
    assert yy.mean() == pytest.approx(31.5)
    assert xx.mean() == pytest.approx(31.5)
    # disk: every pixel closer to the center than the farthest open pixel is open
    r = np.hypot(yy - 31.5, xx - 31.5).max()
    gy, gx = np.mgrid[:64, :64]
    inside = np.hypot(gy - 31.5, gx - 31.5) <= r
    assert np.array_equal(inside, a.pattern.astype(bool))
    assert a.open_fraction == pytest.approx(0.4, abs=0.01)


@given(
    family=st.sampled_from(["pseudorandom", "mls-separable", "circular"]),
    h=st.integers(8, 70),
    w=st.integers(8, 70),
    frac=st.floats(0.05, 0.95),
    seed=st.integers(0, 2**63 - 1),
)
@settings(max_examples=40, deadline=None)
def test_mask_invariants(family, h, w, frac, seed):
    m = generate_mask(family, h, w, frac, seed)
    assert m.shape == (h, w)
    assert np.all((m.pattern == 0) | (m.pattern == 1))
    assert abs(m.open_fraction - m.pattern.sum() / (h * w)) <= 1.0 / (h * w)


@pytest.mark.parametrize(
    "args",
    [("pseudorandom", 4, 32, 0.5), ("pseudorandom", 32, 32, 0.0), ("pseudorandom", 32, 32, 1.0), ("bogus", 32, 32, 0.5)],
)
def test_parameter_errors(args):
    with pytest.raises(ParameterError):
        generate_mask(*args, seed=0)


def test_mask_is_immutable():
    m = generate_mask("pseudorandom", 16, 16, 0.5, 0)
    with pytest.raises(ValueError):
        m.pattern[0, 0] = 1


def test_all_ones_spectrum():
    ones = Mask(np.ones((32, 32), dtype=np.uint8), "custom", 0, 1.0)
    rep = spectral_report(ones)
    assert rep.min_magnitude == pytest.approx(0.0, abs=1e-9)
    assert rep.min_magnitude <= rep.mean_magnitude
    # everything except DC is below threshold
    assert rep.fraction_below_threshold == pytest.approx(1 - 1 / 1024)
    assert not is_broadband(rep, 0.5)
    assert not is_broadband(rep, 0.99)


def test_is_broadband_trivial():
    from camotion.mask import SpectralReport

    assert is_broadband(SpectralReport(1.0, 2.0, 0.0, 0.1), 0.0)


def test_pseudorandom_broadband_at_64():
    # calibrated: 20 seeds at 64x64 give a mean fraction of 0.0045 (max 0.0105)
    fractions = [spectral_report(generate_mask("pseudorandom", 64, 64, 0.5, s)).fraction_below_threshold for s in range(20)]
    assert np.mean(fractions) < 0.01
    assert max(fractions) < 0.02
    assert is_broadband(spectral_report(generate_mask("pseudorandom", 64, 64, 0.5, 3)), 0.01)


def test_pseudorandom_256_fraction_calibrated():
    # the DC-relative threshold grows like N while typical bins grow like sqrt(N);
    # a Rayleigh model predicts 1 - exp(-(1e-3 * N/2)^2 / (N/4)) = 0.0636 at 256x256
    rep = spectral_report(generate_mask("pseudorandom", 256, 256, 0.5, 7))
    assert 0.05 < rep.fraction_below_threshold < 0.08
    assert rep.min_magnitude > 0


@pytest.mark.parametrize("n", [64, 256])
def test_circular_has_more_dropouts(n):
    circ = spectral_report(generate_mask("circular", n, n, 0.5, 0))
    rand = spectral_report(generate_mask("pseudorandom", n, n, 0.5, 0))
    assert circ.fraction_below_threshold > rand.fraction_below_threshold


def test_mls_axis_response():
    m = generate_mask("mls-separable", 256, 256, 0.5, 3)
    assert axis_energy_ratio(m) > 1.0
    # pseudorandom masks have no preferred axes
    assert axis_energy_ratio(generate_mask("pseudorandom", 256, 256, 0.5, 3)) == pytest.approx(1.0, abs=0.1)


def test_save_load_roundtrip(tmp_path):
    m = generate_mask("pseudorandom", 24, 40, 0.5, seed=5)
    path = tmp_path / "m.pgm"
    save_mask(m, path)
    meta = json.loads((tmp_path / "m.json").read_text())
    assert meta == {"family": "pseudorandom", "seed": 5, "open_fraction": m.open_fraction, "height": 24, "width": 40}
    assert path.read_bytes().startswith(b"P5\n40 24\n255\n")
    back = load_mask(path)
    assert np.array_equal(back.pattern, m.pattern)
    assert back.family == "pseudorandom" and back.seed == 5


def test_load_rejects_grey_levels(tmp_path):
    from camotion.pgm import write_pgm

    write_pgm(tmp_path / "g.pgm", np.full((8, 8), 0.5))
    with pytest.raises(FormatError):
        load_mask(tmp_path / "g.pgm")
