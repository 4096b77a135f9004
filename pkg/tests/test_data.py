import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reside.data import (
    SHEPP_LOGAN,
    MaskSpec,
    PhantomSpec,
    gen_mask,
    gen_phantom,
    nmse_db,
    synthesize_measurements,
)
from reside.operator import ForwardOperator, apply_forward

from .conftest import crandn


def ellipse_value(px, py):
    """Scalar point-in-ellipse superposition, clamped to [0, 1]."""
    total = 0.0
    for amp, a, b, x0, y0, deg in SHEPP_LOGAN:
        th = math.radians(deg)
        dx, dy = px - x0, py - y0
        u = dx * math.cos(th) + dy * math.sin(th)
        v = -dx * math.sin(th) + dy * math.cos(th)
        if (u / a) ** 2 + (v / b) ** 2 <= 1.0:
            total += amp
    return min(max(total, 0.0), 1.0)


def test_phantom_magnitude_range_and_real_without_phase():
    img = gen_phantom(PhantomSpec(64, "none"))
    assert np.all(img.imag == 0)
    assert img.real.min() >= 0 and img.real.max() <= 1
    smooth = gen_phantom(PhantomSpec(64, "smooth"))
    assert np.abs(smooth).max() <= 1 + 1e-12
    assert np.abs(smooth.imag).max() > 0.1
    np.testing.assert_allclose(np.abs(smooth), img.real, atol=1e-12)


def test_phantom_matches_pointwise_oracle_at_ellipse_centres():
    n = 128
    img = gen_phantom(PhantomSpec(n, "none")).real
    for _, _, _, x0, y0, _ in SHEPP_LOGAN:
        col = int(round(((x0 + 1) * n - 1) / 2))
        row = int(round(((1 - y0) * n - 1) / 2))
        px = (2 * col + 1) / n - 1
        py = -((2 * row + 1) / n - 1)
        assert img[row, col] == pytest.approx(ellipse_value(px, py), abs=1e-12)


def test_phantom_rejects_small_and_unknown_phase():
    with pytest.raises(ValueError):
        gen_phantom(PhantomSpec(8))
    with pytest.raises(ValueError):
        gen_phantom(PhantomSpec(32, "wild"))


@pytest.mark.parametrize("kind", ["m1", "m2"])
def test_mask_rate_at_full_scale(kind):
    mask = gen_mask(MaskSpec(kind, 1.8, 32, 0), 320, 320)
    assert abs(mask.acceleration - 1.8) <= 0.09


def test_m1_central_lines_and_full_readout():
    mask = gen_mask(MaskSpec("m1", 1.8, 32, 3), 320, 320)
    centred = np.fft.fftshift(mask.keep)
    assert centred[160 - 16 : 160 + 16, :].all()
    rows = centred.any(axis=1)
    np.testing.assert_array_equal(centred[rows], True)


def test_m2_central_block():
    mask = gen_mask(MaskSpec("m2", 1.8, 32, 3), 128, 96)
    centred = np.fft.fftshift(mask.keep)
    assert centred[64 - 16 : 64 + 16, 48 - 16 : 48 + 16].all()
    assert abs(mask.acceleration - 1.8) <= 0.09


def test_full_mask_and_determinism():
    full = gen_mask(MaskSpec("full"), 10, 12)
    assert full.keep.all() and full.acceleration == 1
    a = gen_mask(MaskSpec("m2", 2.0, 8, 11), 40, 40)
    b = gen_mask(MaskSpec("m2", 2.0, 8, 11), 40, 40)
    np.testing.assert_array_equal(a.keep, b.keep)


def test_infeasible_masks_rejected():
    with pytest.raises(ValueError):
        gen_mask(MaskSpec("m1", 4.0, 64, 0), 128, 128)
    with pytest.raises(ValueError):
        gen_mask(MaskSpec("m2", 8.0, 32, 0), 64, 64)
    with pytest.raises(ValueError):
        gen_mask(MaskSpec("m1", 1.8, 200, 0), 128, 128)
    with pytest.raises(ValueError):
        gen_mask(MaskSpec("spiral", 2.0, 8, 0), 32, 32)


def test_noiseless_measurements_equal_forward(rng):
    x = crandn(rng, (32, 32))
    mask = gen_mask(MaskSpec("m2", 2.0, 8, 1), 32, 32)
    y = synthesize_measurements(x, mask, 0.0, 0)
    np.testing.assert_array_equal(y, apply_forward(ForwardOperator(mask), x))


def test_noisy_measurements_zero_off_mask_and_noise_power(rng):
    x = crandn(rng, (64, 64))
    mask = gen_mask(MaskSpec("m2", 2.0, 16, 1), 64, 64)
    clean = synthesize_measurements(x, mask)
    std = 0.3
    powers = []
    for seed in range(50):
        y = synthesize_measurements(x, mask, std, seed)
        assert np.all(y[~mask.keep] == 0)
        powers.append(np.sum(np.abs(y - clean) ** 2) / mask.m)
    assert np.mean(powers) == pytest.approx(2 * std**2, rel=0.05)


def test_nmse_examples(rng):
    x = crandn(rng, (16, 16))
    assert nmse_db(x, np.zeros_like(x)) == pytest.approx(0.0, abs=1e-12)
    assert nmse_db(x, x * (1 - 1e-2)) == pytest.approx(-40.0, abs=1e-9)
    assert nmse_db(x, x) == -300.0
    with pytest.raises(ValueError):
        nmse_db(np.zeros((4, 4)), np.ones((4, 4)))
    with pytest.raises(ValueError):
        nmse_db(x, x[:8])


@settings(max_examples=50, deadline=None)
@given(re=st.floats(-3, 3), im=st.floats(-3, 3))
def test_nmse_of_scaled_copy(re, im):
    c = complex(re, im)
    if abs(1 - c) < 1e-6:
        return
    x = crandn(np.random.default_rng(0), (8, 8))
    assert nmse_db(x, x * c) == pytest.approx(20 * math.log10(abs(1 - c)), abs=1e-9)
