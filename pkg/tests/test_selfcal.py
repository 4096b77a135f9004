import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reside.data import MaskSpec, PhantomSpec, gen_mask, gen_phantom, synthesize_measurements
from reside.denoiser import TrainSpec
from reside.errors import DivergenceError
from reside.operator import ForwardOperator, apply_forward
from reside.patches import PatchPlan, extract_patch_pairs, patch_corners
from reside.pds import PdsParams
from reside.selfcal import (
    ResideConfig,
    SnrSchedule,
    reside_reconstruct,
    sigma_for_snr,
    snr_at,
    stream_seed,
)

from .conftest import crandn


@pytest.mark.parametrize("t, expected", [(1, 10), (10, 10), (11, 15), (20, 15), (21, 20),
                                         (61, 40), (70, 40), (200, 40)])
def test_progressive_schedule(t, expected):
    assert snr_at(SnrSchedule(), t) == expected


def test_fixed_schedule():
    sched = SnrSchedule.fixed(25.0)
    assert all(snr_at(sched, t) == 25.0 for t in range(1, 80))


def test_schedule_validation():
    with pytest.raises(ValueError):
        snr_at(SnrSchedule(), 0)
    with pytest.raises(ValueError):
        SnrSchedule(period=0)
    with pytest.raises(ValueError):
        SnrSchedule(start_db=30, cap_db=20)


@given(period=st.integers(1, 12), step=st.floats(0, 10), t=st.integers(1, 200))
def test_progressive_is_nondecreasing(period, step, t):
    sched = SnrSchedule(period=period, step_db=step)
    assert snr_at(sched, t + 1) >= snr_at(sched, t)


def test_sigma_examples():
    x = np.zeros((1, 2), complex)
    x[0, 0] = 1.0
    assert sigma_for_snr(x, 20.0) == pytest.approx(0.05, rel=1e-14)
    assert sigma_for_snr(x, 0.0) == pytest.approx(1 / 2, rel=1e-14)
    with pytest.raises(ValueError):
        sigma_for_snr(np.zeros((4, 4)), 10)


def test_sigma_inverts_snr_formula(rng):
    x = crandn(rng, (13, 9))
    for snr in (-3.0, 10.0, 37.5):
        s = sigma_for_snr(x, snr)
        back = 20 * math.log10(np.linalg.norm(x) / (math.sqrt(2 * x.size) * s))
        assert back == pytest.approx(snr, abs=1e-10)


def test_sigma_monte_carlo():
    x = gen_phantom(PhantomSpec(128, "smooth"))
    s = sigma_for_snr(x, 20.0)
    for seed in range(20):
        r = np.random.default_rng(seed)
        noise = s * crandn(r, x.shape)
        measured = 20 * math.log10(np.linalg.norm(x) / np.linalg.norm(noise))
        assert measured == pytest.approx(20.0, abs=0.2)


def test_patch_pairs_identical_for_identical_inputs(rng):
    img = crandn(rng, (20, 30))
    pn, pc = extract_patch_pairs(img, img, PatchPlan(10, 8, 3))
    np.testing.assert_array_equal(pn, pc)
    assert pn.shape == (10, 8, 8, 2)


def test_patch_pairs_aligned_and_in_bounds(rng):
    clean = crandn(rng, (17, 23))
    noisy = clean + 5.0
    plan = PatchPlan(50, 6, 9)
    corners = patch_corners(clean.shape, plan)
    assert np.all(corners >= 0)
    assert np.all(corners[:, 0] + 6 <= 17) and np.all(corners[:, 1] + 6 <= 23)
    pn, pc = extract_patch_pairs(clean, noisy, plan)
    np.testing.assert_allclose(pn[..., 0] - pc[..., 0], 5.0)
    r, c = corners[7]
    np.testing.assert_array_equal(pc[7, ..., 1], clean[r : r + 6, c : c + 6].imag)


def test_patch_determinism_and_size_check(rng):
    plan = PatchPlan(30, 4, 42)
    np.testing.assert_array_equal(patch_corners((16, 16), plan), patch_corners((16, 16), plan))
    with pytest.raises(ValueError):
        patch_corners((8, 16), PatchPlan(1, 9))


def test_stream_seeds_are_distinct_and_stable():
    seeds = {stream_seed(0, t, s) for t in range(1, 20) for s in range(3)}
    assert len(seeds) == 57
    assert stream_seed(5, 3, 1) == stream_seed(5, 3, 1)


def tiny_problem():
    x = gen_phantom(PhantomSpec(32, "smooth"))
    mask = gen_mask(MaskSpec("m2", 1.8, 8, 0), 32, 32)
    return x, ForwardOperator(mask), synthesize_measurements(x, mask)


def tiny_config(**kw):
    base = dict(
        pds=PdsParams(tau2=0.1, iterations=3),
        patches=PatchPlan(4, 12),
        train=TrainSpec(epochs=2, minibatch=2, out_gain=0.01),
        iterations=3,
        master_seed=7,
    )
    base.update(kw)
    return ResideConfig(**base)


def test_reside_trace_and_determinism():
    x, op, y = tiny_problem()
    records = []
    a = reside_reconstruct(op, y, tiny_config(), records.append)
    b = reside_reconstruct(op, y, tiny_config())
    assert a.tobytes() == b.tobytes()
    assert [r.t for r in records] == [1, 2, 3]
    x0 = np.linalg.norm(op.adjoint(y))
    for r in records:
        assert math.isfinite(r.train_loss) and r.sigma > 0
        assert 0 < np.linalg.norm(r.x) < 10 * x0
    assert records[0].snr_db == 10.0


def test_single_iteration_is_one_training_round_and_one_step():
    x, op, y = tiny_problem()
    out = reside_reconstruct(op, y, tiny_config(iterations=1))
    assert out.shape == x.shape and not np.allclose(out, op.adjoint(y))


def test_near_identity_denoiser_behaves_like_plain_pds():
    x, op, y = tiny_problem()
    # start away from data consistency so the residual has something to do
    cfg = tiny_config(schedule=SnrSchedule.fixed(100.0), iterations=10)
    res = []
    reside_reconstruct(op, y, cfg,
                       lambda r: res.append(np.linalg.norm(apply_forward(op, r.x) - y)))
    assert res[-1] <= res[0] + 1e-9


def test_divergence_is_reported(monkeypatch):
    from reside import selfcal

    x, op, y = tiny_problem()
    monkeypatch.setattr(selfcal, "denoise_image", lambda net, u: np.full(u.shape, np.nan))
    with pytest.raises(DivergenceError):
        reside_reconstruct(op, y, tiny_config(iterations=1))


def test_config_validation():
    with pytest.raises(ValueError):
        ResideConfig(iterations=0)
    with pytest.raises(ValueError):
        ResideConfig(train_every=0)
