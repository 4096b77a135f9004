"""Synthetic phantoms, sampling masks, measurement synthesis and NMSE."""

from dataclasses import dataclass

import numpy as np

from .operator import SamplingMask, as_grid, fft2

NMSE_FLOOR_DB = -300.0

# Modified Shepp-Logan (Toft): intensity, semi-axis a, semi-axis b, x0, y0, angle [deg]
SHEPP_LOGAN = (
    (1.0, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.8, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.1, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.1, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.1, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.1, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)

PHASE_KINDS = ("none", "smooth")
MASK_KINDS = ("m1", "m2", "full")


@dataclass(frozen=True)
class PhantomSpec:
    size: int = 128
    phase: str = "none"
    ellipses: tuple = SHEPP_LOGAN


@dataclass(frozen=True)
class MaskSpec:
    kind: str = "m2"
    target_R: float = 1.8
    acs_lines: int = 32
    seed: int = 0
    density_std: float | None = None  # M1 only; defaults to rows / 6


def pixel_coordinates(n):
    """Pixel-centre coordinates on [-1, 1]; x grows with column, y with decreasing row."""
    c = (2.0 * np.arange(n) + 1.0) / n - 1.0
    return c[np.newaxis, :], -c[:, np.newaxis]


def smooth_phase(n):
    """Low-order polynomial phase map in radians."""
    x, y = pixel_coordinates(n)
    return np.pi / 2 * (0.4 * x - 0.3 * y + 0.5 * (x**2 + y**2))


def gen_phantom(spec=PhantomSpec()):
    n = int(spec.size)
    if n < 16:
        raise ValueError("phantom size must be >= 16")
    if spec.phase not in PHASE_KINDS:
        raise ValueError(f"unknown phase kind {spec.phase!r}; expected one of {PHASE_KINDS}")
    x, y = pixel_coordinates(n)
    img = np.zeros((n, n))
    for amp, a, b, x0, y0, deg in spec.ellipses:
        th = np.deg2rad(deg)
        dx, dy = x - x0, y - y0
        xr = dx * np.cos(th) + dy * np.sin(th)
        yr = -dx * np.sin(th) + dy * np.cos(th)
        img += amp * ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0)
    img = np.clip(img, 0.0, 1.0)
    if spec.phase == "smooth":
        return img * np.exp(1j * smooth_phase(n))
    return img.astype(np.complex128)


def _acs_range(n, acs):
    start = n // 2 - acs // 2
    return start, start + acs


def _check_R(n_total, m, target_R):
    achieved = n_total / m
    if abs(achieved - target_R) > 0.05 * target_R:
        raise ValueError(
            f"cannot reach R={target_R} within 5% on this grid (closest achievable {achieved:.4f})"
        )


def gen_mask(spec, rows, cols):
    """Build a sampling mask and return it in DC-at-(0, 0) layout.

    ``m1`` samples whole rows (phase-encode lines) with a Gaussian density
    around the centre plus ``acs_lines`` central rows. ``m2`` samples single
    points uniformly plus a central ``acs_lines x acs_lines`` block.
    """
    if rows < 1 or cols < 1:
        raise ValueError("mask dimensions must be positive")
    if spec.kind not in MASK_KINDS:
        raise ValueError(f"unknown mask kind {spec.kind!r}; expected one of {MASK_KINDS}")
    if spec.kind == "full":
        return SamplingMask.full(rows, cols)
    if spec.target_R <= 1:
        raise ValueError("target_R must be > 1")
    acs = int(spec.acs_lines)
    if acs < 0 or acs > rows:
        raise ValueError(f"acs_lines={acs} must lie in [0, rows={rows}]")
    rng = np.random.default_rng(spec.seed)
    centered = np.zeros((rows, cols), dtype=bool)

    if spec.kind == "m1":
        n_lines = int(round(rows / spec.target_R))
        if acs > n_lines:
            raise ValueError(f"ACS alone ({acs} lines) exceeds the budget of {n_lines} lines")
        _check_R(rows, n_lines, spec.target_R)
        lo, hi = _acs_range(rows, acs)
        std = spec.density_std if spec.density_std else rows / 6.0
        idx = np.arange(rows)
        candidates = np.setdiff1d(idx, np.arange(lo, hi))
        weights = np.exp(-0.5 * ((candidates - rows // 2) / std) ** 2)
        picked = rng.choice(candidates, size=n_lines - acs, replace=False, p=weights / weights.sum())
        centered[lo:hi, :] = True
        centered[picked, :] = True
    else:
        n_total = rows * cols
        m = int(round(n_total / spec.target_R))
        acs_c = min(acs, cols)
        if acs * acs_c > m:
            raise ValueError(f"ACS block ({acs}x{acs_c}) exceeds the budget of {m} samples")
        _check_R(n_total, m, spec.target_R)
        rlo, rhi = _acs_range(rows, acs)
        clo, chi = _acs_range(cols, acs_c)
        centered[rlo:rhi, clo:chi] = True
        free = np.flatnonzero(~centered.ravel())
        picked = rng.choice(free, size=m - acs * acs_c, replace=False)
        centered.ravel()[picked] = True

    return SamplingMask(np.fft.ifftshift(centered))


def synthesize_measurements(x, mask, noise_std=0.0, seed=0):
    """``y = mask * (fft2(x) + eta)`` with per-component noise std ``noise_std``."""
    x = as_grid(x, "image")
    if x.shape != mask.shape:
        raise ValueError(f"image shape {x.shape} does not match mask {mask.shape}")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    ksp = fft2(x)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        ksp = ksp + noise_std * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))
    ksp[~mask.keep] = 0
    return ksp


def nmse_db(truth, estimate):
    """``20 log10(||x - xhat|| / ||x||)``, floored at -300 dB."""
    truth = as_grid(truth, "truth")
    estimate = as_grid(estimate, "estimate")
    if truth.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {estimate.shape}")
    ref = np.linalg.norm(truth)
    if ref == 0:
        raise ValueError("NMSE is undefined for an all-zero reference")
    ratio = np.linalg.norm(truth - estimate) / ref
    if ratio == 0:
        return NMSE_FLOOR_DB
    return max(20.0 * np.log10(ratio), NMSE_FLOOR_DB)
