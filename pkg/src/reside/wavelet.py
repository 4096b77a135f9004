"""Orthonormal Haar transform and the L1-wavelet proximal operator."""

from dataclasses import dataclass

import numpy as np

from .operator import as_grid

_SQRT1_2 = np.sqrt(0.5)


@dataclass(frozen=True)
class WaveletConfig:
    levels: int = 4
    lam: float = 0.0

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")


def _check_divisible(shape, levels):
    if levels < 1:
        raise ValueError("levels must be >= 1")
    block = 1 << levels
    if shape[0] % block or shape[1] % block:
        raise ValueError(
            f"grid {shape} is not divisible by 2**levels = {block} in both dimensions"
        )


def _analysis_1d(a, axis):
    even = np.take(a, np.arange(0, a.shape[axis], 2), axis=axis)
    odd = np.take(a, np.arange(1, a.shape[axis], 2), axis=axis)
    return np.concatenate(((even + odd) * _SQRT1_2, (even - odd) * _SQRT1_2), axis=axis)


def _synthesis_1d(a, axis):
    half = a.shape[axis] // 2
    approx = np.take(a, np.arange(half), axis=axis)
    detail = np.take(a, np.arange(half, 2 * half), axis=axis)
    out = np.empty_like(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(0, None, 2)
    out[tuple(idx)] = (approx + detail) * _SQRT1_2
    idx[axis] = slice(1, None, 2)
    out[tuple(idx)] = (approx - detail) * _SQRT1_2
    return out


def dwt2(img, levels):
    """Multi-level separable Haar analysis, coefficients stored in place.

    Level ``k`` transforms the top-left ``rows/2**(k-1) x cols/2**(k-1)``
    approximation block. Complex input is handled linearly, which is the same
    as transforming real and imaginary parts separately.
    """
    out = as_grid(img, "image").copy()
    _check_divisible(out.shape, levels)
    r, c = out.shape
    for _ in range(levels):
        block = out[:r, :c]
        block = _analysis_1d(block, 0)
        out[:r, :c] = _analysis_1d(block, 1)
        r //= 2
        c //= 2
    return out


def idwt2(coeffs, levels):
    """Exact inverse of :func:`dwt2`."""
    out = as_grid(coeffs, "coefficients").copy()
    _check_divisible(out.shape, levels)
    rows, cols = out.shape
    for k in range(levels - 1, -1, -1):
        r, c = rows >> k, cols >> k
        block = _synthesis_1d(out[:r, :c], 1)
        out[:r, :c] = _synthesis_1d(block, 0)
    return out


def soft_threshold(v, t):
    """Complex soft-thresholding: shrink ``|v|`` by ``t``, keep the phase.

    Works elementwise on arrays as well as on scalars.
    """
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be >= 0")
    v = np.asarray(v, dtype=np.complex128)
    mag = np.abs(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > t, 1.0 - t / np.where(mag > 0, mag, 1.0), 0.0)
    out = v * scale
    return out[()] if out.ndim == 0 else out


def l1_wavelet_norm(x, levels):
    return float(np.sum(np.abs(dwt2(x, levels))))


def wavelet_prox_denoise(u, cfg, nu):
    """Proximal operator of ``nu * lam * ||Psi x||_1``.

    Because Haar is orthonormal the prox is ``Psi^H soft(Psi u, nu*lam)``.
    """
    if nu <= 0:
        raise ValueError("nu must be > 0")
    u = as_grid(u, "image")
    if cfg.lam == 0:
        _check_divisible(u.shape, cfg.levels)
        return u.copy()
    coeffs = dwt2(u, cfg.levels)
    return idwt2(soft_threshold(coeffs, nu * cfg.lam), cfg.levels)


def wavelet_denoiser(cfg, nu):
    """Bind ``cfg`` and ``nu`` into a one-argument denoiser for the PDS loop."""
    return lambda u: wavelet_prox_denoise(u, cfg, nu)
