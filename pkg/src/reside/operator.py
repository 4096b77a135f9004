"""Masked Fourier forward model.

Images and k-space data are plain 2-D ``complex128`` numpy arrays. The FFT is
unitary in both directions and k-space is kept in DC-at-(0, 0) layout, so the
operator ``A = M F`` has spectral norm exactly 1 for any nonempty mask.
"""

from dataclasses import dataclass

import numpy as np


def as_grid(a, name="grid"):
    """Validate and convert ``a`` to a finite 2-D complex128 array."""
    arr = np.asarray(a)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} has a zero dimension: {arr.shape}")
    arr = arr.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def fft2(img):
    """Unitary 2-D DFT with DC at index (0, 0)."""
    return np.fft.fft2(as_grid(img, "image"), norm="ortho")


def ifft2(ksp):
    """Inverse of :func:`fft2`."""
    return np.fft.ifft2(as_grid(ksp, "k-space"), norm="ortho")


@dataclass(frozen=True)
class SamplingMask:
    """Boolean k-space selection in DC-at-(0, 0) layout."""

    keep: np.ndarray

    def __post_init__(self):
        keep = np.asarray(self.keep)
        if keep.ndim != 2 or 0 in keep.shape:
            raise ValueError(f"mask must be a nonempty 2-D array, got {keep.shape}")
        keep = keep.astype(bool, copy=True)
        keep.setflags(write=False)
        object.__setattr__(self, "keep", keep)

    @property
    def shape(self):
        return self.keep.shape

    @property
    def rows(self):
        return self.keep.shape[0]

    @property
    def cols(self):
        return self.keep.shape[1]

    @property
    def m(self):
        return int(np.count_nonzero(self.keep))

    @property
    def acceleration(self):
        """R = N / m (``inf`` for an empty mask)."""
        return self.keep.size / self.m if self.m else float("inf")

    @classmethod
    def full(cls, rows, cols):
        return cls(np.ones((rows, cols), dtype=bool))


@dataclass(frozen=True)
class ForwardOperator:
    mask: SamplingMask

    @property
    def shape(self):
        return self.mask.shape

    def _check(self, a, name):
        arr = as_grid(a, name)
        if arr.shape != self.shape:
            raise ValueError(f"{name} shape {arr.shape} does not match operator {self.shape}")
        return arr

    def forward(self, x):
        return apply_forward(self, x)

    def adjoint(self, y):
        return apply_adjoint(self, y)


def apply_forward(op, x):
    """``A x = mask * fft2(x)``; unsampled entries are exactly zero."""
    x = op._check(x, "image")
    ksp = np.fft.fft2(x, norm="ortho")
    ksp[~op.mask.keep] = 0
    return ksp


def apply_adjoint(op, y):
    """``A^H y = ifft2(mask * y)``.

    Entries of ``y`` outside the mask are zeroed rather than rejected.
    """
    y = op._check(y, "k-space")
    y = np.where(op.mask.keep, y, 0)
    return np.fft.ifft2(y, norm="ortho")


def operator_norm(op, iterations=50, seed=0):
    """Power-iteration estimate of the spectral norm of ``op``.

    The Rayleigh quotient of ``A^H A`` is nondecreasing along the power
    iteration, so the estimate only grows with ``iterations``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if op.mask.m == 0:
        raise ValueError("operator norm is undefined for an empty mask")
    rng = np.random.default_rng(seed)
    shape = op.shape
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iterations):
        ax = apply_forward(op, x)
        x_new = apply_adjoint(op, ax)
        est = max(est, float(np.sqrt(np.vdot(x, x_new).real)))
        nrm = np.linalg.norm(x_new)
        if nrm == 0:
            # random start orthogonal to the range; vanishingly unlikely
            x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            x /= np.linalg.norm(x)
            continue
        x = x_new / nrm
    return est
