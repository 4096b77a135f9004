"""Plug-and-play primal-dual splitting.

One iteration, with step ratio ``s = nu / tau^2`` and ``gamma = s ||A||^2``::

    u = x - s A^H z
    x_new = f(u)
    v = 2 x_new - x
    z = gamma / (1 + gamma) z + 1 / (1 + gamma) (A v - y)

``f`` is any callable mapping an image to an image of the same shape.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DivergenceError
from .operator import apply_adjoint, apply_forward, as_grid


@dataclass(frozen=True)
class PdsParams:
    """Step parameters.

    Only the ratio ``nu / tau2`` enters the iteration; ``nu`` on its own is the
    prox scale handed to proximal denoisers.
    """

    nu: float = 1.0
    tau2: float = 1.0
    iterations: int = 100
    norm_A: float = 1.0

    def __post_init__(self):
        if self.nu <= 0 or self.tau2 <= 0:
            raise ValueError("nu and tau2 must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.norm_A <= 0:
            raise ValueError("norm_A must be > 0")

    @property
    def step_ratio(self):
        return self.nu / self.tau2

    @property
    def gamma(self):
        return self.step_ratio * self.norm_A**2


@dataclass(frozen=True)
class PdsState:
    x: np.ndarray
    z: np.ndarray
    t: int = 0


def _measured(op, y):
    y = as_grid(y, "measurements")
    if y.shape != op.shape:
        raise ValueError(f"measurement shape {y.shape} does not match operator {op.shape}")
    return np.where(op.mask.keep, y, 0)


def pds_init(op, y, params):
    y = _measured(op, y)
    x = apply_adjoint(op, y)
    return PdsState(x=x, z=apply_forward(op, x) - y, t=0)


def pds_step(state, op, y, params, denoiser):
    y = _measured(op, y)
    s, g = params.step_ratio, params.gamma
    u = state.x - s * apply_adjoint(op, state.z)
    x = np.asarray(denoiser(u))
    if x.shape != u.shape:
        raise ContractViolation(f"denoiser returned shape {x.shape}, expected {u.shape}")
    x = x.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(x)):
        raise DivergenceError(state.t + 1, "denoiser produced non-finite values")
    v = 2 * x - state.x
    z = (g / (1 + g)) * state.z + (1 / (1 + g)) * (apply_forward(op, v) - y)
    return PdsState(x=x, z=z, t=state.t + 1)


def pnp_reconstruct(op, y, params, denoiser, trace_sink=None):
    """Run ``params.iterations`` PDS steps from ``x0 = A^H y`` and return the image.

    ``trace_sink(t, x_t)`` is called after every step.
    """
    state = pds_init(op, y, params)
    for _ in range(params.iterations):
        state = pds_step(state, op, y, params, denoiser)
        if trace_sink is not None:
            trace_sink(state.t, state.x)
    return state.x


def identity_denoiser(u):
    return u


def median_denoiser(size=3):
    """Generic stand-in denoiser: median filter applied to real and imaginary parts."""
    from scipy.ndimage import median_filter

    def f(u):
        u = np.asarray(u)
        return median_filter(u.real, size=size, mode="reflect") + 1j * median_filter(
            u.imag, size=size, mode="reflect"
        )

    return f
