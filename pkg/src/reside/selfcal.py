"""Self-calibrated PnP reconstruction: retrain the denoiser every iteration.

Each iteration ``t`` perturbs the current estimate with complex noise at the
scheduled training SNR, trains a fresh network to undo that perturbation on
random patches, and uses it as the denoiser of one PDS step.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .denoiser import TrainSpec, denoise_image, train_denoiser
from .errors import DivergenceError
from .patches import PatchPlan
from .pds import PdsParams, pds_init, pds_step

# RNG stream ids, combined with (master_seed, t)
NOISE_STREAM, PATCH_STREAM, INIT_STREAM = 0, 1, 2


@dataclass(frozen=True)
class SnrSchedule:
    mode: str = "progressive"
    start_db: float = 10.0
    step_db: float = 5.0
    period: int = 10
    cap_db: float = 40.0
    fixed_db: float = 25.0

    def __post_init__(self):
        if self.mode not in ("progressive", "fixed"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.period < 1:
            raise ValueError("period must be >= 1")
        if self.cap_db < self.start_db:
            raise ValueError("cap_db must be >= start_db")

    @classmethod
    def fixed(cls, db):
        return cls(mode="fixed", fixed_db=db)


@dataclass(frozen=True)
class ResideConfig:
    pds: PdsParams = field(default_factory=lambda: PdsParams(iterations=70))
    schedule: SnrSchedule = field(default_factory=SnrSchedule)
    patches: PatchPlan = field(default_factory=PatchPlan)
    train: TrainSpec = field(default_factory=TrainSpec)
    iterations: int = 70
    master_seed: int = 0
    train_every: int = 1
    warm_start: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.train_every < 1:
            raise ValueError("train_every must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    t: int
    snr_db: float
    sigma: float
    train_loss: float
    x: np.ndarray


def snr_at(schedule, t):
    """Training SNR in dB for iteration ``t`` (1-based)."""
    if t < 1:
        raise ValueError("iterations are numbered from 1")
    if schedule.mode == "fixed":
        return float(schedule.fixed_db)
    steps = (t - 1) // schedule.period
    return float(min(schedule.start_db + schedule.step_db * steps, schedule.cap_db))


def sigma_for_snr(x, snr_db):
    """Per-component noise std giving ``20 log10(||x|| / (sqrt(2N) sigma)) = snr_db``."""
    x = np.asarray(x)
    norm = float(np.linalg.norm(x))
    if norm == 0:
        raise ValueError("training noise level is undefined for an all-zero image")
    return norm / (math.sqrt(2 * x.size) * 10.0 ** (snr_db / 20.0))


def stream_seed(master_seed, t, stream):
    """Deterministic 64-bit seed for one (iteration, purpose) pair."""
    state = np.random.SeedSequence([master_seed, t, stream]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def reside_reconstruct(op, y, cfg, trace_sink=None):
    """Run the self-calibrated loop and return the final image.

    ``trace_sink`` receives a :class:`TraceRecord` after every iteration.
    """
    state = pds_init(op, y, cfg.pds)
    net = None
    for t in range(1, cfg.iterations + 1):
        snr = snr_at(cfg.schedule, t)
        sigma = sigma_for_snr(state.x, snr)
        if net is None or (t - 1) % cfg.train_every == 0:
            plan = replace(cfg.patches, rng_seed=stream_seed(cfg.master_seed, t, PATCH_STREAM))
            spec = replace(cfg.train, init_seed=stream_seed(cfg.master_seed, t, INIT_STREAM))
            net = train_denoiser(
                state.x,
                sigma,
                plan,
                spec,
                stream_seed(cfg.master_seed, t, NOISE_STREAM),
                init=net if cfg.warm_start else None,
            )
        trained = net
        state = pds_step(state, op, y, cfg.pds, lambda u: denoise_image(trained, u))
        loss = trained.final_loss
        if not (np.all(np.isfinite(state.x)) and math.isfinite(loss)):
            raise DivergenceError(t)
        if trace_sink is not None:
            trace_sink(TraceRecord(t, snr, sigma, loss, state.x))
    return state.x
