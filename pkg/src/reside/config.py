"""Flat ``key=value`` run configuration shared by the CLI and manifests.

Recognised keys (all optional; unknown keys are an error, keys containing a
dot such as ``result.nmse_db`` are manifest metadata and are ignored)::

    method        zero-filled | l1-wavelet | pnp-median | reside
    iterations    outer PDS iterations
    nu            prox scale (wavelet threshold is nu * lam)
    step_ratio    nu / tau^2, the data-consistency step
    lam, levels   L1-wavelet weight and Haar depth
    median_size   window of the median stand-in denoiser
    schedule      progressive | fixed
    snr_start, snr_step, snr_period, snr_cap, snr_fixed   training SNR in dB
    patch_count, patch_size, epochs, minibatch, lr        denoiser training
    out_gain      scale of the output-layer initialisation
    train_every, warm_start                               speed-ups (default off)
    seed          master seed
"""

from dataclasses import dataclass, fields, replace

from .denoiser import TrainSpec
from .patches import PatchPlan
from .pds import PdsParams
from .selfcal import ResideConfig, SnrSchedule

METHODS = ("zero-filled", "l1-wavelet", "pnp-median", "reside")


@dataclass(frozen=True)
class RunConfig:
    method: str = "reside"
    iterations: int = 30
    nu: float = 1.0
    step_ratio: float = 10.0
    lam: float = 0.01
    levels: int = 4
    median_size: int = 3
    schedule: str = "progressive"
    snr_start: float = 10.0
    snr_step: float = 5.0
    snr_period: int = 4
    snr_cap: float = 40.0
    snr_fixed: float = 25.0
    patch_count: int = 96
    patch_size: int = 32
    epochs: int = 10
    minibatch: int = 16
    lr: float = 1e-3
    out_gain: float = 0.01
    train_every: int = 1
    warm_start: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")

    def pds_params(self):
        return PdsParams(nu=self.nu, tau2=self.nu / self.step_ratio, iterations=self.iterations)

    def snr_schedule(self):
        return SnrSchedule(
            mode=self.schedule,
            start_db=self.snr_start,
            step_db=self.snr_step,
            period=self.snr_period,
            cap_db=self.snr_cap,
            fixed_db=self.snr_fixed,
        )

    def reside_config(self):
        return ResideConfig(
            pds=self.pds_params(),
            schedule=self.snr_schedule(),
            patches=PatchPlan(self.patch_count, self.patch_size),
            train=TrainSpec(self.epochs, self.minibatch, self.lr, out_gain=self.out_gain),
            iterations=self.iterations,
            master_seed=self.seed,
            train_every=self.train_every,
            warm_start=self.warm_start,
        )


PROFILES = {
    # desk scale (the RunConfig defaults): 128x128, 30 iterations, weights
    # carried across iterations, SNR cap reached with 12 iterations to spare
    "desk": {},
    "full": {
        "iterations": 70,
        "patch_count": 144,
        "patch_size": 64,
        "epochs": 100,
        "minibatch": 16,
        "lr": 1e-3,
        "snr_period": 10,
        "warm_start": False,
    },
}

METHOD_DEFAULTS = {
    "zero-filled": {"iterations": 1},
    "l1-wavelet": {"iterations": 200},
    "pnp-median": {"iterations": 100, "step_ratio": 1.0},
    "reside": {},
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key, text):
    kind = _FIELD_TYPES[key]
    if kind in (bool, "bool"):
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {text!r}")
    try:
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
    except ValueError:
        raise ValueError(f"{key}: cannot parse {text!r}") from None
    return text.strip()


def parse_pairs(lines):
    """Parse ``key=value`` lines; ``#`` starts a comment. Returns (config, metadata)."""
    values, meta = {}, {}
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if "." in key:
            meta[key] = val
        elif key in _FIELD_TYPES:
            values[key] = _convert(key, val)
        else:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
    return values, meta


def load_config_file(path):
    try:
        with open(path) as fh:
            return parse_pairs(fh)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc


def build_config(method=None, profile="desk", file_values=None, overrides=None):
    """Layer defaults, method defaults, profile, file values and overrides, in that order.

    A file that came from a manifest already holds a complete snapshot, so it
    overrides the profile and method defaults.
    """
    values = dict(PROFILES[profile])
    file_values = dict(file_values or {})
    overrides = dict(overrides or {})
    chosen = overrides.get("method") or method or file_values.get("method") or RunConfig.method
    values.update(METHOD_DEFAULTS.get(chosen, {}))
    values.update(file_values)
    values.update(overrides)
    values["method"] = chosen
    return replace(RunConfig(), **values)


def format_config(cfg):
    lines = []
    for f in fields(cfg):
        val = getattr(cfg, f.name)
        if isinstance(val, float):
            val = repr(val)
        elif isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{f.name}={val}")
    return lines
