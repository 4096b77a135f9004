"""Self-calibrated plug-and-play reconstruction for masked-Fourier inverse problems."""

from .data import MaskSpec, PhantomSpec, gen_mask, gen_phantom, nmse_db, synthesize_measurements
from .denoiser import DenoiserNet, TrainSpec, denoise_image, train_denoiser
from .errors import ContractViolation, DivergenceError, FormatError
from .formats import read_grid, read_mask, write_grid, write_mask
from .operator import (
    ForwardOperator,
    SamplingMask,
    apply_adjoint,
    apply_forward,
    fft2,
    ifft2,
    operator_norm,
)
from .patches import PatchPlan, extract_patch_pairs
from .pds import PdsParams, PdsState, pds_init, pds_step, pnp_reconstruct
from .selfcal import ResideConfig, SnrSchedule, reside_reconstruct, sigma_for_snr, snr_at
from .wavelet import WaveletConfig, dwt2, idwt2, soft_threshold, wavelet_prox_denoise

__version__ = "0.1.0"
