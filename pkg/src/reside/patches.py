"""Random aligned patch extraction."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PatchPlan:
    count: int = 144
    size: int = 64
    rng_seed: int = 0

    def __post_init__(self):
        if self.count < 1 or self.size < 1:
            raise ValueError("patch count and size must be positive")


def patch_corners(shape, plan):
    """Top-left corners drawn uniformly, with replacement, over valid positions."""
    rows, cols = shape
    if plan.size > rows or plan.size > cols:
        raise ValueError(f"patch size {plan.size} exceeds image shape {shape}")
    rng = np.random.default_rng(plan.rng_seed)
    r = rng.integers(0, rows - plan.size + 1, size=plan.count)
    c = rng.integers(0, cols - plan.size + 1, size=plan.count)
    return np.stack([r, c], axis=1)


def extract_patch_pairs(clean, noisy, plan):
    """Return ``(noisy_patches, clean_patches)`` as ``(P, size, size, 2)`` float arrays.

    The i-th noisy and clean patch are cut at the same location.
    """
    clean = np.asarray(clean)
    noisy = np.asarray(noisy)
    if clean.shape != noisy.shape or clean.ndim != 2:
        raise ValueError(f"images must be 2-D and equal in shape: {clean.shape} vs {noisy.shape}")
    s = plan.size
    corners = patch_corners(clean.shape, plan)
    pn = np.empty((plan.count, s, s, 2))
    pc = np.empty((plan.count, s, s, 2))
    for k, (r, c) in enumerate(corners):
        for dst, src in ((pn, noisy), (pc, clean)):
            block = src[r : r + s, c : c + s]
            dst[k, ..., 0] = block.real
            dst[k, ..., 1] = block.imag
    return pn, pc
