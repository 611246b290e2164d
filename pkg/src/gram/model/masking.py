"""Random patch masking at the 0.8 ratio."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import MASK_RATIO


@dataclass
class MaskPlan:
    n_patches: int
    masked: np.ndarray   # sorted indices
    visible: np.ndarray  # sorted indices, complement of masked
    ratio: float
    seed: int


def make_mask(n_patches: int, seed, ratio: float = MASK_RATIO) -> MaskPlan:
    """Uniform random subset of round(ratio * n) patches to mask.

    Both index sets come back sorted so downstream gathers preserve
    temporal order (the mamba path needs it; the transformer doesn't care).
    """
    if n_patches < 2:
        raise ValueError("need at least 2 patches to mask")
    n_masked = int(round(ratio * n_patches))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_patches)
    masked = np.sort(perm[:n_masked])
    visible = np.sort(perm[n_masked:])
    return MaskPlan(n_patches=n_patches, masked=masked, visible=visible,
                    ratio=ratio, seed=seed)
