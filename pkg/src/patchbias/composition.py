"""Patch composition ratios, tissue inference, and group assignment.

Three ratios describe what a patch is made of: tumor fraction of the whole
patch, tumor fraction of the tissue, and tissue fraction of the whole
patch. Binarizing the tissue fraction at a threshold yields the spurious
attribute z; (label, z) pairs index the four evaluation groups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .synthdata import TissueClass

DEFAULT_TISSUE_EPSILON = 0.05

GROUP_NAMES = ("y0_z0", "y0_z1", "y1_z0", "y1_z1")


@dataclass(frozen=True)
class PatchRatios:
    r_tumor: float
    r_tumor_tissue: float | None  # undefined when the patch has no tissue
    r_tissue: float
    tissue_pixels: int


def compute_ratios(patch_mask: np.ndarray) -> PatchRatios:
    """Exact pixel-count ratios; one division per ratio at the end."""
    total = patch_mask.size
    if total == 0:
        raise ValidationError("patch mask is empty")
    tumor = int(np.count_nonzero(patch_mask == TissueClass.TUMOR))
    healthy = int(np.count_nonzero(patch_mask == TissueClass.HEALTHY))
    tissue = tumor + healthy
    return PatchRatios(
        r_tumor=tumor / total,
        r_tumor_tissue=(tumor / tissue) if tissue > 0 else None,
        r_tissue=tissue / total,
        tissue_pixels=tissue,
    )


def infer_tissue(patch_pixels: np.ndarray, epsilon: float = DEFAULT_TISSUE_EPSILON) -> np.ndarray:
    """Tissue wherever any channel rises above `epsilon` (background is near-black)."""
    if not (0.0 < epsilon < 1.0):
        raise ValidationError(f"epsilon must be in (0, 1), got {epsilon}")
    if patch_pixels.ndim != 3:
        raise ValidationError(f"expected (h, w, channels) pixels, got shape {patch_pixels.shape}")
    return patch_pixels.max(axis=-1) > epsilon


def binarize_spurious(r_tissue: float, tau: float) -> int:
    """z = 1 ("large tissue") iff r_tissue >= tau."""
    if not (0.0 <= tau <= 1.0):
        raise ValidationError(f"tau must be in [0, 1], got {tau}")
    if not (0.0 <= r_tissue <= 1.0):
        raise ValidationError(f"r_tissue must be in [0, 1], got {r_tissue}")
    return 1 if r_tissue >= tau else 0


def assign_group(y: int, z: int) -> int:
    """Bijective (y, z) -> 2y + z group id."""
    if y not in (0, 1) or z not in (0, 1):
        raise ValidationError(f"y and z must be binary, got y={y}, z={z}")
    return 2 * y + z


def decode_group(group_id: int) -> tuple[int, int]:
    if group_id not in (0, 1, 2, 3):
        raise ValidationError(f"group id must be in 0..3, got {group_id}")
    return group_id // 2, group_id % 2
