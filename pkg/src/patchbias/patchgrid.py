"""Tiling of image/mask pairs into fixed-size patches and per-patch labels.

A patch is labeled positive the moment a single pixel of the target class
appears in it; the multi-label variant records presence per class.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .synthdata import MultimodalImage, SegmentationMask, TissueClass

EDGE_DROP_PARTIAL = "drop_partial"


@dataclass(frozen=True)
class PatchGridSpec:
    patch_height: int
    patch_width: int
    edge_policy: str = EDGE_DROP_PARTIAL

    def validate(self) -> None:
        if self.patch_height < 1 or self.patch_width < 1:
            raise ValidationError(
                f"patch dims must be >= 1, got {self.patch_height}x{self.patch_width}"
            )
        if self.edge_policy != EDGE_DROP_PARTIAL:
            raise ValidationError(f"unsupported edge policy {self.edge_policy!r}")


@dataclass
class Patch:
    pixels: np.ndarray  # (h, w, M) view into the source image
    mask: np.ndarray  # (h, w) view into the source mask
    image_id: str
    grid_row: int
    grid_col: int


def partition(
    image: MultimodalImage, mask: SegmentationMask, spec: PatchGridSpec
) -> list[Patch]:
    """Tile the image into a top-left-aligned grid, row-major, partial edges dropped."""
    spec.validate()
    data, labels = image.data, mask.labels
    if data.shape[:2] != labels.shape:
        raise ValidationError(
            f"image {data.shape[:2]} and mask {labels.shape} disagree on size"
        )
    H, W = labels.shape
    h, w = spec.patch_height, spec.patch_width
    if h > H or w > W:
        raise ValidationError(f"patch {h}x{w} larger than image {H}x{W}")
    patches = []
    for gr in range(H // h):
        for gc in range(W // w):
            ys, xs = gr * h, gc * w
            patches.append(
                Patch(
                    pixels=data[ys : ys + h, xs : xs + w],
                    mask=labels[ys : ys + h, xs : xs + w],
                    image_id=image.image_id,
                    grid_row=gr,
                    grid_col=gc,
                )
            )
    return patches


def binary_label(patch_mask: np.ndarray, target_class: int = TissueClass.TUMOR) -> int:
    """1 iff at least one pixel of the target class is present."""
    return int(np.any(patch_mask == target_class))


def multilabel_vector(patch_mask: np.ndarray, classes: Sequence[int]) -> np.ndarray:
    """Per-class presence bits, one per entry of `classes`."""
    if len(classes) == 0:
        raise ValidationError("classes must be non-empty")
    return np.array([int(np.any(patch_mask == c)) for c in classes], dtype=np.int64)
