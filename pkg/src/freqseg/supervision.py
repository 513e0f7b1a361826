"""Boundary targets from masks, and the weighted BCE multi-task loss."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import tensor as T
from .errors import ShapeError, ValidationError
from .mbgd import DualPrediction

BOUNDARY_WEIGHT = 0.3


@dataclass
class LossWeights:
    boundary: float = BOUNDARY_WEIGHT

    def __post_init__(self):
        if self.boundary < 0:
            raise ValidationError(f"boundary loss weight must be >= 0, got {self.boundary}")


def check_binary(m: np.ndarray, what: str = "mask") -> np.ndarray:
    m = np.asarray(m)
    if not np.isin(m, (0, 1)).all():
        raise ValidationError(f"{what} must contain only 0 and 1")
    return m.astype(np.float64)


def _morph(m: np.ndarray, r: int, pad_value: float, reduce) -> np.ndarray:
    # square element is separable: reduce over rows, then over columns
    k = 2 * r + 1
    pad = [(0, 0)] * (m.ndim - 2) + [(r, r), (r, r)]
    mp = np.pad(m, pad, constant_values=pad_value)
    rows = reduce(sliding_window_view(mp, k, axis=-2), axis=-1)
    return reduce(sliding_window_view(rows, k, axis=-1), axis=-1)


def dilate(m: np.ndarray, r: int = 1) -> np.ndarray:
    """Square (2r+1) dilation over the last two axes, zero padding."""
    return _morph(m, r, 0.0, np.max)


def erode(m: np.ndarray, r: int = 1) -> np.ndarray:
    """Square (2r+1) erosion over the last two axes, one padding."""
    return _morph(m, r, 1.0, np.min)


def boundary_from_mask(m: np.ndarray, r: int = 1) -> np.ndarray:
    """Morphological gradient band ``dilate(m) AND NOT erode(m)``."""
    m = check_binary(m)
    if r < 1:
        return np.zeros_like(m)
    return dilate(m, r) * (1.0 - erode(m, r))


def bce_with_logits(logits: np.ndarray, target: np.ndarray) -> float:
    if logits.shape != target.shape:
        raise ShapeError(f"logits {logits.shape} and target {target.shape} differ in shape")
    z = logits
    per_pixel = np.maximum(z, 0.0) - z * target + np.log1p(np.exp(-np.abs(z)))
    return float(per_pixel.mean())


def bce_with_logits_grad(logits: np.ndarray, target: np.ndarray) -> np.ndarray:
    return (T.sigmoid(logits) - target) / logits.size


def total_loss(pred: DualPrediction, mask_gt: np.ndarray, weights: LossWeights = LossWeights(),
               radius: int = 1, boundary_gt: np.ndarray | None = None
               ) -> Tuple[float, Dict[str, float], Dict[str, np.ndarray]]:
    """Returns ``(total, components, logit_grads)``.

    ``logit_grads`` holds ``d total / d logits`` for the mask and (if present)
    boundary head. Without a boundary prediction the boundary term is 0.
    """
    mask_gt = check_binary(mask_gt)
    l_mask = bce_with_logits(pred.mask_logits, mask_gt)
    grads = {"mask": bce_with_logits_grad(pred.mask_logits, mask_gt)}
    l_boundary = 0.0
    if pred.boundary_logits is not None:
        if boundary_gt is None:
            boundary_gt = boundary_from_mask(mask_gt, radius)
        l_boundary = bce_with_logits(pred.boundary_logits, boundary_gt)
        grads["boundary"] = weights.boundary * bce_with_logits_grad(pred.boundary_logits, boundary_gt)
    total = l_mask + weights.boundary * l_boundary if weights.boundary != 0.0 else l_mask
    return total, {"mask": l_mask, "boundary": l_boundary}, grads
