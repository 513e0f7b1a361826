"""Dice, mIoU and Hausdorff distance for binary masks."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

# largest |P|*|G| evaluated by explicit pairwise distances
BRUTE_FORCE_LIMIT = 4_000_000


@dataclass
class EvalReport:
    dice: float
    miou: float
    hd: float
    hd95: float = 0.0
    hd_empty: bool = False

    def as_dict(self):
        return asdict(self)


def binarize(prob: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    return (np.asarray(prob) >= threshold).astype(bool)


def dice(pred: np.ndarray, gt: np.ndarray) -> float:
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / denom


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    union = int((p | g).sum())
    if union == 0:
        return 1.0
    return int((p & g).sum()) / union


def miou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean of foreground and background IoU."""
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    return 0.5 * (iou(p, g) + iou(~p, ~g))


def image_diagonal(shape) -> float:
    h, w = shape[-2:]
    return float(np.hypot(h, w))


def _points(m: np.ndarray) -> np.ndarray:
    return np.argwhere(np.asarray(m, dtype=bool)).astype(np.float64)


def _directed_brute(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """For each point of ``a``, the distance to the nearest point of ``b``."""
    out = np.empty(len(a))
    chunk = max(1, 2_000_000 // max(len(b), 1))
    for s in range(0, len(a), chunk):
        d = ((a[s:s + chunk, None, :] - b[None, :, :]) ** 2).sum(-1)
        out[s:s + chunk] = np.sqrt(d.min(axis=1))
    return out


def _directed_edt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    dist = ndimage.distance_transform_edt(~dst)
    return dist[src]


def surface_distances(pred: np.ndarray, gt: np.ndarray, exact: bool | None = None):
    """Directed nearest-neighbour distances ``(pred->gt, gt->pred)`` over mask pixels."""
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    if exact is None:
        exact = int(p.sum()) * int(g.sum()) <= BRUTE_FORCE_LIMIT
    if exact:
        pp, gp = _points(p), _points(g)
        return _directed_brute(pp, gp), _directed_brute(gp, pp)
    return _directed_edt(p, g), _directed_edt(g, p)


def hausdorff(pred: np.ndarray, gt: np.ndarray, spacing: float = 1.0) -> float:
    """Symmetric Hausdorff distance; the image diagonal if either mask is empty."""
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    if not p.any() or not g.any():
        return image_diagonal(p.shape) * spacing
    d_pg, d_gp = surface_distances(p, g)
    return float(max(d_pg.max(), d_gp.max())) * spacing


def hausdorff95(pred: np.ndarray, gt: np.ndarray, spacing: float = 1.0) -> float:
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    if not p.any() or not g.any():
        return image_diagonal(p.shape) * spacing
    d_pg, d_gp = surface_distances(p, g)
    return float(np.percentile(np.concatenate([d_pg, d_gp]), 95)) * spacing


def evaluate_pair(pred: np.ndarray, gt: np.ndarray, spacing: float = 1.0) -> EvalReport:
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    empty = not p.any() or not g.any()
    return EvalReport(
        dice=dice(p, g),
        miou=miou(p, g),
        hd=hausdorff(p, g, spacing),
        hd95=hausdorff95(p, g, spacing),
        hd_empty=empty,
    )
