"""Single-level orthonormal 2D Haar transform, applied per channel.

For each 2x2 block ``[a b; c d]``::

    ll = (a + b + c + d) / 2
    lh = (a + b - c - d) / 2    horizontal detail (row difference)
    hl = (a - b + c - d) / 2    vertical detail (column difference)
    hh = (a - b - c + d) / 2    diagonal detail

The transform is orthogonal, so its adjoint (used for backprop) is
:func:`haar_reconstruct`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class WaveletBands:
    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray

    @property
    def shape(self):
        return self.ll.shape

    def details(self):
        return self.lh, self.hl, self.hh

    def energy(self) -> float:
        return float(sum((b * b).sum() for b in (self.ll, self.lh, self.hl, self.hh)))


def haar_decompose(x: np.ndarray) -> WaveletBands:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError(f"haar_decompose expects (B, C, H, W), got {x.shape}")
    H, W = x.shape[2:]
    if H % 2 or W % 2:
        raise ShapeError(f"haar_decompose needs even H and W, got {H}x{W}")
    a = x[:, :, 0::2, 0::2]
    b = x[:, :, 0::2, 1::2]
    c = x[:, :, 1::2, 0::2]
    d = x[:, :, 1::2, 1::2]
    return WaveletBands(
        ll=(a + b + c + d) * 0.5,
        lh=(a + b - c - d) * 0.5,
        hl=(a - b + c - d) * 0.5,
        hh=(a - b - c + d) * 0.5,
    )


def haar_reconstruct(bands: WaveletBands) -> np.ndarray:
    shape = bands.ll.shape
    for name in ("lh", "hl", "hh"):
        if getattr(bands, name).shape != shape:
            raise ConfigError(f"band {name} has shape {getattr(bands, name).shape}, ll has {shape}")
    ll, lh, hl, hh = bands.ll, bands.lh, bands.hl, bands.hh
    B, C, h, w = shape
    x = np.empty((B, C, 2 * h, 2 * w), dtype=np.float64)
    x[:, :, 0::2, 0::2] = (ll + lh + hl + hh) * 0.5
    x[:, :, 0::2, 1::2] = (ll + lh - hl - hh) * 0.5
    x[:, :, 1::2, 0::2] = (ll - lh + hl - hh) * 0.5
    x[:, :, 1::2, 1::2] = (ll - lh - hl + hh) * 0.5
    return x


def haar_decompose_backward(d_ll: Optional[np.ndarray], d_lh: Optional[np.ndarray],
                            d_hl: Optional[np.ndarray], d_hh: Optional[np.ndarray]) -> np.ndarray:
    """Gradient w.r.t. the input given band gradients (``None`` means zero)."""
    ref = next(g for g in (d_ll, d_lh, d_hl, d_hh) if g is not None)
    z = np.zeros_like(ref)
    return haar_reconstruct(WaveletBands(
        ll=z if d_ll is None else d_ll,
        lh=z if d_lh is None else d_lh,
        hl=z if d_hl is None else d_hl,
        hh=z if d_hh is None else d_hh,
    ))
