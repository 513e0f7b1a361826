"""Boundary-first dual-head decoder, plus the single-head decoder used in ablations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import tensor as T
from .errors import UsageError
from .layers import Conv2d, ConvTranspose2d, ReLU, Sequential
from .params import ParamStore

NUM_UP_BLOCKS = 4
MIN_CHANNELS = 8
BOUNDARY_FEATURES = 16


@dataclass
class DualPrediction:
    mask_logits: np.ndarray
    boundary_logits: Optional[np.ndarray] = None


def channel_schedule(channels: int, blocks: int = NUM_UP_BLOCKS, floor: int = MIN_CHANNELS) -> List[int]:
    """Channel widths entering each block, then the output width: halve, floored."""
    widths = [channels]
    for _ in range(blocks):
        widths.append(max(widths[-1] // 2, floor))
    return widths


def up_stack(store: ParamStore, prefix: str, channels: int, rng: np.random.Generator,
             blocks: int = NUM_UP_BLOCKS) -> Sequential:
    widths = channel_schedule(channels, blocks)
    layers = []
    for i in range(blocks):
        layers += [ConvTranspose2d(store, f"{prefix}.up.{i}", widths[i], widths[i + 1], rng), ReLU()]
    return Sequential(*layers)


class MBGD:
    """``shared = up^4(f)``; boundary head first, its sigmoid fed back into the mask head."""

    def __init__(self, store: ParamStore, channels: int, rng: np.random.Generator, prefix: str = "mbgd",
                 boundary_features: int = BOUNDARY_FEATURES, blocks: int = NUM_UP_BLOCKS):
        self.blocks = blocks
        self.up = up_stack(store, prefix, channels, rng, blocks)
        c4 = channel_schedule(channels, blocks)[-1]
        self.c4, self.cb = c4, boundary_features
        self.boundary_head = Conv2d(store, f"{prefix}.boundary_head", c4, 1, 1, rng)
        self.boundary_conv = Conv2d(store, f"{prefix}.boundary_conv", 1, boundary_features, 3, rng)
        self.mask_head = Conv2d(store, f"{prefix}.mask_head", c4 + boundary_features, 1, 1, rng)
        self._sig = None

    @property
    def upsample_factor(self) -> int:
        return 2 ** self.blocks

    def forward(self, f: np.ndarray) -> DualPrediction:
        shared = self.up.forward(f)
        m_boundary = self.boundary_head.forward(shared)
        s = T.sigmoid(m_boundary)
        f_boundary = self.boundary_conv.forward(s)
        m_mask = self.mask_head.forward(T.concat_channels(shared, f_boundary))
        self._sig = s
        return DualPrediction(mask_logits=m_mask, boundary_logits=m_boundary)

    __call__ = forward

    def backward(self, d_mask: np.ndarray, d_boundary: Optional[np.ndarray] = None) -> np.ndarray:
        if self._sig is None:
            raise UsageError("MBGD.backward called without a preceding forward")
        s, self._sig = self._sig, None
        d_cat = self.mask_head.backward(d_mask)
        d_shared, d_fb = T.concat_channels_backward(d_cat, [self.c4, self.cb])
        d_mb = T.sigmoid_backward(self.boundary_conv.backward(d_fb), s)
        if d_boundary is not None:
            d_mb = d_mb + d_boundary
        d_shared = d_shared + self.boundary_head.backward(d_mb)
        return self.up.backward(d_shared)


class PlainDecoder:
    """Same up-sampling stack with a single 1x1 mask head; no boundary output."""

    def __init__(self, store: ParamStore, channels: int, rng: np.random.Generator, prefix: str = "decoder",
                 blocks: int = NUM_UP_BLOCKS):
        self.blocks = blocks
        self.up = up_stack(store, prefix, channels, rng, blocks)
        c4 = channel_schedule(channels, blocks)[-1]
        self.mask_head = Conv2d(store, f"{prefix}.mask_head", c4, 1, 1, rng)

    @property
    def upsample_factor(self) -> int:
        return 2 ** self.blocks

    def forward(self, f: np.ndarray) -> DualPrediction:
        return DualPrediction(mask_logits=self.mask_head.forward(self.up.forward(f)))

    __call__ = forward

    def backward(self, d_mask: np.ndarray, d_boundary: Optional[np.ndarray] = None) -> np.ndarray:
        return self.up.backward(self.mask_head.backward(d_mask))
