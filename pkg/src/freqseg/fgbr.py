"""Boundary-prototype refinement.

A small MLP distils a 64-d prototype from globally pooled high-frequency
features; every spatial position of the enhanced map then attends to the
prototype tokens (multi-head cross-attention) and the projected result is
added back with weight ``omega``.
"""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError, UsageError
from .layers import Linear, ReLU
from .params import ParamStore

PROTO_DIM = 64
NUM_HEADS = 8
OMEGA_INIT = 0.2
DISTILL_HIDDEN = 256


class FGBR:
    def __init__(self, store: ParamStore, channels: int, hf_channels: int, rng: np.random.Generator,
                 prefix: str = "fgbr", heads: int = NUM_HEADS, head_dim: int | None = None,
                 proto_dim: int = PROTO_DIM, tokens: int = 1, hidden: int = DISTILL_HIDDEN,
                 omega: float = OMEGA_INIT):
        if head_dim is None:
            if channels % heads:
                raise ConfigError(f"channels ({channels}) must be divisible by heads ({heads}) when head_dim is implied")
            head_dim = channels // heads
        if tokens < 1:
            raise ConfigError("prototype token count must be >= 1")
        self.channels, self.hf_channels = channels, hf_channels
        self.heads, self.head_dim, self.dim = heads, head_dim, heads * head_dim
        self.proto_dim, self.tokens = proto_dim, tokens

        self.fc1 = Linear(store, f"{prefix}.distill.fc1", 2 * hf_channels, hidden, rng)
        self.act = ReLU()
        self.fc2 = Linear(store, f"{prefix}.distill.fc2", hidden, proto_dim * tokens, rng, gain=1.0)
        D = self.dim
        self.wq = Linear(store, f"{prefix}.attn.q", channels, D, rng, gain=1.0)
        self.wk = Linear(store, f"{prefix}.attn.k", proto_dim, D, rng, gain=1.0)
        self.wv = Linear(store, f"{prefix}.attn.v", proto_dim, D, rng, gain=1.0)
        self.wo = Linear(store, f"{prefix}.attn.o", D, channels, rng, gain=1.0)
        self.omega = store.add(f"{prefix}.omega", omega)
        self._distill_cache = None
        self._cache = None
        self.last_attention = None
        self.last_prototype = None

    # -- prototype --------------------------------------------------------

    def distill_prototype(self, f_hf: np.ndarray, f_hc: np.ndarray) -> np.ndarray:
        """``(B, tokens, 64)`` prototype; invariant to spatial permutations."""
        if f_hf.shape != f_hc.shape:
            raise ShapeError(f"f_hf {f_hf.shape} and f_hc {f_hc.shape} must match")
        if f_hf.shape[1] != self.hf_channels:
            raise ShapeError(f"expected {self.hf_channels} high-frequency channels, got {f_hf.shape[1]}")
        g = T.concat_channels(f_hf, f_hc).mean(axis=(2, 3))
        h = self.act.forward(self.fc1.forward(g))
        proto = self.fc2.forward(h).reshape(g.shape[0], self.tokens, self.proto_dim)
        self._distill_cache = f_hf.shape
        return proto

    def distill_backward(self, d_proto: np.ndarray):
        if self._distill_cache is None:
            raise UsageError("distill_backward called without a preceding distill_prototype")
        shape, self._distill_cache = self._distill_cache, None
        B, C, H, W = shape
        dh = self.fc2.backward(d_proto.reshape(B, -1))
        dg = self.fc1.backward(self.act.backward(dh)) / (H * W)
        d_hf = np.broadcast_to(dg[:, :C, None, None], shape).copy()
        d_hc = np.broadcast_to(dg[:, C:, None, None], shape).copy()
        return d_hf, d_hc

    # -- cross-attention --------------------------------------------------

    def _split(self, x):
        B, L, _ = x.shape
        return x.reshape(B, L, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def _merge(self, x):
        B, h, L, d = x.shape
        return x.transpose(0, 2, 1, 3).reshape(B, L, h * d)

    def refine(self, f_enh: np.ndarray, proto: np.ndarray) -> np.ndarray:
        B, C, H, W = f_enh.shape
        if C != self.channels:
            raise ShapeError(f"FGBR built for {self.channels} channels, got {C}")
        if proto.shape[0] != B or proto.shape[2] != self.proto_dim:
            raise ShapeError(f"prototype shape {proto.shape} incompatible with batch {B}")
        x = f_enh.reshape(B, C, H * W).transpose(0, 2, 1)
        q = self._split(self.wq.forward(x))
        k = self._split(self.wk.forward(proto))
        v = self._split(self.wv.forward(proto))
        scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(self.head_dim)
        attn = T.softmax(scores, axis=-1)
        o = self._merge(attn @ v)
        y = self.wo.forward(o)
        attended = y.transpose(0, 2, 1).reshape(B, C, H, W)
        omega = float(self.omega.value)
        self.last_attention = attn
        self._cache = (f_enh.shape, q, k, v, attn, attended)
        if omega == 0.0:
            return f_enh.copy()
        return f_enh + omega * attended

    def refine_backward(self, d_out: np.ndarray):
        """Returns ``(d_f_enh, d_proto)``."""
        if self._cache is None:
            raise UsageError("refine_backward called without a preceding refine")
        shape, q, k, v, attn, attended = self._cache
        self._cache = None
        B, C, H, W = shape
        omega = float(self.omega.value)
        self.omega.accumulate(np.asarray((d_out * attended).sum()))
        dy = (omega * d_out).reshape(B, C, H * W).transpose(0, 2, 1)
        do = self._split(self.wo.backward(dy))
        d_attn = do @ v.transpose(0, 1, 3, 2)
        dv = attn.transpose(0, 1, 3, 2) @ do
        ds = T.softmax_backward(d_attn, attn, axis=-1) / np.sqrt(self.head_dim)
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        dx = self.wq.backward(self._merge(dq))
        d_proto = self.wk.backward(self._merge(dk)) + self.wv.backward(self._merge(dv))
        d_enh = d_out + dx.transpose(0, 2, 1).reshape(B, C, H, W)
        return d_enh, d_proto

    # -- combined ---------------------------------------------------------

    def forward(self, f_enh: np.ndarray, f_hf: np.ndarray, f_hc: np.ndarray) -> np.ndarray:
        proto = self.distill_prototype(f_hf, f_hc)
        self.last_prototype = proto
        return self.refine(f_enh, proto)

    __call__ = forward

    def backward(self, d_refined: np.ndarray):
        """Returns ``(d_f_enh, d_f_hf, d_f_hc)``."""
        d_enh, d_proto = self.refine_backward(d_refined)
        d_hf, d_hc = self.distill_backward(d_proto)
        return d_enh, d_hf, d_hc
