"""Multi-scale frequency extraction and alignment.

Splits the encoder features into Haar sub-bands at two scales, builds
reduced high/low-frequency maps, turns them into single-channel boundary and
structure attention, and modulates the input residually::

    f_enh = f + lam * f * (alpha * A_b + beta * A_s)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, UsageError
from .layers import Conv2d, ReLU, Sequential, Sigmoid
from .params import ParamStore
from .wavelet import haar_decompose, haar_decompose_backward

ALPHA_INIT = 0.5
BETA_INIT = 0.5
LAMBDA_INIT = 0.3


@dataclass
class MfeaOutput:
    f_enh: np.ndarray
    f_hf: np.ndarray
    f_hc: np.ndarray
    f_l: np.ndarray
    a_b: np.ndarray
    a_s: np.ndarray


def attention_head(store: ParamStore, name: str, cf: int, rng: np.random.Generator) -> Sequential:
    hidden = max(cf // 2, 1)
    return Sequential(
        Conv2d(store, f"{name}.conv3", cf, hidden, 3, rng),
        ReLU(),
        Conv2d(store, f"{name}.conv1", hidden, 1, 1, rng),
        Sigmoid(),
    )


class MFEA:
    def __init__(self, store: ParamStore, channels: int, rng: np.random.Generator, prefix: str = "mfea",
                 lam: float = LAMBDA_INIT, alpha: float = ALPHA_INIT, beta: float = BETA_INIT,
                 reduced: int | None = None, lam_trainable: bool = False):
        self.channels = channels
        self.cf = reduced if reduced is not None else max(channels // 2, 1)
        cf = self.cf
        self.phi_h = Conv2d(store, f"{prefix}.phi_h", 3 * channels, cf, 1, rng)
        self.phi_l = Conv2d(store, f"{prefix}.phi_l", channels, cf, 1, rng)
        self.phi_hc = Conv2d(store, f"{prefix}.phi_hc", 3 * channels, cf, 1, rng)
        self.psi_b = attention_head(store, f"{prefix}.psi_b", cf, rng)
        self.psi_s = attention_head(store, f"{prefix}.psi_s", cf, rng)
        self.alpha = store.add(f"{prefix}.alpha", alpha)
        self.beta = store.add(f"{prefix}.beta", beta)
        self.lam = store.add(f"{prefix}.lambda", lam, trainable=lam_trainable)
        self._cache = None

    def forward(self, f: np.ndarray) -> MfeaOutput:
        B, C, H, W = f.shape
        if C != self.channels:
            raise ConfigError(f"MFEA built for {self.channels} channels, got {C}")
        if H < 4 or W < 4 or H % 4 or W % 4:
            raise ConfigError(f"MFEA needs a feature grid with H, W >= 4 and divisible by 4, got {H}x{W}")

        bands = haar_decompose(f)
        half = bands.shape[2:]
        f_hf = T.upsample_bilinear(self.phi_h.forward(T.concat_channels(*bands.details())), (H, W))
        f_l = T.upsample_bilinear(self.phi_l.forward(bands.ll), (H, W))

        coarse = haar_decompose(T.avg_pool2(f))
        quarter = coarse.shape[2:]
        f_hc = T.upsample_bilinear(self.phi_hc.forward(T.concat_channels(*coarse.details())), (H, W))

        a_b = self.psi_b.forward(f_hf)
        a_s = self.psi_s.forward(f_l)
        alpha, beta, lam = float(self.alpha.value), float(self.beta.value), float(self.lam.value)
        m = alpha * a_b + beta * a_s
        # lam == 0 must reproduce f bit for bit (incl. signed zeros)
        f_enh = f.copy() if lam == 0.0 else f + lam * (f * m)
        self._cache = (f, a_b, a_s, m, half, quarter)
        return MfeaOutput(f_enh=f_enh, f_hf=f_hf, f_hc=f_hc, f_l=f_l, a_b=a_b, a_s=a_s)

    __call__ = forward

    def backward(self, d_enh: np.ndarray, d_hf: np.ndarray | None = None,
                 d_hc: np.ndarray | None = None) -> np.ndarray:
        """Gradient w.r.t. the input features; parameter grads are accumulated."""
        if self._cache is None:
            raise UsageError("MFEA.backward called without a preceding forward")
        f, a_b, a_s, m, half, quarter = self._cache
        self._cache = None
        H, W = f.shape[2:]
        alpha, beta, lam = float(self.alpha.value), float(self.beta.value), float(self.lam.value)

        d_f = d_enh * (1.0 + lam * m)
        fd = (d_enh * f).sum(axis=1, keepdims=True)
        d_m = lam * fd
        self.alpha.accumulate(np.asarray((d_m * a_b).sum()))
        self.beta.accumulate(np.asarray((d_m * a_s).sum()))
        self.lam.accumulate(np.asarray((fd * m).sum()))

        d_fhf = self.psi_b.backward(alpha * d_m)
        if d_hf is not None:
            d_fhf = d_fhf + d_hf
        d_fl = self.psi_s.backward(beta * d_m)

        d_hi = self.phi_h.backward(T.upsample_bilinear_backward(d_fhf, half))
        d_lh, d_hl, d_hh = T.concat_channels_backward(d_hi, [self.channels] * 3)
        d_ll = self.phi_l.backward(T.upsample_bilinear_backward(d_fl, half))
        d_f = d_f + haar_decompose_backward(d_ll, d_lh, d_hl, d_hh)

        if d_hc is None:
            d_hc = np.zeros((f.shape[0], self.cf, H, W))
        d_hic = self.phi_hc.backward(T.upsample_bilinear_backward(d_hc, quarter))
        c_lh, c_hl, c_hh = T.concat_channels_backward(d_hic, [self.channels] * 3)
        d_f = d_f + T.avg_pool2_backward(haar_decompose_backward(None, c_lh, c_hl, c_hh))
        return d_f
