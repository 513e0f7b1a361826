"""
Dense float64 operators on (B, C, H, W) feature maps.

Every forward operator has a matching ``*_backward`` that maps the upstream
gradient to gradients of the inputs (and of the weights, where present).
Nothing here records a tape; the layers in :mod:`freqseg.layers` keep the
caches they need.
"""
from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError

DTYPE = np.float64


def as_feature_map(x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim != 4 or min(x.shape) < 1:
        raise ShapeError(f"expected a (B, C, H, W) array with all dims >= 1, got {x.shape}")
    return x


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _windows(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    # (B, C, Ho, Wo, kh, kw) view
    return sliding_window_view(_pad(x, pad), (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def conv2d_output_size(h: int, w: int, kh: int, kw: int, stride: int, pad: int) -> Tuple[int, int]:
    return (h + 2 * pad - kh) // stride + 1, (w + 2 * pad - kw) // stride + 1


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None,
           stride: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlation with weight ``(Cout, Cin, kh, kw)``."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects rank-4 input and weight, got {x.shape} and {w.shape}")
    if w.shape[1] != x.shape[1]:
        raise ShapeError(f"conv2d weight expects {w.shape[1]} input channels, input has {x.shape[1]}")
    kh, kw = w.shape[2:]
    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        out = np.einsum("bchw,oc->bohw", x, w[:, :, 0, 0], optimize=True)
    else:
        win = _windows(x, kh, kw, stride, pad)
        out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if b is not None:
        out = out + b.reshape(1, -1, 1, 1)
    return np.ascontiguousarray(out)


def conv2d_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray, stride: int = 1,
                    pad: int = 0, need_dx: bool = True):
    """Returns ``(dx, dw, db)``; ``dx`` is None when ``need_dx`` is false."""
    kh, kw = w.shape[2:]
    db = dy.sum(axis=(0, 2, 3))
    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        dw = np.einsum("bohw,bchw->oc", dy, x, optimize=True)[:, :, None, None]
        dx = np.einsum("bohw,oc->bchw", dy, w[:, :, 0, 0], optimize=True) if need_dx else None
        return dx, dw, db
    win = _windows(x, kh, kw, stride, pad)
    dw = np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3]))
    if not need_dx:
        return None, dw, db
    B, C, H, W = x.shape
    Ho, Wo = dy.shape[2:]
    # contract channels once, then scatter each kernel tap
    z = np.einsum("bohw,ocij->bcijhw", dy, w, optimize=True)
    dxp = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride] += z[:, :, i, j]
    dx = dxp[:, :, pad:pad + H, pad:pad + W] if pad else dxp
    return np.ascontiguousarray(dx), dw, db


def depthwise_conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None, pad: int = 1) -> np.ndarray:
    """Per-channel stride-1 convolution, weight ``(C, kh, kw)``."""
    if w.shape[0] != x.shape[1]:
        raise ShapeError(f"depthwise weight has {w.shape[0]} channels, input has {x.shape[1]}")
    kh, kw = w.shape[1:]
    win = _windows(x, kh, kw, 1, pad)
    out = np.einsum("bchwij,cij->bchw", win, w, optimize=True)
    if b is not None:
        out = out + b.reshape(1, -1, 1, 1)
    return out


def depthwise_conv2d_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray, pad: int = 1):
    kh, kw = w.shape[1:]
    win = _windows(x, kh, kw, 1, pad)
    dw = np.einsum("bchwij,bchw->cij", win, dy, optimize=True)
    db = dy.sum(axis=(0, 2, 3))
    B, C, H, W = x.shape
    Ho, Wo = dy.shape[2:]
    dxp = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + Ho, j:j + Wo] += dy * w[:, i, j].reshape(1, -1, 1, 1)
    return dxp[:, :, pad:pad + H, pad:pad + W], dw, db


def transposed_conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None,
                      stride: int = 2) -> np.ndarray:
    """2x2 / stride-2 transposed convolution, weight ``(Cin, Cout, 2, 2)``.

    Without bias this is the exact adjoint of ``conv2d(., w, stride=2)``.
    """
    if w.ndim != 4 or w.shape[2:] != (2, 2) or stride != 2:
        raise ShapeError("transposed_conv2d supports only 2x2 kernels with stride 2")
    if w.shape[0] != x.shape[1]:
        raise ShapeError(f"transposed_conv2d weight expects {w.shape[0]} input channels, input has {x.shape[1]}")
    B, _, H, W = x.shape
    cout = w.shape[1]
    out = np.einsum("bchw,coij->bohiwj", x, w, optimize=True).reshape(B, cout, 2 * H, 2 * W)
    if b is not None:
        out = out + b.reshape(1, -1, 1, 1)
    return out


def transposed_conv2d_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    B, cout, H2, W2 = dy.shape
    d6 = dy.reshape(B, cout, H2 // 2, 2, W2 // 2, 2)
    dx = np.einsum("bohiwj,coij->bchw", d6, w, optimize=True)
    dw = np.einsum("bchw,bohiwj->coij", x, d6, optimize=True)
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a, b):
    return a + b


def mul(a, b):
    return a * b


def scale(x, c: float):
    return x * c


def scale_backward(dy, c: float):
    return dy * c


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=DTYPE)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``y`` is the forward output."""
    return dy * y * (1.0 - y)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    if not -x.ndim <= axis < x.ndim:
        raise ConfigError(f"softmax axis {axis} invalid for rank {x.ndim}")
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def softmax_backward(dy: np.ndarray, y: np.ndarray, axis: int = -1) -> np.ndarray:
    return y * (dy - (dy * y).sum(axis=axis, keepdims=True))


def concat_channels(*xs: np.ndarray) -> np.ndarray:
    ref = xs[0].shape
    for x in xs[1:]:
        if x.shape[0] != ref[0] or x.shape[2:] != ref[2:]:
            raise ShapeError(f"concat_channels needs matching B, H, W; got {ref} and {x.shape}")
    return np.concatenate(xs, axis=1)


def concat_channels_backward(dy: np.ndarray, sizes: Sequence[int]):
    return np.split(dy, np.cumsum(sizes)[:-1], axis=1)


def avg_pool2(x: np.ndarray) -> np.ndarray:
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"avg_pool2 needs even spatial dims, got {H}x{W}")
    return x.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))


def avg_pool2_backward(dy: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(dy, 2, axis=2), 2, axis=3) * 0.25


def interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Corner-aligned linear interpolation weights, shape ``(n_out, n_in)``."""
    m = np.zeros((n_out, n_in), dtype=DTYPE)
    if n_in == 1:
        m[:, 0] = 1.0
        return m
    if n_out == 1:
        m[0, 0] = 1.0
        return m
    pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    i0 = np.minimum(np.floor(pos).astype(int), n_in - 2)
    frac = pos - i0
    rows = np.arange(n_out)
    m[rows, i0] = 1.0 - frac
    m[rows, i0 + 1] += frac
    return m


def upsample_bilinear(x: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    H, W = size
    ry = interp_matrix(x.shape[2], H)
    rx = interp_matrix(x.shape[3], W)
    return np.einsum("Hh,bchw,Ww->bcHW", ry, x, rx, optimize=True)


def upsample_bilinear_backward(dy: np.ndarray, in_hw: Tuple[int, int]) -> np.ndarray:
    ry = interp_matrix(in_hw[0], dy.shape[2])
    rx = interp_matrix(in_hw[1], dy.shape[3])
    return np.einsum("Hh,bcHW,Ww->bchw", ry, dy, rx, optimize=True)
