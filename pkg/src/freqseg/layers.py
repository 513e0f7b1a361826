"""Stateful layers: parameters live in a ParamStore, activations in a one-shot cache."""
from __future__ import annotations

from typing import List, Optional

import numpy as np

from . import tensor as T
from .errors import UsageError
from .params import ParamStore


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Layer:
    """Base class. ``forward`` stores a cache that ``backward`` consumes exactly once."""

    def __init__(self) -> None:
        self._cache = None

    def _take_cache(self):
        if self._cache is None:
            raise UsageError(f"{type(self).__name__}.backward called without a preceding forward")
        cache, self._cache = self._cache, None
        return cache

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    __call__ = forward


class Conv2d(Layer):
    def __init__(self, store: ParamStore, name: str, cin: int, cout: int, k: int,
                 rng: np.random.Generator, stride: int = 1, pad: Optional[int] = None,
                 zero_init: bool = False, need_dx: bool = True):
        super().__init__()
        self.stride = stride
        self.pad = (k - 1) // 2 if pad is None else pad
        self.need_dx = need_dx
        shape = (cout, cin, k, k)
        w = np.zeros(shape) if zero_init else he_normal(rng, shape, cin * k * k)
        self.w = store.add(f"{name}.weight", w)
        self.b = store.add(f"{name}.bias", np.zeros(cout))

    def forward(self, x):
        self._cache = x
        return T.conv2d(x, self.w.value, self.b.value, self.stride, self.pad)

    def backward(self, dy):
        x = self._take_cache()
        need_w = self.w.trainable or self.b.trainable
        if not need_w and not self.need_dx:
            return None
        dx, dw, db = T.conv2d_backward(dy, x, self.w.value, self.stride, self.pad, self.need_dx)
        self.w.accumulate(dw)
        self.b.accumulate(db)
        return dx


class DepthwiseConv2d(Layer):
    def __init__(self, store: ParamStore, name: str, channels: int, k: int, rng: np.random.Generator):
        super().__init__()
        self.pad = (k - 1) // 2
        self.w = store.add(f"{name}.weight", he_normal(rng, (channels, k, k), k * k))
        self.b = store.add(f"{name}.bias", np.zeros(channels))

    def forward(self, x):
        self._cache = x
        return T.depthwise_conv2d(x, self.w.value, self.b.value, self.pad)

    def backward(self, dy):
        x = self._take_cache()
        dx, dw, db = T.depthwise_conv2d_backward(dy, x, self.w.value, self.pad)
        self.w.accumulate(dw)
        self.b.accumulate(db)
        return dx


class ConvTranspose2d(Layer):
    """2x2, stride-2 upsampling convolution."""

    def __init__(self, store: ParamStore, name: str, cin: int, cout: int, rng: np.random.Generator):
        super().__init__()
        # each output pixel sees exactly one input pixel, so fan-in is cin
        self.w = store.add(f"{name}.weight", he_normal(rng, (cin, cout, 2, 2), cin))
        self.b = store.add(f"{name}.bias", np.zeros(cout))

    def forward(self, x):
        self._cache = x
        return T.transposed_conv2d(x, self.w.value, self.b.value)

    def backward(self, dy):
        x = self._take_cache()
        dx, dw, db = T.transposed_conv2d_backward(dy, x, self.w.value)
        self.w.accumulate(dw)
        self.b.accumulate(db)
        return dx


class Linear(Layer):
    """``y = x @ W + b`` over the last axis."""

    def __init__(self, store: ParamStore, name: str, din: int, dout: int, rng: np.random.Generator,
                 gain: float = 2.0):
        super().__init__()
        self.w = store.add(f"{name}.weight", rng.normal(0.0, np.sqrt(gain / din), size=(din, dout)))
        self.b = store.add(f"{name}.bias", np.zeros(dout))

    def forward(self, x):
        self._cache = x
        return x @ self.w.value + self.b.value

    def backward(self, dy):
        x = self._take_cache()
        x2 = x.reshape(-1, x.shape[-1])
        d2 = dy.reshape(-1, dy.shape[-1])
        self.w.accumulate(x2.T @ d2)
        self.b.accumulate(d2.sum(axis=0))
        return dy @ self.w.value.T


class ReLU(Layer):
    def forward(self, x):
        self._cache = x
        return T.relu(x)

    def backward(self, dy):
        return T.relu_backward(dy, self._take_cache())


class Sigmoid(Layer):
    def forward(self, x):
        y = T.sigmoid(x)
        self._cache = y
        return y

    def backward(self, dy):
        return T.sigmoid_backward(dy, self._take_cache())


class Sequential(Layer):
    def __init__(self, *layers: Layer):
        super().__init__()
        self.layers: List[Layer] = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy
