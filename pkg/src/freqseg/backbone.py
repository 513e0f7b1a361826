"""Toy frozen encoder with trainable bottleneck adapters.

This is a stand-in for a large pretrained ViT: a patchify convolution followed
by ``depth`` convolutional mixer blocks. The body is frozen by default; only
the adapters learn.

Block::

    h   = x + pw2(relu(pw1(dw3x3(x))))          frozen body, residual
    out = h + up(relu(down(h)))                 adapter, up zero-initialised
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .layers import Conv2d, DepthwiseConv2d, ReLU, Sequential
from .params import ParamStore


@dataclass
class BackboneConfig:
    patch: int = 16
    embed_dim: int = 64
    depth: int = 2
    adapter_dim: int = 16
    mlp_ratio: int = 4
    freeze_body: bool = True

    def validate(self) -> None:
        if self.patch < 1 or self.embed_dim < 1 or self.depth < 0:
            raise ConfigError("patch, embed_dim must be >= 1 and depth >= 0")
        if not 1 <= self.adapter_dim < self.embed_dim:
            raise ConfigError(f"adapter_dim ({self.adapter_dim}) must be in [1, embed_dim={self.embed_dim})")


class AdapterBlock:
    def __init__(self, store: ParamStore, name: str, cfg: BackboneConfig, rng: np.random.Generator):
        c = cfg.embed_dim
        self.body = Sequential(
            DepthwiseConv2d(store, f"{name}.dw", c, 3, rng),
            Conv2d(store, f"{name}.pw1", c, cfg.mlp_ratio * c, 1, rng),
            ReLU(),
            Conv2d(store, f"{name}.pw2", cfg.mlp_ratio * c, c, 1, rng),
        )
        self.adapter = Sequential(
            Conv2d(store, f"{name}.adapter.down", c, cfg.adapter_dim, 1, rng),
            ReLU(),
            Conv2d(store, f"{name}.adapter.up", cfg.adapter_dim, c, 1, rng, zero_init=True),
        )

    def forward(self, x):
        h = x + self.body.forward(x)
        return h + self.adapter.forward(h)

    def backward(self, dy):
        dh = dy + self.adapter.backward(dy)
        return dh + self.body.backward(dh)


class Backbone:
    """Maps ``(B, 1, H, W)`` images to ``(B, C, H/patch, W/patch)`` features."""

    def __init__(self, store: ParamStore, cfg: BackboneConfig, rng: np.random.Generator,
                 prefix: str = "backbone"):
        cfg.validate()
        self.cfg = cfg
        self.store = store
        self.prefix = prefix
        self.embed = Conv2d(store, f"{prefix}.patch_embed", 1, cfg.embed_dim, cfg.patch, rng,
                            stride=cfg.patch, pad=0, need_dx=False)
        self.blocks = [AdapterBlock(store, f"{prefix}.blocks.{i}", cfg, rng) for i in range(cfg.depth)]
        if cfg.freeze_body:
            self.freeze_body()

    def freeze_body(self) -> None:
        for name, p in self.store.items():
            if name.startswith(self.prefix + ".") and ".adapter." not in name:
                p.trainable = False
                p.grad[...] = 0.0

    def body_names(self):
        return [n for n in self.store if n.startswith(self.prefix + ".") and ".adapter." not in n]

    def adapter_names(self):
        return [n for n in self.store if n.startswith(self.prefix + ".") and ".adapter." in n]

    def check_input(self, shape) -> None:
        if len(shape) != 4 or shape[1] != 1:
            raise ShapeError(f"backbone expects (B, 1, H, W) images, got {tuple(shape)}")
        H, W = shape[2:]
        p = self.cfg.patch
        if H % p or W % p:
            raise ConfigError(f"image size {H}x{W} must be divisible by patch={p}")

    def encode(self, image: np.ndarray) -> np.ndarray:
        self.check_input(image.shape)
        x = self.embed.forward(image)
        for blk in self.blocks:
            x = blk.forward(x)
        return x

    forward = encode

    def backward(self, dy: np.ndarray) -> None:
        for blk in reversed(self.blocks):
            dy = blk.backward(dy)
        self.embed.backward(dy)
