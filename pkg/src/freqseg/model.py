"""Full network: backbone -> [MFEA] -> [FGBR] -> decoder, assembled from a RunConfig."""
from __future__ import annotations

import zlib
from typing import Dict, Optional, Tuple

import numpy as np

from .backbone import Backbone, BackboneConfig
from .config import RunConfig
from .errors import ShapeError, UsageError
from .fgbr import FGBR
from .mbgd import MBGD, DualPrediction, PlainDecoder
from .mfea import MFEA, MfeaOutput
from .params import ParamStore
from .supervision import LossWeights, total_loss
from . import tensor as T


def module_rng(seed: int, name: str) -> np.random.Generator:
    """Independent stream per module so shared modules initialise identically across ablations."""
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


class FreqSeg:
    def __init__(self, cfg: RunConfig):
        cfg.validate()
        self.cfg = cfg
        self.store = ParamStore()
        s = cfg.seed
        self.backbone = Backbone(
            self.store,
            BackboneConfig(patch=cfg.patch, embed_dim=cfg.channels, depth=cfg.depth,
                           adapter_dim=cfg.adapter_dim, mlp_ratio=cfg.mlp_ratio,
                           freeze_body=cfg.freeze_body),
            module_rng(s, "backbone"),
        )
        self.mfea: Optional[MFEA] = None
        self.fgbr: Optional[FGBR] = None
        if cfg.mfea:
            self.mfea = MFEA(self.store, cfg.channels, module_rng(s, "mfea"), lam=cfg.lam,
                             alpha=cfg.alpha, beta=cfg.beta, lam_trainable=cfg.lam_trainable)
        if cfg.fgbr:
            self.fgbr = FGBR(self.store, cfg.channels, self.mfea.cf, module_rng(s, "fgbr"),
                             heads=cfg.heads, head_dim=cfg.resolved_head_dim, proto_dim=cfg.proto_dim,
                             tokens=cfg.proto_tokens, hidden=cfg.distill_hidden, omega=cfg.omega)
        if cfg.mbgd:
            # both decoders draw from the "decoder" stream: identical up-stacks across ablation rows
            self.decoder = MBGD(self.store, cfg.channels, module_rng(s, "decoder"),
                                boundary_features=cfg.boundary_features, blocks=cfg.up_blocks)
        else:
            self.decoder = PlainDecoder(self.store, cfg.channels, module_rng(s, "decoder"),
                                        blocks=cfg.up_blocks)
        self.weights = LossWeights(cfg.lambda_b)
        self.last_mfea: Optional[MfeaOutput] = None
        self.last_features: Optional[np.ndarray] = None
        self._pending = False

    # ------------------------------------------------------------------

    def forward(self, images: np.ndarray) -> DualPrediction:
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 2:
            images = images[None, None]
        if images.ndim != 4 or images.shape[1] != 1:
            raise ShapeError(f"expected (B, 1, H, W) images, got {images.shape}")
        f = self.backbone.encode(images)
        self.last_features = f
        if self.mfea is not None:
            out = self.mfea.forward(f)
            self.last_mfea = out
            f = out.f_enh
            if self.fgbr is not None:
                f = self.fgbr.forward(f, out.f_hf, out.f_hc)
        pred = self.decoder.forward(f)
        self._pending = True
        return pred

    __call__ = forward

    def backward(self, grads: Dict[str, np.ndarray]) -> None:
        """Backpropagate logit gradients (``{"mask": ..., "boundary": ...}``) into the ParamStore."""
        if not self._pending:
            raise UsageError("FreqSeg.backward called without a preceding forward")
        self._pending = False
        d = self.decoder.backward(grads["mask"], grads.get("boundary"))
        if self.mfea is not None:
            d_hf = d_hc = None
            if self.fgbr is not None:
                d, d_hf, d_hc = self.fgbr.backward(d)
            d = self.mfea.backward(d, d_hf, d_hc)
        self.backbone.backward(d)
        self.store.grads_ready = True

    def loss(self, images: np.ndarray, masks: np.ndarray, boundaries: Optional[np.ndarray] = None,
             backward: bool = True) -> Tuple[float, Dict[str, float]]:
        """Multi-task loss; runs backward unless ``backward`` is false."""
        pred = self.forward(images)
        total, comps, grads = total_loss(pred, masks, self.weights, self.cfg.boundary_radius, boundaries)
        if backward:
            self.backward(grads)
        else:
            self._pending = False
        return total, comps

    def predict(self, images: np.ndarray):
        """Returns ``(mask_prob, boundary_prob)``; the latter is None without MBGD."""
        pred = self.forward(images)
        self._pending = False
        boundary = None if pred.boundary_logits is None else T.sigmoid(pred.boundary_logits)
        return T.sigmoid(pred.mask_logits), boundary
