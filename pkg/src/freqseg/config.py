"""Run configuration: dataclass, ``key=value`` file format, presets and validation."""
from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, Tuple

from .errors import ConfigError

PRESETS: Dict[str, Dict[str, object]] = {
    "desk": {},
    # paper-scale widths: 512x512 input, 1024 channels, 8 heads x 128
    "fidelity": {"image_size": 512, "channels": 1024, "head_dim": 128, "adapter_dim": 64,
                 "batch": 16, "epochs": 300, "lr": 1e-4},
}


@dataclass
class RunConfig:
    # geometry
    image_size: int = 64
    patch: int = 16
    channels: int = 64
    depth: int = 2
    adapter_dim: int = 16
    mlp_ratio: int = 4
    freeze_body: bool = True
    # module toggles
    mfea: bool = True
    fgbr: bool = True
    mbgd: bool = True
    # fusion constants
    lam: float = 0.3
    alpha: float = 0.5
    beta: float = 0.5
    omega: float = 0.2
    lambda_b: float = 0.3
    lam_trainable: bool = False
    # prototype attention
    heads: int = 8
    head_dim: int = 0  # 0 -> channels // heads
    proto_dim: int = 64
    proto_tokens: int = 1
    distill_hidden: int = 256
    # decoder and supervision
    up_blocks: int = 4
    boundary_features: int = 16
    boundary_radius: int = 1
    # optimisation
    lr: float = 1e-4
    decay: float = 0.98
    batch: int = 16
    epochs: int = 300
    seed: int = 0
    # data
    n_samples: int = 100
    split: str = "8:1:1"
    distribution: str = "default"
    data_dir: str = "data"
    out_dir: str = "runs/default"
    spacing: float = 1.0

    # ------------------------------------------------------------------

    @property
    def grid(self) -> int:
        return self.image_size // self.patch

    @property
    def resolved_head_dim(self) -> int:
        return self.head_dim or self.channels // self.heads

    @property
    def split_ratios(self) -> Tuple[float, float, float]:
        try:
            parts = [float(p) for p in self.split.split(":")]
        except ValueError as exc:
            raise ConfigError(f"split must look like '8:1:1', got {self.split!r}") from exc
        if len(parts) != 3 or any(p < 0 for p in parts) or sum(parts) <= 0:
            raise ConfigError(f"split must be three non-negative ratios, got {self.split!r}")
        s = sum(parts)
        return parts[0] / s, parts[1] / s, parts[2] / s

    def validate(self) -> "RunConfig":
        if self.fgbr and not self.mfea:
            raise ConfigError("fgbr requires mfea: it consumes the high-frequency maps MFEA produces")
        if self.patch < 1 or self.image_size % self.patch:
            raise ConfigError(f"image_size={self.image_size} must be divisible by patch={self.patch}")
        if 2 ** self.up_blocks != self.patch:
            raise ConfigError(f"decoder upsamples by 2**up_blocks={2 ** self.up_blocks}, must equal patch={self.patch}")
        if self.mfea and (self.grid < 4 or self.grid % 4):
            raise ConfigError(f"MFEA needs a feature grid divisible by 4 and >= 4; image_size/patch = {self.grid}")
        if not 1 <= self.adapter_dim < self.channels:
            raise ConfigError("adapter_dim must satisfy 1 <= adapter_dim < channels")
        if self.fgbr and not self.head_dim and self.channels % self.heads:
            raise ConfigError(f"channels={self.channels} not divisible by heads={self.heads}")
        if self.lambda_b < 0:
            raise ConfigError("lambda_b must be >= 0")
        if self.batch < 1 or self.epochs < 0:
            raise ConfigError("batch must be >= 1 and epochs >= 0")
        if self.distribution not in ("default", "shift"):
            raise ConfigError(f"distribution must be 'default' or 'shift', got {self.distribution!r}")
        self.split_ratios
        return self

    # ------------------------------------------------------------------

    def to_text(self) -> str:
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in fields(self))

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    def with_overrides(self, pairs: Iterable[str]) -> "RunConfig":
        values = {}
        for pair in pairs:
            if "=" not in pair:
                raise ConfigError(f"override {pair!r} is not key=value")
            k, v = pair.split("=", 1)
            values[k.strip()] = v.strip()
        return self.replace(**_coerce(values))

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected key=value, got {raw!r}")
            k, v = line.split("=", 1)
            values[k.strip()] = v.strip()
        preset = values.pop("preset", None)
        cfg = base or cls()
        if preset is not None:
            cfg = cfg.replace(**preset_values(preset))
        return cfg.replace(**_coerce(values))

    @classmethod
    def load(cls, path, overrides: Iterable[str] = (), env: bool = True) -> "RunConfig":
        cfg = cls.from_text(Path(path).read_text()) if path else cls()
        cfg = cfg.with_overrides(overrides)
        if env and os.environ.get("FREQSEG_SEED"):
            cfg = cfg.replace(seed=_coerce({"seed": os.environ["FREQSEG_SEED"]})["seed"])
        return cfg


def preset_values(name: str) -> Dict[str, object]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return dict(PRESETS[name])


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(values: Dict[str, str]) -> Dict[str, object]:
    out = {}
    for k, v in values.items():
        if k not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {k!r}")
        typ = _FIELD_TYPES[k]
        try:
            if typ == "bool":
                if v.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(v)
                out[k] = v.lower() in ("true", "1", "yes")
            elif typ == "int":
                out[k] = int(v)
            elif typ == "float":
                out[k] = float(v)
            else:
                out[k] = v
        except ValueError as exc:
            raise ConfigError(f"config key {k!r}: cannot parse {v!r} as {typ}") from exc
    return out
