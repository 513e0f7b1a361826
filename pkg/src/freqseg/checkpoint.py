"""Checkpoint directories.

::

    config.txt       RunConfig as key=value
    manifest.txt     name <TAB> section <TAB> shape <TAB> trainable   (one line per tensor)
    params.fqt       FQT1 records, concatenated in manifest order
    optim.txt        optimizer tensor names, one per line
    optim.fqt        FQT1 records in optim.txt order
    state.json       epoch, best score, shuffle RNG state
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple


from .config import RunConfig
from .errors import ConfigError, ValidationError
from .model import FreqSeg
from .optim import Adam
from .tensorio import read_tensor, write_tensor


def _write_records(path: Path, arrays) -> None:
    with open(path, "wb") as fh:
        for arr in arrays:
            write_tensor(fh, arr)


def _read_records(path: Path, count: int):
    with open(path, "rb") as fh:
        return [read_tensor(fh) for _ in range(count)]


def save_checkpoint(path, model: FreqSeg, optimizer: Optional[Adam] = None,
                    state: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.txt").write_text(model.cfg.to_text())
    lines, arrays = [], []
    for name, p in model.store.items():
        shape = "x".join(str(d) for d in p.value.shape) or "scalar"
        lines.append(f"{name}\t{model.store.section(name)}\t{shape}\t{int(p.trainable)}")
        arrays.append(p.value)
    (path / "manifest.txt").write_text("\n".join(lines) + "\n")
    _write_records(path / "params.fqt", arrays)
    if optimizer is not None:
        ostate = optimizer.state()
        (path / "optim.txt").write_text("\n".join(ostate) + "\n")
        _write_records(path / "optim.fqt", ostate.values())
    (path / "state.json").write_text(json.dumps(state or {}, indent=1))
    return path


def load_checkpoint(path, optimizer_kwargs: Optional[Dict[str, Any]] = None
                    ) -> Tuple[FreqSeg, Optional[Adam], Dict[str, Any]]:
    path = Path(path)
    if not (path / "manifest.txt").exists():
        raise FileNotFoundError(f"no checkpoint at {path}")
    cfg = RunConfig.from_text((path / "config.txt").read_text())
    model = FreqSeg(cfg)
    rows = [ln.split("\t") for ln in (path / "manifest.txt").read_text().splitlines() if ln]
    arrays = _read_records(path / "params.fqt", len(rows))
    names = [r[0] for r in rows]
    if set(names) != set(model.store):
        missing = set(model.store) - set(names)
        extra = set(names) - set(model.store)
        raise ConfigError(f"checkpoint does not match its config (missing {sorted(missing)[:3]}, extra {sorted(extra)[:3]})")
    for (name, _section, _shape, trainable), arr in zip(rows, arrays):
        p = model.store[name]
        if arr.shape != p.value.shape:
            raise ValidationError(f"{name}: checkpoint shape {arr.shape} != model shape {p.value.shape}")
        p.value[...] = arr
        p.trainable = bool(int(trainable))
    optimizer = None
    if (path / "optim.txt").exists():
        keys = [k for k in (path / "optim.txt").read_text().splitlines() if k]
        optimizer = Adam(model.store, **(optimizer_kwargs or {"lr": cfg.lr, "decay": cfg.decay}))
        optimizer.load_state(dict(zip(keys, _read_records(path / "optim.fqt", len(keys)))))
    state = json.loads((path / "state.json").read_text()) if (path / "state.json").exists() else {}
    return model, optimizer, state
