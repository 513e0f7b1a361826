"""Named parameter storage with gradient slots and frozen flags."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, Tuple

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray
    trainable: bool = True

    def accumulate(self, g: np.ndarray) -> None:
        # frozen entries keep an all-zero gradient
        if not self.trainable:
            return
        if g.shape != self.value.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {self.value.shape}")
        self.grad += g


class ParamStore:
    """Ordered mapping ``name -> Param``.

    Names are dotted paths (``mfea.phi_h.weight``); the first component is the
    checkpoint section the entry belongs to.
    """

    def __init__(self) -> None:
        self._entries: Dict[str, Param] = {}
        self.grads_ready = False

    def add(self, name: str, value, trainable: bool = True) -> Param:
        if name in self._entries:
            raise ConfigError(f"duplicate parameter name {name!r}")
        value = np.array(value, dtype=np.float64)
        p = Param(value=value, grad=np.zeros_like(value), trainable=trainable)
        self._entries[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def items(self) -> Iterator[Tuple[str, Param]]:
        return iter(self._entries.items())

    def trainable_items(self) -> Iterator[Tuple[str, Param]]:
        return ((n, p) for n, p in self._entries.items() if p.trainable)

    def zero_grad(self) -> None:
        for p in self._entries.values():
            p.grad[...] = 0.0
        self.grads_ready = False

    def set_trainable(self, prefix: str, flag: bool) -> None:
        for name, p in self._entries.items():
            if name == prefix or name.startswith(prefix + "."):
                p.trainable = flag
                if not flag:
                    p.grad[...] = 0.0

    def count(self, prefix: str = "", trainable: bool | None = None) -> int:
        total = 0
        for name, p in self._entries.items():
            if prefix and not (name == prefix or name.startswith(prefix + ".")):
                continue
            if trainable is not None and p.trainable != trainable:
                continue
            total += p.value.size
        return total

    @staticmethod
    def section(name: str) -> str:
        return name.split(".", 1)[0]

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {n: p.value.copy() for n, p in self._entries.items()}
