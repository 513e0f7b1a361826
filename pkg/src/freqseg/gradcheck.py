"""Central finite-difference check of analytic gradients stored in a ParamStore."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .errors import ConfigError
from .params import ParamStore

# gradients below this magnitude are compared absolutely (FD roundoff ~1e-11)
DENOM_FLOOR = 1e-6


@dataclass
class TensorCheck:
    name: str
    max_rel_error: float
    n_checked: int
    passed: bool
    finite: bool = True


@dataclass
class GradCheckReport:
    tol: float
    eps: float
    checks: Dict[str, TensorCheck] = field(default_factory=dict)
    skipped_frozen: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    @property
    def worst(self) -> float:
        return max((c.max_rel_error for c in self.checks.values()), default=0.0)

    def failures(self) -> List[TensorCheck]:
        return [c for c in self.checks.values() if not c.passed]

    def format(self) -> str:
        lines = []
        for c in self.checks.values():
            status = "ok  " if c.passed else ("NaN " if not c.finite else "FAIL")
            lines.append(f"{status} {c.name:<48s} max_rel={c.max_rel_error:.2e} n={c.n_checked}")
        for name in self.skipped_frozen:
            lines.append(f"skip {name:<48s} (frozen)")
        return "\n".join(lines)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), DENOM_FLOOR)


def grad_check(f: Callable[[], float], params: ParamStore, eps: float = 1e-5, tol: float = 1e-4,
               max_coords: int = 32, seed: int = 0, loss: Optional[Callable[[], float]] = None,
               names: Optional[List[str]] = None) -> GradCheckReport:
    """Compare the gradient produced by ``f`` against central differences.

    ``f()`` must run forward and backward and return the scalar loss; it is
    called once with zeroed gradients to collect the analytic gradient. The
    perturbed evaluations use ``loss()`` if given (forward only), otherwise
    ``f``. Frozen entries are skipped. At most ``max_coords`` coordinates per
    tensor are probed (all of them when the tensor is smaller).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ConfigError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    rng = np.random.default_rng(seed)
    evaluate = loss if loss is not None else f

    params.zero_grad()
    base = f()
    analytic = {n: p.grad.copy() for n, p in params.items()}
    params.zero_grad()

    report = GradCheckReport(tol=tol, eps=eps)
    for name, p in params.items():
        if names is not None and name not in names:
            continue
        if not p.trainable:
            report.skipped_frozen.append(name)
            continue
        if not np.isfinite(base):
            report.checks[name] = TensorCheck(name, float("inf"), 0, False, finite=False)
            continue
        n = p.value.size
        idx = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        flat = p.value.reshape(-1)
        worst, finite = 0.0, True
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = evaluate()
            flat[i] = orig - eps
            fm = evaluate()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                finite = False
                worst = float("inf")
                continue
            numeric = (fp - fm) / (2.0 * eps)
            worst = max(worst, relative_error(float(analytic[name].reshape(-1)[i]), numeric))
        report.checks[name] = TensorCheck(name, worst, len(idx), finite and worst <= tol, finite)
    params.zero_grad()
    return report
