"""Shared plumbing for module-level gradient checks."""
import numpy as np

from freqseg.gradcheck import grad_check


def projection_check(store, run, outputs_shape_rng, **kw):
    """grad_check of ``L = sum_i <R_i, y_i>`` for a module whose forward returns ``y_i``.

    ``run(grads)`` performs forward, then backward with ``grads`` (a list of
    upstream gradients, or None for a loss-only evaluation) and returns the
    list of outputs.
    """
    probes = [outputs_shape_rng.normal(size=y.shape) for y in run(None)]

    def loss():
        return float(sum((r * y).sum() for r, y in zip(probes, run(None))))

    def f():
        ys = run(probes)
        return float(sum((r * y).sum() for r, y in zip(probes, ys)))

    return grad_check(f, store, loss=loss, **kw)


def randomize(store, rng, scale=0.3, names=None):
    """Give zero-initialised entries nonzero values so every gradient path is exercised."""
    for name, p in store.items():
        if names is None or any(name.startswith(n) for n in names):
            if p.value.ndim and not np.any(p.value):
                p.value[...] = scale * rng.normal(size=p.value.shape)
