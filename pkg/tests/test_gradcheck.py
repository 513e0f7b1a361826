import numpy as np
import pytest

from freqseg.errors import ConfigError
from freqseg.gradcheck import DENOM_FLOOR, grad_check, relative_error
from freqseg.params import ParamStore


def squared_norm(store):
    def f():
        total = 0.0
        for _, p in store.items():
            p.accumulate(2.0 * p.value)
            total += float((p.value ** 2).sum())
        return total
    return f


class TestGradCheck:
    def test_sum_of_squares_passes(self, rng):
        store = ParamStore()
        store.add("a", rng.normal(size=(5, 3)))
        store.add("b", rng.normal(size=7))
        report = grad_check(squared_norm(store), store)
        assert report.passed
        # quadratic: central differences are exact up to roundoff
        assert report.worst < 1e-8

    def test_wrong_gradient_fails(self, rng):
        store = ParamStore()
        store.add("a", rng.normal(size=4))

        def f():
            store["a"].accumulate(3.0 * store["a"].value)
            return float((store["a"].value ** 2).sum())

        report = grad_check(f, store)
        assert not report.passed
        assert [c.name for c in report.failures()] == ["a"]

    def test_frozen_skipped(self, rng):
        store = ParamStore()
        store.add("live", rng.normal(size=3))
        store.add("frozen", rng.normal(size=3), trainable=False)
        f = squared_norm(store)
        report = grad_check(f, store)
        assert report.skipped_frozen == ["frozen"]
        assert "frozen" not in report.checks
        # the analytic gradient of a frozen entry stays zero even though the loss depends on it
        store.zero_grad()
        f()
        np.testing.assert_array_equal(store["frozen"].grad, 0.0)

    def test_subsampling_caps_coordinates(self, rng):
        store = ParamStore()
        store.add("big", rng.normal(size=(20, 20)))
        report = grad_check(squared_norm(store), store, max_coords=32)
        assert report.checks["big"].n_checked == 32

    def test_non_finite_reported(self):
        store = ParamStore()
        store.add("a", np.array([1.0]))

        def f():
            return float("nan")

        report = grad_check(f, store)
        assert not report.passed
        assert not report.checks["a"].finite
        assert "NaN" in report.format()

    @pytest.mark.parametrize("eps", [1e-8, 1e-2])
    def test_eps_range(self, eps):
        with pytest.raises(ConfigError):
            grad_check(lambda: 0.0, ParamStore(), eps=eps)

    def test_grads_zeroed_after(self, rng):
        store = ParamStore()
        store.add("a", rng.normal(size=3))
        grad_check(squared_norm(store), store)
        np.testing.assert_array_equal(store["a"].grad, 0.0)

    def test_relative_error_floor(self):
        assert relative_error(0.0, 1e-9) == pytest.approx(1e-9 / DENOM_FLOOR)
        assert relative_error(2.0, 1.0) == 0.5
