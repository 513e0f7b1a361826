import numpy as np
import pytest

from freqseg.backbone import Backbone, BackboneConfig
from freqseg.errors import ConfigError, ShapeError
from freqseg.optim import Adam
from freqseg.params import ParamStore

from helpers import projection_check, randomize


def build(seed=0, **kw):
    store = ParamStore()
    bb = Backbone(store, BackboneConfig(**kw), np.random.default_rng(seed))
    return store, bb


class TestEncode:
    @pytest.mark.parametrize("size,patch,grid", [(64, 16, 4), (512, 16, 32), (32, 4, 8)])
    def test_grid_size(self, size, patch, grid):
        _, bb = build(patch=patch, embed_dim=8, adapter_dim=2)
        assert bb.encode(np.zeros((2, 1, size, size))).shape == (2, 8, grid, grid)

    def test_indivisible_image(self):
        _, bb = build()
        with pytest.raises(ConfigError, match="divisible by patch=16"):
            bb.encode(np.zeros((1, 1, 60, 64)))

    def test_requires_single_channel(self):
        _, bb = build()
        with pytest.raises(ShapeError):
            bb.encode(np.zeros((1, 3, 64, 64)))

    def test_zero_adapter_equals_body(self, rng):
        store, bb = build()
        x = rng.normal(size=(1, 1, 64, 64))
        out = bb.encode(x)
        h = bb.embed.forward(x)
        for blk in bb.blocks:
            h = h + blk.body.forward(h)
        np.testing.assert_array_equal(out, h)

    def test_deterministic(self, rng):
        x = rng.normal(size=(2, 1, 64, 64))
        a = build(seed=5)[1].encode(x)
        b = build(seed=5)[1].encode(x)
        assert a.tobytes() == b.tobytes()

    def test_adapter_fraction_below_ten_percent(self):
        store, bb = build()
        body = sum(store[n].value.size for n in bb.body_names())
        adapters = sum(store[n].value.size for n in bb.adapter_names())
        assert adapters < 0.1 * body


class TestTraining:
    def test_frozen_body_zero_grad(self, rng):
        store, bb = build(patch=4, embed_dim=8, adapter_dim=2)
        randomize(store, rng)
        y = bb.encode(rng.normal(size=(1, 1, 16, 16)))
        store.zero_grad()
        bb.backward(np.ones_like(y))
        for n in bb.body_names():
            assert not store[n].trainable
            np.testing.assert_array_equal(store[n].grad, 0.0)
        assert any(np.any(store[n].grad) for n in bb.adapter_names())

    def test_step_moves_only_adapters(self, rng):
        store, bb = build(patch=4, embed_dim=8, adapter_dim=2)
        before = store.snapshot()
        opt = Adam(store, lr=1e-2)
        y = bb.encode(rng.normal(size=(1, 1, 16, 16)))
        store.zero_grad()
        bb.backward(rng.normal(size=y.shape))
        store.grads_ready = True
        opt.step()
        for n in bb.body_names():
            np.testing.assert_array_equal(store[n].value, before[n])
        assert any(not np.array_equal(store[n].value, before[n]) for n in bb.adapter_names())

    def test_adapter_grad_check(self, rng):
        store, bb = build(patch=2, embed_dim=16, adapter_dim=4)
        randomize(store, rng)
        x = rng.normal(size=(1, 1, 16, 16))

        def run(grads):
            y = bb.encode(x)
            if grads is not None:
                bb.backward(grads[0])
            return [y]

        report = projection_check(store, run, rng)
        assert report.passed, report.format()
        assert set(report.checks) == set(bb.adapter_names())

    def test_unfrozen_body_gets_grads(self, rng):
        store, bb = build(patch=2, embed_dim=8, adapter_dim=2, freeze_body=False)
        randomize(store, rng)
        x = rng.normal(size=(1, 1, 8, 8))

        def run(grads):
            y = bb.encode(x)
            if grads is not None:
                bb.backward(grads[0])
            return [y]

        report = projection_check(store, run, rng)
        assert report.passed, report.format()
        assert "backbone.patch_embed.weight" in report.checks

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            build(embed_dim=8, adapter_dim=8)
