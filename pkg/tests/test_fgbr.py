import numpy as np
import pytest

from freqseg.errors import ConfigError, ShapeError, UsageError
from freqseg.fgbr import DISTILL_HIDDEN, FGBR, NUM_HEADS, OMEGA_INIT, PROTO_DIM
from freqseg.params import ParamStore

from helpers import projection_check, randomize


def build(channels=16, hf=8, seed=0, **kw):
    store = ParamStore()
    return store, FGBR(store, channels, hf, np.random.default_rng(seed), **kw)


def inputs(rng, B=1, C=16, hf=8, H=8):
    return rng.normal(size=(B, C, H, H)), rng.normal(size=(B, hf, H, H)), rng.normal(size=(B, hf, H, H))


class TestPrototype:
    def test_defaults(self):
        assert (PROTO_DIM, NUM_HEADS, OMEGA_INIT, DISTILL_HIDDEN) == (64, 8, 0.2, 256)

    def test_shape(self, rng):
        _, g = build()
        _, hf, hc = inputs(rng, B=3)
        assert g.distill_prototype(hf, hc).shape == (3, 1, 64)

    def test_zero_input_is_bias_path(self, rng):
        store, g = build()
        randomize(store, rng)
        z = np.zeros((1, 8, 4, 4))
        proto = g.distill_prototype(z, z)
        b1 = store["fgbr.distill.fc1.bias"].value
        expected = np.maximum(b1, 0) @ store["fgbr.distill.fc2.weight"].value + store["fgbr.distill.fc2.bias"].value
        np.testing.assert_allclose(proto[0, 0], expected, atol=1e-14)

    def test_permutation_invariant(self, rng):
        _, g = build()
        _, hf, hc = inputs(rng)
        perm = rng.permutation(64)

        def shuffle(x):
            return x.reshape(1, 8, 64)[..., perm].reshape(x.shape)

        a = g.distill_prototype(hf, hc)
        b = g.distill_prototype(shuffle(hf), shuffle(hc))
        # pooling sums in a different order: equal up to roundoff
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)

    def test_distinct_items(self, rng):
        _, g = build()
        _, hf, hc = inputs(rng, B=2)
        p = g.distill_prototype(hf, hc)
        assert np.max(np.abs(p[0] - p[1])) > 1e-6

    def test_shape_mismatch(self, rng):
        _, g = build()
        with pytest.raises(ShapeError):
            g.distill_prototype(np.zeros((1, 8, 4, 4)), np.zeros((1, 8, 4, 6)))
        with pytest.raises(ShapeError):
            g.distill_prototype(np.zeros((1, 4, 4, 4)), np.zeros((1, 4, 4, 4)))


class TestRefine:
    def test_output_shape(self, rng):
        _, g = build()
        f, hf, hc = inputs(rng, B=2)
        assert g.forward(f, hf, hc).shape == f.shape

    def test_omega_zero_is_identity(self, rng):
        _, g = build(omega=0.0)
        f, hf, hc = inputs(rng)
        out = g.forward(f, hf, hc)
        assert out.tobytes() == f.tobytes()

    def test_single_token_attention_is_one(self, rng):
        _, g = build()
        f, hf, hc = inputs(rng, B=2)
        g.forward(100 * f, hf, hc)
        assert g.last_attention.shape == (2, 8, 64, 1)
        assert np.max(np.abs(g.last_attention - 1.0)) <= 1e-15

    def test_single_token_residual_is_spatially_constant(self, rng):
        _, g = build()
        f, hf, hc = inputs(rng)
        out = g.forward(f, hf, hc)
        shift = out - f
        np.testing.assert_allclose(shift, shift[..., :1, :1] * np.ones_like(shift), atol=1e-14)

    @pytest.mark.parametrize("tokens", [1, 3])
    def test_attention_rows_sum_to_one(self, rng, tokens):
        _, g = build(tokens=tokens)
        g.forward(*inputs(rng))
        np.testing.assert_allclose(g.last_attention.sum(axis=-1), 1.0, atol=1e-12)

    def test_head_divisibility(self):
        with pytest.raises(ConfigError):
            build(channels=12)

    def test_explicit_head_dim(self, rng):
        _, g = build(head_dim=5)
        assert g.dim == 40
        f, hf, hc = inputs(rng)
        assert g.forward(f, hf, hc).shape == f.shape


class TestBackward:
    @pytest.mark.parametrize("tokens", [1, 2])
    def test_grad_check(self, rng, tokens):
        store, g = build(tokens=tokens, hidden=32)
        f, hf, hc = inputs(rng)

        def run(grads):
            y = g.forward(f, hf, hc)
            if grads is not None:
                g.backward(grads[0])
            return [y]

        report = projection_check(store, run, rng)
        assert report.passed, report.format()
        assert {"fgbr.omega", "fgbr.attn.q.weight", "fgbr.attn.k.weight", "fgbr.distill.fc1.weight"} <= set(report.checks)

    def test_single_token_query_key_gradients_vanish(self, rng):
        store, g = build()
        f, hf, hc = inputs(rng)
        y = g.forward(f, hf, hc)
        store.zero_grad()
        g.backward(rng.normal(size=y.shape))
        for n in ("fgbr.attn.q.weight", "fgbr.attn.k.weight"):
            assert np.max(np.abs(store[n].grad)) <= 1e-12
        assert np.max(np.abs(store["fgbr.attn.v.weight"].grad)) > 0

    def test_input_gradients(self, rng):
        _, g = build(tokens=2, hidden=32)
        f, hf, hc = inputs(rng)
        r = rng.normal(size=f.shape)
        g.forward(f, hf, hc)
        d_f, d_hf, d_hc = g.backward(r)
        dirs = [rng.normal(size=a.shape) for a in (f, hf, hc)]
        eps = 1e-6

        def L(s):
            return (r * g.forward(f + s * dirs[0], hf + s * dirs[1], hc + s * dirs[2])).sum()

        fd = (L(eps) - L(-eps)) / (2 * eps)
        an = sum((d * a).sum() for d, a in zip(dirs, (d_f, d_hf, d_hc)))
        assert abs(fd - an) <= 1e-7 * max(1.0, abs(fd))

    def test_backward_without_forward(self):
        _, g = build()
        with pytest.raises(UsageError):
            g.backward(np.zeros((1, 16, 8, 8)))
