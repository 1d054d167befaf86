"""Backward-pass checks: analytic gradients vs central finite differences."""

import numpy as np
import pytest

import mmnets.engine as E
from mmnets.engine.gradcheck import make_inputs


class TestBackwardBasics:
    def test_square_sum(self):
        x = E.Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
        loss = E.sum_(E.mul(x, x))
        E.backward(loss)
        np.testing.assert_allclose(x.grad, 2.0 * x.data)

    def test_relu_subgradient(self):
        x = E.Tensor(np.array([-1.0, 2.0]), requires_grad=True)
        E.backward(E.sum_(E.relu(x)))
        np.testing.assert_array_equal(x.grad, [0.0, 1.0])

    def test_fanout_accumulates(self):
        x = E.Tensor(np.array([3.0]), requires_grad=True)
        y = E.add(E.mul(x, 2.0), E.mul(x, 5.0))
        E.backward(E.sum_(y))
        np.testing.assert_allclose(x.grad, [7.0])

    def test_non_scalar_loss_rejected(self):
        x = E.Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            E.backward(E.mul(x, 2.0))

    def test_no_grad_blocks_recording(self):
        x = E.Tensor(np.array([2.0]), requires_grad=True)
        with E.no_grad():
            y = E.mul(x, 3.0)
        assert not y.requires_grad
        assert y._vjps == ()

    def test_detach_cuts_graph(self):
        x = E.Tensor(np.array([2.0]), requires_grad=True)
        y = E.mul(x, 3.0).detach()
        z = E.sum_(E.mul(y, E.mul(x, 1.0)))
        E.backward(z)
        np.testing.assert_allclose(x.grad, [6.0])  # only the direct path

    def test_tape_topological_order(self):
        x = E.Tensor(np.array([1.0]), requires_grad=True)
        a = E.mul(x, 2.0)
        b = E.add(a, x)
        loss = E.sum_(E.mul(b, a))
        tape = E.Tape.from_root(loss)
        pos = {id(n): i for i, n in enumerate(tape.nodes)}
        for node in tape.nodes:
            for parent, _ in node._vjps:
                assert pos[id(parent)] < pos[id(node)]


class TestGradCheck:
    def test_linear_is_exact(self):
        rng = np.random.default_rng(0)
        (x,) = make_inputs(rng, (5,))
        err = E.grad_check(lambda t: E.sum_(E.mul(t, 3.0)), [x])
        assert err < 1e-9

    def test_conv2d(self):
        rng = np.random.default_rng(1)
        x, w, b = make_inputs(rng, (1, 2, 6, 6), (3, 2, 3, 3), (3,))
        err = E.grad_check(lambda *t: E.mean(E.mul(E.conv2d(*t, 1, 1),
                                                   E.conv2d(*t, 1, 1))), [x, w, b])
        assert err < 1e-6

    def test_strided_conv2d(self):
        rng = np.random.default_rng(2)
        x, w, b = make_inputs(rng, (2, 2, 7, 7), (3, 2, 3, 3), (3,))
        err = E.grad_check(lambda *t: E.mean(E.mul(E.conv2d(*t, 2, 1),
                                                   E.conv2d(*t, 2, 1))), [x, w, b])
        assert err < 1e-6

    def test_maxpool_away_from_ties(self):
        rng = np.random.default_rng(3)
        (x,) = make_inputs(rng, (1, 2, 4, 4))

        def f(t):
            out, _ = E.maxpool2d_with_indices(t)
            return E.sum_(E.mul(out, out))

        assert E.grad_check(f, [x]) < 1e-6

    def test_unpool(self):
        rng = np.random.default_rng(4)
        (x,) = make_inputs(rng, (1, 2, 6, 6))

        def f(t):
            pooled, idx = E.maxpool2d_with_indices(t)
            up = E.unpool(pooled, idx, (6, 6))
            return E.mean(E.mul(up, up))

        assert E.grad_check(f, [x]) < 1e-6

    def test_upsample(self):
        rng = np.random.default_rng(5)
        (x,) = make_inputs(rng, (1, 2, 3, 3))
        err = E.grad_check(lambda t: E.sum_(E.power(E.upsample_nearest(t, 2), 2.0)), [x])
        assert err < 1e-6

    def test_batch_norm(self):
        # random linear probe keeps gradient elements away from zero, where
        # the relative-error formula would amplify finite-difference noise
        rng = np.random.default_rng(6)
        x, g, b = make_inputs(rng, (2, 3, 4, 4), (3,), (3,))
        probe = rng.standard_normal((2, 3, 4, 4))
        err = E.grad_check(
            lambda *t: E.sum_(E.mul(E.batch_norm(*t, training=True), probe)), [x, g, b])
        assert err < 1e-5

    def test_softmax(self):
        rng = np.random.default_rng(7)
        (x,) = make_inputs(rng, (2, 4, 3, 3))
        tgt = rng.standard_normal((2, 4, 3, 3))
        err = E.grad_check(lambda t: E.mean(E.power(E.sub(E.softmax(t), tgt), 2.0)), [x])
        assert err < 1e-6

    def test_composite_pipeline(self):
        rng = np.random.default_rng(8)
        x, w, b = make_inputs(rng, (1, 2, 6, 6), (3, 2, 3, 3), (3,))

        def f(xi, wi, bi):
            out = E.relu(E.conv2d(xi, wi, bi, 1, 1))
            pooled, _ = E.maxpool2d_with_indices(out)
            return E.mean(E.mul(pooled, pooled))

        assert E.grad_check(f, [x, w, b], eps=1e-3) < 1e-5


class TestAdam:
    def test_zero_grad_no_move(self):
        p = E.Tensor(np.array([1.0, 2.0]), requires_grad=True)
        st = E.AdamState.for_params([p])
        E.adam_step([p], [np.zeros(2)], st)
        np.testing.assert_array_equal(p.data, [1.0, 2.0])
        assert st.t == 1

    def test_first_step_magnitude(self):
        p = E.Tensor(np.array([0.0]), requires_grad=True)
        st = E.AdamState.for_params([p], lr=2e-4)
        E.adam_step([p], [np.array([1.0])], st)
        assert p.data[0] == pytest.approx(-2e-4 * (1.0 / (1.0 + 1e-8)), rel=1e-6)

    def test_monotone_descent_on_constant_grad(self):
        p = E.Tensor(np.array([1.0]), requires_grad=True)
        st = E.AdamState.for_params([p])
        E.adam_step([p], [np.array([1.0])], st)
        v1 = p.data[0]
        E.adam_step([p], [np.array([1.0])], st)
        assert v1 < 1.0 and p.data[0] < v1


@pytest.mark.parametrize("seed", range(10))
def test_gradients_across_seeds(seed):
    """Spec invariant: differentiable ops pass grad_check on >= 10 seeds."""
    rng = np.random.default_rng(1000 + seed)
    x, w, b = make_inputs(rng, (1, 2, 4, 4), (2, 2, 3, 3), (2,))

    def f(xi, wi, bi):
        h = E.relu(E.conv2d(xi, wi, bi, 1, 1))
        pooled, idx = E.maxpool2d_with_indices(h)
        up = E.unpool(pooled, idx, (4, 4))
        return E.mean(E.power(up, 2.0))

    assert E.grad_check(f, [x, w, b]) < 1e-5
