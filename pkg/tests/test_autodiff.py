import threading
from types import SimpleNamespace
from unittest import main, TestCase

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

import tests
from fixnormlab.autodiff import ops
from fixnormlab.autodiff.gradcheck import (check_gradients, finite_diff_grad,
                                           max_relative_error, OracleError,
                                           tape_gradients)
from fixnormlab.autodiff.tensor import (active_tape, DimensionError,
                                        NonFiniteError, Tape, Tensor)
from fixnormlab.checks import CHECKS, run_gradcheck, TOLERANCE
from fixnormlab.layers.heads import (fixnorm_conv_forward, fixnorm_fc_forward,
                                     wn_fc_forward)


class TestTape(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_matmul_gradients(self):
        x = tests.random_tensor(self.rng, (3, 4))
        w = tests.random_tensor(self.rng, (4, 2))
        seed = self.rng.standard_normal((3, 2))
        with Tape() as tape:
            out = ops.matmul(x, w)
            tape.backward(out, seed)
        assert_allclose(x.grad, seed @ w.data.T)
        assert_allclose(w.grad, x.data.T @ seed)

    def test_reused_input_accumulates(self):
        x = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
        s = Tensor(np.array(3.0), requires_grad=True)
        with Tape() as tape:
            out = ops.multiply(ops.multiply(x, s), s)
            tape.backward(out)
        assert_allclose(s.grad, 2.0*3.0*x.data.sum())
        assert_allclose(x.grad, [[9.0, 9.0]])

    def test_constants_get_no_gradient(self):
        x = Tensor(np.ones((2, 3)))
        w = tests.random_tensor(self.rng, (3, 2))
        with Tape() as tape:
            tape.backward(ops.matmul(x, w))
        self.assertIsNone(x.grad)
        self.assertIsNotNone(w.grad)

    def test_seed_shape_mismatch(self):
        w = tests.random_tensor(self.rng, (3, 2))
        with Tape() as tape:
            out = ops.matmul(Tensor(np.ones((1, 3))), w)
            with self.assertRaises(DimensionError):
                tape.backward(out, np.ones(5))

    def test_nothing_recorded_without_tape(self):
        self.assertIsNone(active_tape())
        w = tests.random_tensor(self.rng, (3, 2))
        out = ops.matmul(Tensor(np.ones((1, 3))), w)
        self.assertTrue(out.requires_grad)

    def test_tape_is_thread_local(self):
        seen = []
        with Tape() as tape:
            thread = threading.Thread(target=lambda: seen.append(active_tape()))
            thread.start()
            thread.join()
            self.assertIs(active_tape(), tape)
        self.assertEqual(seen, [None])

    def test_non_finite_forward(self):
        x = Tensor(np.ones((2, 2)))
        with np.errstate(divide='ignore'), self.assertRaises(NonFiniteError) as cm:
            ops.divide(x, Tensor(np.array(0.0)))
        self.assertEqual(cm.exception.phase, 'forward')

    def test_dimension_errors(self):
        with self.assertRaises(DimensionError):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        with self.assertRaises(DimensionError):
            ops.conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((3, 1, 3, 3))))

    def test_label_errors(self):
        with self.assertRaises(IndexError):
            ops.softmax_cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])

    def test_degenerate_batch(self):
        state = ops.BatchNormState(2)
        with self.assertRaises(ops.DegenerateBatchError):
            ops.batch_norm(Tensor(np.ones((1, 2))), state, training=True)


class TestPrimitives(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(1)

    def test_conv2d_matches_direct_sum(self):
        x = self.rng.standard_normal((1, 2, 4, 4))
        k = self.rng.standard_normal((3, 2, 3, 3))
        out = ops.conv2d(Tensor(x), Tensor(k), stride=1, padding=1).data
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        expected = np.zeros((1, 3, 4, 4))
        for o in range(3):
            for i in range(4):
                for j in range(4):
                    expected[0, o, i, j] = np.sum(xp[0, :, i:i + 3, j:j + 3]*k[o])
        assert_allclose(out, expected, atol=1e-12)

    def test_conv2d_stride(self):
        out = ops.conv2d(Tensor(np.ones((2, 1, 5, 5))), Tensor(np.ones((1, 1, 3, 3))),
                         stride=2)
        self.assertEqual(out.shape, (2, 1, 2, 2))
        assert_array_equal(out.data, 9.0)

    def test_batch_norm_statistics(self):
        x = Tensor(self.rng.standard_normal((64, 3))*5.0 + 2.0)
        state = ops.BatchNormState(3)
        out = ops.batch_norm(x, state, training=True).data
        assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)
        assert_allclose(out.var(axis=0), x.data.var(axis=0)/(x.data.var(axis=0) + 1e-5))
        assert_allclose(state.running_mean, 0.1*x.data.mean(axis=0))
        assert_allclose(state.running_var, 0.9 + 0.1*x.data.var(axis=0))

    def test_batch_norm_eval_uses_running_stats(self):
        state = ops.BatchNormState(2)
        state.running_mean = np.array([1.0, -1.0])
        state.running_var = np.array([4.0, 1.0])
        out = ops.batch_norm(Tensor(np.array([[3.0, 0.0]])), state, training=False)
        assert_allclose(out.data, [[2.0/np.sqrt(4.0 + 1e-5), 1.0/np.sqrt(1.0 + 1e-5)]])

    def test_relu_subgradient_at_zero(self):
        x = Tensor(np.array([[-1.0, 0.0, 2.0]]), requires_grad=True)
        with Tape() as tape:
            tape.backward(ops.relu(x))
        assert_array_equal(x.grad, [[0.0, 0.0, 1.0]])

    def test_smoothed_cross_entropy(self):
        logits = Tensor(np.zeros((1, 4)))
        loss = ops.softmax_cross_entropy(logits, [2], smoothing=0.3)
        # uniform prediction: every class has log-probability -log 4
        self.assertAlmostEqual(loss.item(), np.log(4.0))
        assert_allclose(ops.smoothed_targets(np.array([2]), 4, 0.3),
                        [[0.1, 0.1, 0.7, 0.1]])

    def test_clamp_max(self):
        s = Tensor(np.array(3.0), requires_grad=True)
        with Tape() as tape:
            out = ops.clamp_max(s, 2.0)
            tape.backward(out)
        self.assertEqual(out.item(), 2.0)
        self.assertEqual(float(s.grad), 0.0)
        s = Tensor(np.array(2.0), requires_grad=True)
        with Tape() as tape:
            tape.backward(ops.clamp_max(s, 2.0))
        self.assertEqual(float(s.grad), 1.0)


class TestOracle(TestCase):

    def test_finite_differences_of_square(self):
        x = np.array([1.0, -2.0, 0.5])
        grad = finite_diff_grad(lambda v: np.sum(v*v), x)
        assert_allclose(grad, 2.0*x, rtol=1e-8)

    def test_bad_step(self):
        with self.assertRaises(OracleError):
            finite_diff_grad(lambda v: 0.0, np.zeros(2), h=0.0)

    def test_relative_error(self):
        self.assertEqual(max_relative_error(np.zeros(3), np.zeros(3)), 0.0)
        self.assertAlmostEqual(max_relative_error([1.0, 2.0], [1.0, 1.8]), 0.1)

    def test_gradcheck_catches_wrong_gradient(self):
        def fn(x):
            # doubles its input but reports the identity as its gradient
            return ops._emit('double', (x,), 2.0*x.data, lambda g: (g,))
        rng = np.random.default_rng(0)
        self.assertGreater(check_gradients(fn, [rng.standard_normal(4)], rng), 0.1)

    def test_suite_passes(self):
        errors = run_gradcheck(seed=0)
        self.assertEqual(set(errors), set(CHECKS))
        for name, error in errors.items():
            self.assertLess(error, TOLERANCE, name)

    def test_suite_other_seed(self):
        errors = run_gradcheck(seed=7, instances=5)
        self.assertLess(max(errors.values()), TOLERANCE)


class TestScaleInvariance(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(2)
        # wide inputs keep the BN epsilon negligible next to the batch variance
        self.x = 20.0*self.rng.standard_normal((4, 2, 5, 5))
        self.k = self.rng.standard_normal((3, 2, 3, 3))
        self.projection = self.rng.standard_normal((4, 3, 5, 5))

    def _conv_bn(self, k):
        def fn(kt):
            state = ops.BatchNormState(3)
            return ops.batch_norm(ops.conv2d(Tensor(self.x), kt, padding=1),
                                  state, training=True)
        return tape_gradients(fn, [k], seed=self.projection)

    def test_conv_bn_output_and_gradient(self):
        out, (grad,) = self._conv_bn(self.k)
        for c in (0.5, 2.0, 10.0):
            scaled_out, (scaled_grad,) = self._conv_bn(c*self.k)
            assert_allclose(scaled_out, out, rtol=1e-6, atol=1e-6)
            assert_allclose(scaled_grad, grad/c, rtol=1e-6, atol=1e-9)

    def test_normalized_heads(self):
        x = Tensor(self.rng.standard_normal((5, 6)))
        W = self.rng.standard_normal((6, 4))
        for c in (0.5, 2.0, 10.0):
            for forward, alpha in ((wn_fc_forward, None), (fixnorm_fc_forward, 0.5)):
                base = forward(x, tests.weights(W, 1.7, alpha=alpha)).data
                scaled = forward(x, tests.weights(c*W, 1.7, alpha=alpha)).data
                assert_allclose(scaled, base, rtol=1e-9, atol=1e-12)

            images = Tensor(self.rng.standard_normal((2, 2, 4, 4)))
            K = self.rng.standard_normal((3, 2, 3, 3))
            def conv_head(K):
                head = SimpleNamespace(K=Tensor(K), g=Tensor(2.0), alpha=0.7,
                                       stride=1, padding=1)
                return fixnorm_conv_forward(images, head).data
            assert_allclose(conv_head(c*K), conv_head(K), rtol=1e-9, atol=1e-12)


if __name__ == '__main__':
    main()
