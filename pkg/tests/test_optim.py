import math
from unittest import main, TestCase

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from fixnormlab.autodiff import ops
from fixnormlab.autodiff.ops import DegenerateWeightsError
from fixnormlab.autodiff.tensor import Tape, Tensor
from fixnormlab.layers.blocks import BatchNorm, Conv2d, GlobalAvgPool
from fixnormlab.optim.schedule import lr_multiplier, WarmupCosine
from fixnormlab.optim.sgd import (capture_initial_norms, direction_step,
                                  DivergenceError, effective_lr, fix_group_norm,
                                  ParamGroup, SGD, StateError)
from fixnormlab.settings import ConfigError


def _param(values, grad):
    tensor = Tensor(np.array(values, dtype=np.float64), requires_grad=True, name='w')
    tensor.grad = np.array(grad, dtype=np.float64)
    return tensor


class TestSGD(TestCase):

    def test_heavy_ball(self):
        w = _param([1.0, 2.0], [0.5, -1.0])
        sgd = SGD([ParamGroup('g', [w])], lr=0.1, momentum=0.9, nesterov=False)
        sgd.step(1.0)
        assert_allclose(w.data, [0.95, 2.1])
        sgd.step(1.0)
        # velocity is now 1.9 times the gradient
        assert_allclose(w.data, [0.95 - 0.1*1.9*0.5, 2.1 + 0.1*1.9*1.0])

    def test_nesterov(self):
        w = _param([1.0], [1.0])
        sgd = SGD([ParamGroup('g', [w])], lr=0.1, momentum=0.9, nesterov=True)
        sgd.step(0.5)
        # update = G + mu V = 1 + 0.9
        assert_allclose(w.data, [1.0 - 0.05*1.9])
        self.assertEqual(sgd.state.step, 1)

    def test_weight_decay(self):
        w = _param([2.0], [0.0])
        sgd = SGD([ParamGroup('g', [w], weight_decay=0.5)], lr=0.1, momentum=0.0)
        sgd.step(1.0)
        assert_allclose(w.data, [2.0 - 0.1*0.5*2.0])

    def test_missing_gradient_is_zero(self):
        w = Tensor(np.ones(2), requires_grad=True, name='w')
        SGD([ParamGroup('g', [w])], lr=1.0).step(1.0)
        assert_array_equal(w.data, [1.0, 1.0])

    def test_divergence_leaves_params(self):
        good = _param([1.0], [1.0])
        bad = _param([3.0], [np.nan])
        sgd = SGD([ParamGroup('a', [good]), ParamGroup('b', [bad])], lr=0.1)
        with self.assertRaises(DivergenceError) as cm:
            sgd.step(1.0)
        self.assertEqual(cm.exception.step, 0)
        assert_array_equal(good.data, [1.0])
        assert_array_equal(bad.data, [3.0])

    def test_norm_fix_holds(self):
        rng = np.random.default_rng(0)
        a = Tensor(rng.standard_normal((4, 3)), requires_grad=True, name='a')
        b = Tensor(rng.standard_normal(5), requires_grad=True, name='b')
        group = ParamGroup('fixed', [a, b], norm_fixed=True)
        capture_initial_norms([group])
        sgd = SGD([group], lr=0.5, momentum=0.9)
        for _ in range(1000):
            a.grad = rng.standard_normal(a.shape)
            b.grad = rng.standard_normal(b.shape)
            sgd.step(1.0)
            self.assertLess(abs(group.norm() - group.initial_norm),
                            1e-9*group.initial_norm)


class TestGroups(TestCase):

    def test_group_errors(self):
        w = Tensor(np.ones(2), requires_grad=True)
        with self.assertRaises(ConfigError):
            ParamGroup('g', [w], weight_decay=-1.0)
        with self.assertRaises(ConfigError):
            ParamGroup('g', [w], norm_fixed=True, weight_decay=1e-4)
        with self.assertRaises(ConfigError):
            capture_initial_norms([ParamGroup('g', [], norm_fixed=True)])
        with self.assertRaises(DegenerateWeightsError):
            capture_initial_norms([ParamGroup('g', [Tensor(np.zeros(2))],
                                              norm_fixed=True)])

    def test_capture_once(self):
        group = ParamGroup('g', [Tensor(np.ones(4))], norm_fixed=True)
        capture_initial_norms([group])
        self.assertEqual(group.initial_norm, 2.0)
        with self.assertRaises(StateError):
            capture_initial_norms([group])

    def test_fix_requires_capture(self):
        with self.assertRaises(StateError):
            fix_group_norm(ParamGroup('g', [Tensor(np.ones(2))], norm_fixed=True))
        with self.assertRaises(StateError):
            fix_group_norm(ParamGroup('g', [Tensor(np.ones(2))]))

    def test_fix_projects(self):
        w = Tensor(np.array([3.0, 4.0]))
        group = capture_initial_norms([ParamGroup('g', [w], norm_fixed=True)])[0]
        w.data *= 7.0
        fix_group_norm(group)
        assert_allclose(w.data, [3.0, 4.0])
        w.data[:] = 0.0
        with self.assertRaises(DegenerateWeightsError):
            fix_group_norm(group)
        w.data[:] = np.inf
        with self.assertRaises(DivergenceError):
            fix_group_norm(group, step=3)


class TestEffectiveLr(TestCase):

    def test_formula(self):
        self.assertEqual(effective_lr(0.4, 0.5, 2.0), 0.05)
        self.assertEqual(direction_step([1.0, 0.0], [2.0, 0.0]), 0.0)

    def test_direction_step_scales_with_inverse_square_norm(self):
        """Doubling a BN-preceded kernel's norm shrinks its angular step about 4x."""
        rng = np.random.default_rng(1)
        x = Tensor(rng.standard_normal((8, 2, 5, 5)))
        labels = rng.integers(0, 3, size=8)

        def one_step(scale):
            conv = Conv2d('conv', 2, 3, 3, np.random.default_rng(2), padding=1)
            bn = BatchNorm('bn', 3)
            conv.K.data *= scale
            before = conv.K.data.copy()
            with Tape() as tape:
                h = bn.forward(conv.forward(x, True), True)
                logits = GlobalAvgPool('gap').forward(h, True)
                tape.backward(ops.softmax_cross_entropy(logits, labels))
            sgd = SGD([ParamGroup('conv', [conv.K]), ParamGroup('free', bn.extras)],
                      lr=1e-3, momentum=0.0)
            sgd.step(1.0)
            return direction_step(before, conv.K.data)

        ratio = one_step(1.0)/one_step(2.0)
        self.assertAlmostEqual(ratio, 4.0, delta=0.2)


class TestSchedule(TestCase):

    def test_values(self):
        schedule = WarmupCosine(10, 2)
        self.assertEqual(schedule.multiplier(0), 0.5)
        self.assertEqual(schedule.multiplier(1), 1.0)
        self.assertEqual(schedule.multiplier(2), 1.0)
        self.assertAlmostEqual(schedule.multiplier(6), 0.5)
        self.assertAlmostEqual(lr_multiplier(9, schedule),
                               0.5*(1.0 + math.cos(math.pi*7/8)))

    def test_no_warmup(self):
        schedule = WarmupCosine(4, 0)
        self.assertEqual(schedule.multiplier(0), 1.0)
        values = [schedule.multiplier(t) for t in range(4)]
        self.assertEqual(values, sorted(values, reverse=True))
        self.assertGreater(values[-1], 0.0)

    def test_errors(self):
        with self.assertRaises(ConfigError):
            WarmupCosine(0, 0)
        with self.assertRaises(ConfigError):
            WarmupCosine(5, 5)
        with self.assertRaises(ConfigError):
            WarmupCosine(5, -1)
        with self.assertRaises(ValueError):
            WarmupCosine(5, 1).multiplier(5)


if __name__ == '__main__':
    main()
