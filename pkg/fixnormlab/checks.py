"""Finite-difference checks of every differentiable operation."""
import logging
from types import SimpleNamespace

import numpy as np

from fixnormlab.autodiff import ops
from fixnormlab.autodiff.gradcheck import check_gradients
from fixnormlab.layers.heads import (fixnorm_conv_forward, fixnorm_fc_forward,
                                     gain_cap, wn_fc_forward)


TOLERANCE = 1e-5
INSTANCES = 20


def _away_from_zero(rng, shape, margin=0.1):
    """Normal samples pushed at least `margin` away from the ReLU kink."""
    x = rng.standard_normal(shape)
    return np.sign(x)*(margin + np.abs(x))


def _gain_off_cap(rng, alpha, classes):
    """A gain on either side of the cap, never on it."""
    cap = gain_cap(alpha, classes)
    return np.array(cap*rng.choice([0.5, 1.5])*rng.uniform(0.8, 1.2))


def _linear(rng):
    batch, d, c = rng.integers(2, 5, size=3)
    return ops.matmul, [rng.standard_normal((batch, d)), rng.standard_normal((d, c))]


def _conv2d(rng):
    stride, padding = rng.integers(1, 3), rng.integers(0, 2)
    def fn(x, k):
        return ops.conv2d(x, k, stride=stride, padding=padding)
    return fn, [rng.standard_normal((2, 2, 5, 5)), rng.standard_normal((3, 2, 3, 3))]


def _batch_norm(rng):
    shape = (6, 3) if rng.integers(0, 2) == 0 else (3, 2, 3, 3)
    channels = shape[1]
    def fn(x, gamma, beta):
        state = ops.BatchNormState(channels)
        state.gamma, state.beta = gamma, beta
        return ops.batch_norm(x, state, training=True)
    return fn, [rng.standard_normal(shape), rng.uniform(0.5, 1.5, channels),
                rng.standard_normal(channels)]


def _relu_gap(rng):
    def fn(x):
        return ops.global_avg_pool(ops.relu(x))
    return fn, [_away_from_zero(rng, (2, 3, 4, 4))]


def _cross_entropy(smoothing):
    def build(rng):
        batch, classes = rng.integers(2, 6), rng.integers(2, 6)
        labels = rng.integers(0, classes, size=batch)
        def fn(z):
            return ops.softmax_cross_entropy(z, labels, smoothing=smoothing)
        return fn, [rng.standard_normal((batch, classes))]
    return build


def _wn_fc(rng):
    def fn(x, W, g):
        return wn_fc_forward(x, SimpleNamespace(W=W, g=g))
    return fn, [rng.standard_normal((4, 5)), rng.standard_normal((5, 3)),
                np.array(rng.uniform(0.5, 3.0))]


def _fixnorm_fc(rng):
    alpha = rng.uniform(0.25, 2.0)
    def fn(x, W, g):
        return fixnorm_fc_forward(x, SimpleNamespace(W=W, g=g, alpha=alpha))
    return fn, [rng.standard_normal((4, 5)), rng.standard_normal((5, 3)),
                _gain_off_cap(rng, alpha, 3)]


def _fixnorm_conv(rng):
    alpha = rng.uniform(0.25, 2.0)
    def fn(x, K, g):
        return fixnorm_conv_forward(x, SimpleNamespace(K=K, g=g, alpha=alpha,
                                                       stride=1, padding=1))
    return fn, [rng.standard_normal((2, 2, 4, 4)), rng.standard_normal((3, 2, 3, 3)),
                _gain_off_cap(rng, alpha, 3)]


CHECKS = {
    'linear': _linear,
    'conv2d': _conv2d,
    'batch_norm': _batch_norm,
    'relu+gap': _relu_gap,
    'softmax_ce': _cross_entropy(0.0),
    'softmax_ce(smoothed)': _cross_entropy(0.1),
    'wn_fc': _wn_fc,
    'fixnorm_fc': _fixnorm_fc,
    'fixnorm_conv': _fixnorm_conv,
    }


def run_gradcheck(seed=0, instances=INSTANCES):
    """Largest relative gradient error of each operation over seeded instances."""
    rng = np.random.default_rng(seed)
    errors = {}
    for name, build in CHECKS.items():
        worst = 0.0
        for _ in range(instances):
            fn, arrays = build(rng)
            worst = max(worst, check_gradients(fn, arrays, rng))
        logging.debug(f'gradcheck {name}: {worst:.3e}')
        errors[name] = worst
    return errors
