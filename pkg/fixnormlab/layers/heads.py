"""Classification heads.

W is stored as [D, C] (column i is the center of class i) and normalized by
the Frobenius norm of the whole matrix, with one scalar gain g. The capped
heads clip the gain at alpha*sqrt(C) (alpha*sqrt(c_out) for the conv head).
"""
import math

import numpy as np

from fixnormlab.autodiff import ops
from fixnormlab.autodiff.tensor import Tensor
from fixnormlab.layers.layer import Layer


def gain_cap(alpha, classes):
    return alpha*math.sqrt(classes)


def _head_weights(rng, in_features, classes):
    return rng.standard_normal((in_features, classes))/np.sqrt(in_features)


def wn_fc_forward(x, p):
    """(x W / ||W||) * g.

    p -- holder of W [D, C] and the scalar gain g, e.g. a WnFc head
    """
    return ops.multiply(ops.divide(ops.matmul(x, p.W), ops.frobenius_norm(p.W)),
                        p.g)


def fixnorm_fc_forward(x, p):
    """(x W / ||W||) * min(g, alpha*sqrt(C))."""
    if not p.alpha > 0.0:
        raise ValueError(f'alpha must be positive, got {p.alpha}')
    gain = ops.clamp_max(p.g, gain_cap(p.alpha, p.W.shape[1]))
    return ops.multiply(ops.divide(ops.matmul(x, p.W), ops.frobenius_norm(p.W)),
                        gain)


def fixnorm_conv_forward(x, p):
    """Conv(x, K)/||K|| * min(g, alpha*sqrt(c_out))."""
    if not p.alpha > 0.0:
        raise ValueError(f'alpha must be positive, got {p.alpha}')
    gain = ops.clamp_max(p.g, gain_cap(p.alpha, p.K.shape[0]))
    out = ops.conv2d(x, p.K, stride=p.stride, padding=p.padding)
    return ops.multiply(ops.divide(out, ops.frobenius_norm(p.K)), gain)


class Fc(Layer):
    """Plain fully-connected head x W + b."""

    def __init__(self, name, in_features, classes, rng):
        super(Fc, self).__init__(name)
        self.W = Tensor(_head_weights(rng, in_features, classes),
                        requires_grad=True, name=f'{name}.W')
        self.b = Tensor(np.zeros(classes), requires_grad=True, name=f'{name}.b')
        self.weights.append(self.W)
        self.extras.append(self.b)

    def forward(self, x, training):
        return ops.add_bias(ops.matmul(x, self.W), self.b)

    def gain(self):
        """Scale of the logits: ||W|| for the plain head."""
        return self.W.norm()


class WnFc(Layer):

    def __init__(self, name, in_features, classes, rng, g=None):
        super(WnFc, self).__init__(name)
        self.W = Tensor(_head_weights(rng, in_features, classes),
                        requires_grad=True, name=f'{name}.W')
        self.g = Tensor(math.sqrt(classes) if g is None else g,
                        requires_grad=True, name=f'{name}.g')
        self.weights.append(self.W)
        self.extras.append(self.g)

    def forward(self, x, training):
        return wn_fc_forward(x, self)

    def gain(self):
        return float(self.g.data)


class FixNormFc(WnFc):

    def __init__(self, name, in_features, classes, rng, alpha, g=None):
        super(FixNormFc, self).__init__(name, in_features, classes, rng, g=g)
        self.alpha = alpha

    @property
    def cap(self):
        return gain_cap(self.alpha, self.W.shape[1])

    def forward(self, x, training):
        return fixnorm_fc_forward(x, self)

    def gain(self):
        """Effective gain min(g, alpha*sqrt(C))."""
        return min(float(self.g.data), self.cap)


class FixNormConv(Layer):
    """Pixel-wise classification head built on a normalized convolution."""

    def __init__(self, name, c_in, c_out, kernel, rng, alpha,
                 stride=1, padding=0, g=None):
        super(FixNormConv, self).__init__(name)
        fan_in = c_in*kernel*kernel
        self.K = Tensor(rng.standard_normal((c_out, c_in, kernel, kernel))/np.sqrt(fan_in),
                        requires_grad=True, name=f'{name}.K')
        self.g = Tensor(math.sqrt(c_out) if g is None else g,
                        requires_grad=True, name=f'{name}.g')
        self.alpha = alpha
        self.stride = stride
        self.padding = padding
        self.weights.append(self.K)
        self.extras.append(self.g)

    @property
    def cap(self):
        return gain_cap(self.alpha, self.K.shape[0])

    def forward(self, x, training):
        return fixnorm_conv_forward(x, self)

    def gain(self):
        return min(float(self.g.data), self.cap)
