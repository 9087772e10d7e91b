"""Differentiable primitives.

Every primitive computes its forward value with numpy, checks it for
non-finite entries and, when a tape is active and any input requires a
gradient, records a vector-Jacobian product on that tape.
"""
import numpy as np

from fixnormlab.autodiff.tensor import (active_tape, AutodiffError,
                                        DimensionError, NonFiniteError, Tensor)


BN_EPSILON = 1e-5
BN_MOMENTUM = 0.9


class DegenerateBatchError(AutodiffError):
    pass


class DegenerateWeightsError(AutodiffError):
    pass


class LabelError(AutodiffError, IndexError):
    pass


def _emit(op, inputs, data, vjp):
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    requires_grad = any(tensor.requires_grad for tensor in inputs)
    out = Tensor(data, requires_grad=requires_grad)
    tape = active_tape()
    if tape is not None and requires_grad:
        tape.record(op, inputs, out, vjp)
    return out


def matmul(x, w):
    """Plain fully-connected map x @ W for x [B, D] and W [D, C]."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f'matmul: cannot multiply {x.shape} by {w.shape}')
    xd, wd = x.data, w.data
    def vjp(g):
        return g @ wd.T, xd.T @ g
    return _emit('matmul', (x, w), xd @ wd, vjp)


def add_bias(x, b):
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise DimensionError(f'add_bias: cannot add {b.shape} to {x.shape}')
    def vjp(g):
        return g, g.sum(axis=0)
    return _emit('add_bias', (x, b), x.data + b.data, vjp)


def conv_output_size(size, kernel, stride, padding):
    return (size + 2*padding - kernel)//stride + 1


def conv2d(x, k, stride=1, padding=0):
    """Direct cross-correlation of x [B, C_in, H, W] with k [C_out, C_in, kh, kw].

    The sum runs over kernel offsets, each contributing one strided window of
    the padded input contracted against one kernel tap.
    """
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise DimensionError(f'conv2d: expected 4-d input and kernel, got '
                             f'{x.shape} and {k.shape}')
    batch, c_in, height, width = x.shape
    c_out, k_in, kh, kw = k.shape
    if k_in != c_in:
        raise DimensionError(f'conv2d: kernel expects {k_in} channels, input has {c_in}')
    if stride < 1 or padding < 0:
        raise DimensionError(f'conv2d: bad stride {stride} or padding {padding}')
    h_out = conv_output_size(height, kh, stride, padding)
    w_out = conv_output_size(width, kw, stride, padding)
    if h_out <= 0 or w_out <= 0:
        raise DimensionError(f'conv2d: kernel {kh}x{kw} does not fit input '
                             f'{height}x{width} with padding {padding}')

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    kd = k.data
    def window(i, j):
        return (slice(None), slice(None),
                slice(i, i + stride*(h_out - 1) + 1, stride),
                slice(j, j + stride*(w_out - 1) + 1, stride))

    out = np.zeros((batch, c_out, h_out, w_out))
    for i in range(kh):
        for j in range(kw):
            out += np.einsum('bchw,oc->bohw', xp[window(i, j)], kd[:, :, i, j])

    def vjp(g):
        dxp = np.zeros_like(xp)
        dk = np.zeros_like(kd)
        for i in range(kh):
            for j in range(kw):
                dk[:, :, i, j] = np.einsum('bohw,bchw->oc', g, xp[window(i, j)])
                dxp[window(i, j)] += np.einsum('bohw,oc->bchw', g, kd[:, :, i, j])
        dx = dxp[:, :, padding:padding + height, padding:padding + width]
        return dx, dk
    return _emit('conv2d', (x, k), out, vjp)


class BatchNormState(object):

    def __init__(self, channels, epsilon=BN_EPSILON, momentum=BN_MOMENTUM):
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.gamma = Tensor(np.ones(channels), requires_grad=True, name='bn.gamma')
        self.beta = Tensor(np.zeros(channels), requires_grad=True, name='bn.beta')
        self.epsilon = epsilon
        self.momentum = momentum

    @property
    def channels(self):
        return self.gamma.shape[0]

    def update(self, mean, var):
        self.running_mean = self.momentum*self.running_mean + (1.0 - self.momentum)*mean
        self.running_var = self.momentum*self.running_var + (1.0 - self.momentum)*var


def batch_norm(x, state, training):
    """Per-channel standardization of x [B, C] or [B, C, H, W]."""
    if x.data.ndim not in (2, 4) or x.shape[1] != state.channels:
        raise DimensionError(f'batch_norm: input {x.shape} does not match '
                             f'{state.channels} channels')
    axes = (0,) if x.data.ndim == 2 else (0, 2, 3)
    bshape = (1, -1) if x.data.ndim == 2 else (1, -1, 1, 1)
    count = x.data.size//state.channels
    gamma = state.gamma.data.reshape(bshape)
    beta = state.beta.data.reshape(bshape)

    if training:
        if count < 2:
            raise DegenerateBatchError(
                f'batch_norm: {count} element per channel in training mode')
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        state.update(mean, var)
    else:
        mean, var = state.running_mean, state.running_var
    inv_std = (1.0/np.sqrt(var + state.epsilon)).reshape(bshape)
    xhat = (x.data - mean.reshape(bshape))*inv_std

    def vjp(g):
        dgamma = (g*xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g*gamma
        if training:
            dx = (inv_std/count)*(count*dxhat
                                  - dxhat.sum(axis=axes).reshape(bshape)
                                  - xhat*(dxhat*xhat).sum(axis=axes).reshape(bshape))
        else:
            dx = dxhat*inv_std
        return dx, dgamma, dbeta
    return _emit('batch_norm', (x, state.gamma, state.beta), gamma*xhat + beta, vjp)


def relu(x):
    # The subgradient at 0 is taken to be 0.
    mask = x.data > 0.0
    def vjp(g):
        return (g*mask,)
    return _emit('relu', (x,), np.where(mask, x.data, 0.0), vjp)


def global_avg_pool(x):
    if x.data.ndim != 4:
        raise DimensionError(f'global_avg_pool: expected 4-d input, got {x.shape}')
    spatial = x.shape[2]*x.shape[3]
    def vjp(g):
        return (np.broadcast_to(g[:, :, None, None]/spatial, x.shape).copy(),)
    return _emit('global_avg_pool', (x,), x.data.mean(axis=(2, 3)), vjp)


def softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e/e.sum(axis=-1, keepdims=True)


def log_softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def smoothed_targets(labels, classes, smoothing):
    """(1 - eps) on the label, eps/(C - 1) spread over the other classes."""
    targets = np.full((len(labels), classes),
                      smoothing/(classes - 1) if classes > 1 else 0.0)
    targets[np.arange(len(labels)), labels] = 1.0 - smoothing
    return targets


def check_labels(labels, classes):
    labels = np.asarray(labels)
    if labels.size > 0 and (labels.min() < 0 or labels.max() >= classes):
        raise LabelError(f'labels must lie in [0, {classes}), got '
                         f'[{labels.min()}, {labels.max()}]')
    return labels.astype(np.int64)


def softmax_cross_entropy(logits, labels, smoothing=0.0):
    """Batch-mean cross-entropy of logits [B, C] against smoothed targets."""
    if logits.data.ndim != 2:
        raise DimensionError(f'softmax_cross_entropy: expected [B, C], got {logits.shape}')
    batch, classes = logits.shape
    if not 0.0 <= smoothing < 1.0:
        raise ValueError(f'label smoothing must lie in [0, 1), got {smoothing}')
    if smoothing > 0.0 and classes < 2:
        raise DimensionError('label smoothing needs at least two classes')
    labels = check_labels(labels, classes)
    if len(labels) != batch:
        raise DimensionError(f'{len(labels)} labels for {batch} logit rows')

    targets = smoothed_targets(labels, classes, smoothing)
    logp = log_softmax(logits.data)
    loss = -(targets*logp).sum()/batch
    def vjp(g):
        return (g*(np.exp(logp) - targets)/batch,)
    return _emit('softmax_cross_entropy', (logits,), np.array(loss), vjp)


def frobenius_norm(w):
    """Euclidean norm of the whole tensor, as a 0-d tensor."""
    norm = np.sqrt(np.sum(w.data*w.data))
    if norm == 0.0:
        raise DegenerateWeightsError(f'{w!r} has zero norm')
    wd = w.data
    def vjp(g):
        return (g*wd/norm,)
    return _emit('frobenius_norm', (w,), np.array(norm), vjp)


def _check_scalar(op, s):
    if s.data.size != 1:
        raise DimensionError(f'{op}: expected a scalar, got {s.shape}')


def divide(x, s):
    """x / s for a scalar tensor s."""
    _check_scalar('divide', s)
    xd, sd = x.data, s.data
    def vjp(g):
        return g/sd, np.array(-np.sum(g*xd)/(sd*sd)).reshape(sd.shape)
    return _emit('divide', (x, s), xd/sd, vjp)


def multiply(x, s):
    """x * s for a scalar tensor s."""
    _check_scalar('multiply', s)
    xd, sd = x.data, s.data
    def vjp(g):
        return g*sd, np.array(np.sum(g*xd)).reshape(sd.shape)
    return _emit('multiply', (x, s), xd*sd, vjp)


def clamp_max(s, cap):
    """min(s, cap) for a scalar tensor s and a constant cap.

    At s == cap the gradient flows through the s branch.
    """
    _check_scalar('clamp_max', s)
    active = s.data <= cap
    def vjp(g):
        return (g*active,)
    return _emit('clamp_max', (s,), np.minimum(s.data, cap), vjp)
