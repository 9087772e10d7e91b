import threading

import numpy as np


class AutodiffError(Exception):
    pass


class DimensionError(AutodiffError):
    pass


class NonFiniteError(AutodiffError):
    """A forward or backward pass produced NaN or Inf."""

    def __init__(self, op, phase='forward'):
        super(NonFiniteError, self).__init__(f'non-finite values in {op} ({phase})')
        self.op = op
        self.phase = phase


class Tensor(object):
    """Dense float64 array with an optional gradient slot."""

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else None

    def norm(self):
        return float(np.sqrt(np.sum(self.data*self.data)))

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f' {self.name}' if self.name is not None else ''
        return f'<tensor{label} {list(self.shape)}>'


class TapeNode(object):

    __slots__ = ('op', 'inputs', 'output', 'vjp')

    def __init__(self, op, inputs, output, vjp):
        # op identifier, for error messages
        self.op = op
        # input tensors, in the order vjp returns their gradients
        self.inputs = inputs
        self.output = output
        # upstream gradient -> tuple of input gradients (None where unused)
        self.vjp = vjp


_local = threading.local()


def active_tape():
    stack = getattr(_local, 'stack', None)
    return stack[-1] if stack else None


class Tape(object):
    """Records differentiable operations in execution order.

    Execution order is a topological order of the computation, so replaying
    the nodes in reverse visits every node after all of its consumers.
    Tapes are thread local: entering a tape only affects the current thread.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        if getattr(_local, 'stack', None) is None:
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def record(self, op, inputs, output, vjp):
        self.nodes.append(TapeNode(op, inputs, output, vjp))

    def backward(self, output, grad=None):
        """Accumulate d(output)/d(leaf) into .grad of every tensor on the tape.

        grad -- upstream gradient for output; defaults to ones, which is the
                usual seed for a scalar loss
        """
        if grad is None:
            grad = np.ones_like(output.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != output.shape:
            raise DimensionError(
                f'seed gradient {grad.shape} does not match output {output.shape}')
        output.grad = grad.copy()
        for node in reversed(self.nodes):
            upstream = node.output.grad
            if upstream is None:
                continue
            input_grads = node.vjp(upstream)
            for tensor, g in zip(node.inputs, input_grads):
                if g is None or not tensor.requires_grad:
                    continue
                if not np.all(np.isfinite(g)):
                    raise NonFiniteError(node.op, phase='backward')
                if tensor.grad is None:
                    tensor.grad = g.copy()
                else:
                    tensor.grad = tensor.grad + g
        self.nodes = []


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)
