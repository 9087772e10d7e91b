import numpy as np

from fixnormlab.autodiff.tensor import AutodiffError, Tape, Tensor


DEFAULT_STEP = 1e-5


class OracleError(AutodiffError):
    pass


def finite_diff_grad(f, x, h=DEFAULT_STEP):
    """Central-difference gradient of the scalar function f at x.

    f -- callable taking an ndarray shaped like x and returning a real
    """
    if h <= 0.0:
        raise OracleError(f'step must be positive, got {h}')
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = float(f(x))
        flat[i] = orig - h
        f_minus = float(f(x))
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise OracleError(f'function is not finite around coordinate {i}')
        flat_grad[i] = (f_plus - f_minus)/(2.0*h)
    return grad


def max_relative_error(a, b):
    """Largest absolute deviation, relative to the largest magnitude present."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - b))/scale)


def tape_gradients(fn, arrays, seed=None):
    """Run fn on fresh leaf tensors and return (output value, leaf gradients).

    fn    -- callable taking Tensors (one per array) and returning a Tensor
    seed  -- upstream gradient for the output, ones when omitted
    """
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = fn(*leaves)
        tape.backward(out, seed)
    return out.data.copy(), [leaf.grad if leaf.grad is not None
                             else np.zeros_like(leaf.data) for leaf in leaves]


def check_gradients(fn, arrays, rng, h=DEFAULT_STEP):
    """Compare tape gradients of fn against finite differences.

    A non-scalar output is reduced with a fixed random projection so that
    every output coordinate contributes. Returns the largest relative error
    across all inputs.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    value, _ = tape_gradients(fn, arrays)
    projection = rng.standard_normal(value.shape)
    _, grads = tape_gradients(fn, arrays, seed=projection)

    worst = 0.0
    for i, analytic in enumerate(grads):
        def f(value, i=i):
            args = [Tensor(a) for a in arrays]
            args[i] = Tensor(value)
            return np.sum(fn(*args).data*projection)
        numeric = finite_diff_grad(f, arrays[i], h)
        worst = max(worst, max_relative_error(analytic, numeric))
    return worst
