import numpy as np

from fixnormlab.autodiff.ops import DegenerateWeightsError
from fixnormlab.settings import ConfigError


class OptimizerError(Exception):
    pass


class DivergenceError(OptimizerError):

    def __init__(self, step, name, what='gradient'):
        super(DivergenceError, self).__init__(
            f'non-finite {what} for {name} at step {step}')
        self.step = step
        self.name = name


class StateError(OptimizerError):
    pass


def joint_norm(tensors):
    return float(np.sqrt(sum(np.sum(t.data*t.data) for t in tensors)))


class ParamGroup(object):

    def __init__(self, name, params, norm_fixed=False, weight_decay=0.0):
        if weight_decay < 0.0:
            raise ConfigError(f'{name}: weight decay must be >= 0, got {weight_decay}')
        if norm_fixed and weight_decay > 0.0:
            raise ConfigError(f'{name}: a norm-fixed group cannot be decayed')
        self.name = name
        self.params = list(params)
        self.norm_fixed = norm_fixed
        self.weight_decay = weight_decay
        # joint norm at initialization, set by capture_initial_norms()
        self.initial_norm = None

    def __repr__(self):
        flags = 'norm-fixed' if self.norm_fixed else f'decay={self.weight_decay}'
        return f'<group:{self.name} {len(self.params)} tensors, {flags}>'

    def norm(self):
        return joint_norm(self.params)


def capture_initial_norms(groups):
    """Record the joint norm of every norm-fixed group; call once before step 0."""
    for group in groups:
        if not group.norm_fixed:
            continue
        if group.initial_norm is not None:
            raise StateError(f'{group.name}: initial norm already captured')
        if len(group.params) == 0:
            raise ConfigError(f'{group.name}: norm-fixed group has no members')
        norm = group.norm()
        if norm == 0.0:
            raise DegenerateWeightsError(f'{group.name}: zero norm at initialization')
        group.initial_norm = norm
    return groups


def fix_group_norm(group, step=None):
    """Project the group back onto the sphere of its initial joint norm."""
    if not group.norm_fixed or group.initial_norm is None:
        raise StateError(f'{group.name}: not a captured norm-fixed group')
    current = group.norm()
    if not np.isfinite(current):
        raise DivergenceError(step, group.name, what='norm')
    if current == 0.0:
        raise DegenerateWeightsError(f'{group.name}: weights collapsed to zero')
    scale = group.initial_norm/current
    for tensor in group.params:
        tensor.data *= scale
    return group


class OptState(object):

    def __init__(self, lr, momentum):
        self.lr = lr
        self.momentum = momentum
        self.step = 0
        # dict of id(tensor) -> velocity, starts at zero
        self.velocity = {}

    def velocity_of(self, tensor):
        if id(tensor) not in self.velocity:
            self.velocity[id(tensor)] = np.zeros_like(tensor.data)
        return self.velocity[id(tensor)]


class SGD(object):
    """Momentum SGD with per-group decay and norm fixing.

    Per step, for every tensor W with gradient G in a group with decay lambda:
        G' = G + lambda W
        V  = mu V + G'
        W  = W - lr eta V            (heavy ball)
        W  = W - lr eta (G' + mu V)  (nesterov)
    and afterwards every norm-fixed group is rescaled to its initial norm.
    """

    def __init__(self, groups, lr, momentum=0.9, nesterov=True):
        self.groups = groups
        self.nesterov = nesterov
        self.state = OptState(lr, momentum)

    def step(self, multiplier):
        state = self.state
        grads = {}
        for group in self.groups:
            for tensor in group.params:
                grad = (tensor.grad if tensor.grad is not None
                        else np.zeros_like(tensor.data))
                if not np.all(np.isfinite(grad)):
                    raise DivergenceError(state.step, tensor.name)
                grads[id(tensor)] = grad

        for group in self.groups:
            for tensor in group.params:
                grad = grads[id(tensor)]
                if group.weight_decay > 0.0:
                    grad = grad + group.weight_decay*tensor.data
                velocity = state.velocity_of(tensor)
                velocity *= state.momentum
                velocity += grad
                if self.nesterov:
                    update = grad + state.momentum*velocity
                else:
                    update = velocity
                tensor.data -= state.lr*multiplier*update

        for group in self.groups:
            if group.norm_fixed:
                fix_group_norm(group, step=state.step)
        state.step += 1


def effective_lr(lr, multiplier, norm):
    """Step size of the weight direction of a scale-invariant layer."""
    return lr*multiplier/(norm*norm)


def direction_step(before, after):
    before = np.asarray(before, dtype=np.float64).reshape(-1)
    after = np.asarray(after, dtype=np.float64).reshape(-1)
    return float(np.linalg.norm(after/np.linalg.norm(after)
                                - before/np.linalg.norm(before)))
