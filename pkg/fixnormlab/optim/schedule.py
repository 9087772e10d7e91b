import math

from fixnormlab.settings import ConfigError


class WarmupCosine(object):
    """Linear warmup followed by one half cosine down to ~0.

    The warmup multiplier is (t + 1)/T_w so that step 0 already moves.
    """

    def __init__(self, total_steps, warmup_steps):
        if total_steps < 1:
            raise ConfigError(f'total_steps: must be positive, got {total_steps}')
        if not 0 <= warmup_steps < total_steps:
            raise ConfigError(f'warmup_steps: {warmup_steps} must lie in '
                              f'[0, {total_steps})')
        self.total_steps = total_steps
        self.warmup_steps = warmup_steps

    def __repr__(self):
        return f'<warmup-cosine T={self.total_steps} T_w={self.warmup_steps}>'

    def multiplier(self, t):
        if not 0 <= t < self.total_steps:
            raise ValueError(f'step {t} outside [0, {self.total_steps})')
        if t < self.warmup_steps:
            return (t + 1)/self.warmup_steps
        progress = (t - self.warmup_steps)/(self.total_steps - self.warmup_steps)
        return 0.5*(1.0 + math.cos(math.pi*progress))


def lr_multiplier(t, schedule):
    return schedule.multiplier(t)
