"""Synthetic accuracy landscapes for exercising the tuner without training.

The family encodes the two priors the budgeted search relies on: accuracy is
a unimodal bump in log(lr) whose peak moves to smaller lr as the budget
grows, and the effect of alpha is separable from that of lr.
"""
import math
from dataclasses import dataclass
from threading import Event

import numpy as np

from fixnormlab.tuning.objective import budget_epochs, Objective, TrialRecord


CEILING = 0.95


def _float_key(value):
    return int(np.float64(value).view(np.uint64))


def surrogate_objective(lr, alpha, budget, lr_star=1.0, alpha_star=2.0,
                        full_budget=1.0, shift=0.5, sharpness=1.0,
                        alpha_width=1.0, noise=0.0, seed=0):
    """Synthetic top-1 of training with (lr, alpha) for `budget`.

    lr_star -- best lr at the full budget; at budget b the best lr is
               lr_star*(b/full_budget)**-shift
    noise -- standard deviation of a Gaussian term drawn from a generator
             keyed on (seed, lr, alpha, budget), so repeated calls agree
    """
    if not (lr > 0.0 and alpha > 0.0 and budget > 0.0):
        return 0.0
    ratio = budget/full_budget
    peak = lr_star*ratio**(-shift)
    u = math.exp(-sharpness*(math.log(lr) - math.log(peak))**2)
    v = math.exp(-(math.log(alpha) - math.log(alpha_star))**2/(2.0*alpha_width**2))
    scale = CEILING*min(ratio, 1.0)**0.3
    value = scale*u*v
    if noise > 0.0:
        rng = np.random.default_rng(
            [seed, _float_key(lr), _float_key(alpha), _float_key(budget)])
        value += noise*rng.standard_normal()
    return float(np.clip(value, 0.0, 1.0))


@dataclass
class SurrogateObjective(Objective):
    lr_star: float = 1.0
    alpha_star: float = 2.0
    full_budget: float = 1.0
    shift: float = 0.5
    sharpness: float = 1.0
    alpha_width: float = 1.0
    noise: float = 0.0
    seed: int = 0
    template: object = None

    def __call__(self, lr, alpha, budget):
        return surrogate_objective(
            lr, alpha, budget, lr_star=self.lr_star, alpha_star=self.alpha_star,
            full_budget=self.full_budget, shift=self.shift,
            sharpness=self.sharpness, alpha_width=self.alpha_width,
            noise=self.noise, seed=self.seed)

    def evaluate(self, lr, alpha, budget, trial_dir=None, abort_signal=Event()):
        return TrialRecord(phase=0, round=0, index=0, lr=lr, alpha=alpha,
                           budget=budget, steps=budget_epochs(budget),
                           top1=self(lr, alpha, budget))
