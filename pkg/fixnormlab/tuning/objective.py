import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from threading import Event
from typing import Optional

from fixnormlab.data.datasets import load_datasets
from fixnormlab.settings import ConfigError
from fixnormlab.training.trainer import steps_per_epoch, train_run


@dataclass
class TrialRecord:
    phase: int
    round: int
    index: int
    lr: float
    alpha: float
    budget: float
    steps: int
    top1: float
    failed: bool = False
    metrics_path: Optional[str] = None

    def to_dict(self):
        return dataclasses.asdict(self)


def budget_epochs(budget):
    """Whole epochs a budget buys; fractional epochs round up."""
    if not budget > 0:
        raise ConfigError(f'budget: must be positive, got {budget}')
    return int(math.ceil(budget - 1e-9))


class Objective(object):

    def __init__(self, template):
        # TrainConfig every trial starts from
        self.template = template

    @property
    def steps_per_epoch(self):
        """Optimizer steps one epoch of budget costs."""
        return 1

    def evaluate(self, lr, alpha, budget, trial_dir=None, abort_signal=Event()):
        """Score (lr, alpha) after training for `budget` epochs.

        Return a TrialRecord; phase, round and index are filled in by the
        caller."""
        pass


def trial_config(template, lr, alpha, budget):
    """FixNorm-FC variant of `template` trained for `budget` epochs."""
    epochs = budget_epochs(budget)
    return dataclasses.replace(
        template, mode='FIXNORM_FC', lr=lr, alpha=alpha, epochs=epochs,
        warmup_epochs=min(template.warmup_epochs, epochs - 1),
        weight_decay=0.0, fc_weight_decay=0.0)


def run_trial(lr, alpha, budget, template, datasets=None, trial_dir=None,
              abort_signal=Event()):
    """One FixNorm-FC training of `budget` epochs; diverged runs score 0."""
    config = trial_config(template, lr, alpha, budget)
    result = train_run(config, datasets=datasets, out_dir=trial_dir,
                       abort_signal=abort_signal)
    return TrialRecord(phase=0, round=0, index=0, lr=lr, alpha=alpha,
                       budget=budget, steps=result.steps,
                       top1=0.0 if result.failed else result.final_top1,
                       failed=result.failed, metrics_path=result.metrics_path)


class TrainingObjective(Objective):
    """Real training on the template's dataset, loaded once and shared."""

    def __init__(self, template, datasets=None):
        super(TrainingObjective, self).__init__(template)
        self.datasets = datasets if datasets is not None else load_datasets(template)

    @property
    def steps_per_epoch(self):
        return steps_per_epoch(len(self.datasets[0]), self.template.batch_size)

    def evaluate(self, lr, alpha, budget, trial_dir=None, abort_signal=Event()):
        return run_trial(lr, alpha, budget, self.template, datasets=self.datasets,
                         trial_dir=None if trial_dir is None else Path(trial_dir),
                         abort_signal=abort_signal)
