"""Budgeted search of the learning rate and gain cap for FixNorm-FC training.

Phase 1 runs N rounds of growing budgets. Each round splits (lr_min, lr_max]
into K candidates, trains all of them with the current alpha and moves lr_max
down to the round's best candidate: the best lr of a short training bounds
the best lr of a longer one from above. Phase 2 trains the remaining alpha
candidates with the best lr at the largest budget.
"""
import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from threading import Event
from typing import List, Tuple

from fixnormlab import settings, utils
from fixnormlab.settings import ConfigError
from fixnormlab.tuning.objective import budget_epochs, TrainingObjective, TrialRecord


class TunerError(Exception):
    pass


@dataclass
class TunerResult:
    lr_best: float
    alpha_best: float
    acc_best: float
    trials: List[TrialRecord]
    steps: int
    budget: int
    single_steps: int
    # (lr_min, lr_max) searched in each Phase-1 round
    lr_ranges: List[Tuple[float, float]] = field(default_factory=list)
    aborted: bool = False

    def to_dict(self):
        return {'lr_best': self.lr_best,
                'alpha_best': self.alpha_best,
                'acc_best': self.acc_best,
                'steps': self.steps,
                'budget': self.budget,
                'single_steps': self.single_steps,
                'lr_ranges': [list(r) for r in self.lr_ranges],
                'aborted': self.aborted,
                'trials': [trial.to_dict() for trial in self.trials]}


def uniform_split(lr_min, lr_max, splits):
    """The `splits` points lr_min + i*(lr_max - lr_min)/splits for i = 1..splits."""
    if not lr_min < lr_max:
        raise ConfigError(f'lr_min: must be below lr_max ({lr_min} >= {lr_max})')
    if splits < 1:
        raise ConfigError(f'lr_splits: must be positive, got {splits}')
    step = (lr_max - lr_min)/splits
    return [lr_min + i*step for i in range(1, splits)] + [lr_max]


def budget_of(config, steps_per_epoch=1):
    """Steps a complete search costs: K * sum(T_r) + (m - 1) * T_{N-1}."""
    epochs = [budget_epochs(budget) for budget in config.budgets]
    return steps_per_epoch*(config.lr_splits*sum(epochs)
                            + (len(config.alphas) - 1)*epochs[-1])


def _argmax(values):
    return max(range(len(values)), key=lambda i: (values[i], -i))


@contextmanager
def quiet_logging():
    """Hold the root logger at WARNING or above while trials run."""
    logger = logging.getLogger()
    log_level = logger.getEffectiveLevel()
    if log_level == logging.INFO:
        logger.setLevel(logging.WARNING)
    try:
        yield
    finally:
        logger.setLevel(log_level)


class BudgetedSearch(object):

    def __init__(self, config, objective, out_dir=None, abort_signal=Event()):
        self.config = config
        self.objective = objective
        self.out_dir = None if out_dir is None else Path(out_dir)
        self.abort_signal = abort_signal
        # every trial so far, in submission order
        self.ledger = []
        if self.out_dir is not None:
            settings.mkdirs(self.out_dir)
            settings.write_jsonl([], self.out_dir/settings.LEDGER_FILENAME)

    def _trial_dir(self, phase, round, index):
        if self.out_dir is None:
            return None
        return self.out_dir/'trials'/f'{phase}-{round}-{index}'

    def run_trials(self, phase, round, points, budget):
        """Evaluate (lr, alpha) points concurrently; records come back in order."""
        def evaluate(index, lr, alpha):
            record = self.objective.evaluate(
                lr, alpha, budget, trial_dir=self._trial_dir(phase, round, index),
                abort_signal=self.abort_signal)
            return dataclasses.replace(record, phase=phase, round=round, index=index)

        with quiet_logging():
            with ThreadPoolExecutor(max_workers=self.config.parallelism) as pool:
                futures = [pool.submit(evaluate, index, lr, alpha)
                           for index, (lr, alpha) in enumerate(points)]
                records = [future.result() for future in futures]

        for record in records:
            self.ledger.append(record)
            if self.out_dir is not None:
                settings.append_jsonl(record.to_dict(),
                                      self.out_dir/settings.LEDGER_FILENAME)
            status = 'failed' if record.failed else utils.format_percent(record.top1)
            logging.info(f'Phase {phase} round {round}: lr {utils.format_lr(record.lr)}, '
                         f'alpha {record.alpha:g}, budget {record.budget:g} -> {status}')
        return records

    def run(self):
        config = self.config
        lr_min, lr_max = config.lr_min, config.lr_max
        alpha_best = config.alphas[0]
        lr_best = None
        acc_best = 0.0
        lr_ranges = []
        aborted = False

        logging.info(f'Phase 1: {config.rounds} rounds of {config.lr_splits} lrs, '
                     f'budgets {config.budgets}')
        for r, budget in enumerate(config.budgets):
            if self.abort_signal.is_set():
                aborted = True
                break
            lrs = uniform_split(lr_min, lr_max, config.lr_splits)
            lr_ranges.append((lr_min, lr_max))
            records = self.run_trials(1, r, [(lr, alpha_best) for lr in lrs], budget)
            k = _argmax([record.top1 for record in records])
            lr_max = lrs[k]
            if records[k].top1 > acc_best:
                acc_best = records[k].top1
                lr_best = lrs[k]
            logging.info(f'Round {r}: best lr {utils.format_lr(lrs[k])} '
                         f'({utils.format_percent(records[k].top1)})')

        if lr_best is None:
            raise TunerError('no lr trial scored above zero top-1, '
                             'no usable learning rate')

        if not aborted and len(config.alphas) > 1:
            logging.info(f'Phase 2: {len(config.alphas) - 1} alphas at lr '
                         f'{utils.format_lr(lr_best)}')
            records = self.run_trials(
                2, 0, [(lr_best, alpha) for alpha in config.alphas[1:]],
                config.budgets[-1])
            for record in records:
                if record.top1 > acc_best:
                    acc_best = record.top1
                    alpha_best = record.alpha

        spe = self.objective.steps_per_epoch
        result = TunerResult(
            lr_best=lr_best, alpha_best=alpha_best, acc_best=acc_best,
            trials=list(self.ledger),
            steps=sum(record.steps for record in self.ledger),
            budget=budget_of(config, spe),
            single_steps=spe*budget_epochs(config.budgets[-1]),
            lr_ranges=lr_ranges, aborted=aborted or self.abort_signal.is_set())
        logging.info(f'Best: lr {utils.format_lr(lr_best)}, alpha {alpha_best:g}, '
                     f'top-1 {utils.format_percent(acc_best)}; '
                     f'{utils.format_budget(result.steps, result.single_steps)}')
        if self.out_dir is not None:
            settings.write_json(result.to_dict(),
                                self.out_dir/settings.RESULT_FILENAME)
        return result


def tune(config, objective=None, out_dir=None, abort_signal=Event()):
    """Search lr and alpha for FixNorm-FC training of `config.template`.

    objective -- scores one (lr, alpha, budget) trial; real training of the
                 template when omitted
    """
    config.validate()
    if objective is None:
        objective = TrainingObjective(config.template)
    return BudgetedSearch(config, objective, out_dir=out_dir,
                          abort_signal=abort_signal).run()
