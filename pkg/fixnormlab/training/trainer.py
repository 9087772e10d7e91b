import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from threading import Event
from typing import List, Optional

import numpy as np

from fixnormlab import settings, utils
from fixnormlab.autodiff.ops import DegenerateWeightsError, softmax_cross_entropy
from fixnormlab.autodiff.tensor import NonFiniteError, Tape, Tensor
from fixnormlab.data.datasets import load_datasets
from fixnormlab.layers.geometry import mcbr
from fixnormlab.optim.schedule import WarmupCosine
from fixnormlab.optim.sgd import capture_initial_norms, DivergenceError, effective_lr, SGD
from fixnormlab.settings import ConfigError
from fixnormlab.training.models import build_model, tracked_group


EVAL_BATCH = 512

# errors that end a run as failed instead of propagating
DIVERGENCE_ERRORS = (NonFiniteError, DivergenceError, DegenerateWeightsError)


@dataclass
class MetricsRecord:
    epoch: int
    step: int
    lr_mult: float
    train_loss: float
    val_top1: float
    group_norm: float
    head_gain: float
    mcbr_train: float
    mcbr_val: float

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class RunResult:
    final_top1: float
    best_top1: float
    metrics_path: Optional[str]
    config: dict
    steps: int
    failed: bool = False
    aborted: bool = False
    records: List[MetricsRecord] = field(default_factory=list, repr=False)

    def to_dict(self):
        return {'final_top1': self.final_top1,
                'best_top1': self.best_top1,
                'metrics_path': self.metrics_path,
                'config': self.config,
                'steps': self.steps,
                'failed': self.failed,
                'aborted': self.aborted}


def steps_per_epoch(samples, batch_size):
    """Full batches per epoch; the partial last batch is dropped."""
    if samples < batch_size:
        raise ConfigError(f'batch_size: {batch_size} exceeds the {samples} '
                          'training samples')
    return samples//batch_size


class BatchSampler(object):
    """Epoch-wise shuffling driven only by (seed, epoch).

    The permutation of the current epoch is cached, so sequential calls cost
    one permutation per epoch.
    """

    def __init__(self, dataset, batch_size, seed):
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed
        self.steps_per_epoch = steps_per_epoch(len(dataset), batch_size)
        self._epoch = None
        self._order = None

    def permutation(self, epoch):
        if epoch != self._epoch:
            self._order = np.random.default_rng([self.seed, epoch]).permutation(
                len(self.dataset))
            self._epoch = epoch
        return self._order

    def __call__(self, t):
        epoch, i = divmod(t, self.steps_per_epoch)
        indices = self.permutation(epoch)[i*self.batch_size:(i + 1)*self.batch_size]
        return self.dataset.features[indices], self.dataset.labels[indices]


def batch_sampler(t, dataset, batch_size, seed):
    return BatchSampler(dataset, batch_size, seed)(t)


def evaluate_top1(network, dataset, batch_size=EVAL_BATCH):
    """Fraction of samples whose largest logit is the label (first index on ties)."""
    correct = 0
    for start in range(0, len(dataset), batch_size):
        x = Tensor(dataset.features[start:start + batch_size])
        logits, _ = network.forward(x, training=False)
        predictions = np.argmax(logits.data, axis=1)
        correct += int(np.sum(predictions == dataset.labels[start:start + batch_size]))
    return correct/len(dataset)


def measure_mcbr(network, dataset, batch_size=EVAL_BATCH):
    """Mean cross-boundary risk of the head input over a whole split."""
    features = np.concatenate([
        network.features(Tensor(dataset.features[start:start + batch_size]),
                         training=False).data
        for start in range(0, len(dataset), batch_size)])
    _, mean = mcbr(features, dataset.labels, network.head.W)
    return mean


def train_step(network, optimizer, batch, multiplier, smoothing):
    x, y = batch
    network.zero_grad()
    with Tape() as tape:
        logits, _ = network.forward(Tensor(x), training=True)
        loss = softmax_cross_entropy(logits, y, smoothing=smoothing)
        tape.backward(loss)
    optimizer.step(multiplier)
    return loss.item()


def train_run(config, datasets=None, out_dir=None, abort_signal=Event()):
    """Train one network from scratch under `config` and record per-epoch metrics.

    Keyword arguments:
    datasets -- (train, val) pair; loaded from the config when omitted
    out_dir -- run directory for config echo, metrics and result, if any
    abort_signal -- stops the run at the next step boundary; completed
                    epochs are kept and the result is flagged aborted
    """
    config.validate()
    if config.mode == 'ALGO1' and config.fc_weight_decay == 0.0:
        logging.warning('ALGO1 training with fc_weight_decay = 0: the final FC '
                        'weights are not decayed')
    echo = settings.settings_from_config(config)
    train, val = datasets if datasets is not None else load_datasets(config)
    sampler = BatchSampler(train, config.batch_size, config.seed)
    total_steps = config.epochs*sampler.steps_per_epoch
    schedule = WarmupCosine(total_steps, config.warmup_epochs*sampler.steps_per_epoch)

    rng = np.random.default_rng(config.seed)
    network, groups = build_model(
        config.model, config.mode, config.alpha, rng, train.sample_shape,
        train.classes, weight_decay=config.weight_decay,
        fc_weight_decay=config.fc_weight_decay)
    capture_initial_norms(groups)
    tracked = tracked_group(groups)
    optimizer = SGD(groups, config.lr, momentum=config.momentum,
                    nesterov=config.nesterov)
    risk_train = train.head(config.mcbr_samples)
    risk_val = val.head(config.mcbr_samples)

    metrics_path = None
    if out_dir is not None:
        settings.save_config(out_dir, echo)
        metrics_path = Path(out_dir)/settings.METRICS_FILENAME
        settings.write_jsonl([], metrics_path)

    logging.info(f'Training {config.model} in {config.mode} mode: lr={config.lr}, '
                 f'alpha={config.alpha}, {config.epochs} epochs x '
                 f'{sampler.steps_per_epoch} steps')
    records = []
    failed = aborted = False
    step = 0
    start = time.monotonic()
    try:
        for epoch in range(config.epochs):
            losses = []
            for _ in range(sampler.steps_per_epoch):
                if abort_signal.is_set():
                    aborted = True
                    break
                multiplier = schedule.multiplier(step)
                losses.append(train_step(network, optimizer, sampler(step),
                                         multiplier, config.label_smoothing))
                logging.debug(f'step {step}: loss {losses[-1]:.6f}')
                step += 1
            if aborted:
                logging.info(f'Training aborted at step {step}')
                break

            record = MetricsRecord(
                epoch=epoch, step=step, lr_mult=float(multiplier),
                train_loss=float(np.mean(losses)),
                val_top1=float(evaluate_top1(network, val)),
                group_norm=tracked.norm(), head_gain=float(network.head.gain()),
                mcbr_train=measure_mcbr(network, risk_train),
                mcbr_val=measure_mcbr(network, risk_val))
            records.append(record)
            if metrics_path is not None:
                settings.append_jsonl(record.to_dict(), metrics_path)
            logging.info(
                f'epoch {epoch}: loss {record.train_loss:.4f}, '
                f'top-1 {utils.format_percent(record.val_top1)}, '
                f'|{tracked.name}| {record.group_norm:.4f}, '
                f'gain {record.head_gain:.4f}, '
                f'MCBR {record.mcbr_train:.4f}/{record.mcbr_val:.4f}, '
                f'ELR {effective_lr(config.lr, multiplier, record.group_norm):.3e}')
    except DIVERGENCE_ERRORS as err:
        logging.warning(f'Run diverged at step {step}: {err}')
        failed = True
    logging.info(f'Run finished after {step} steps in '
                 f'{utils.format_time(time.monotonic() - start)}')

    if failed:
        final_top1 = best_top1 = 0.0
    else:
        final_top1 = records[-1].val_top1 if records else 0.0
        best_top1 = max([r.val_top1 for r in records], default=0.0)
    result = RunResult(final_top1=final_top1, best_top1=best_top1,
                       metrics_path=str(metrics_path) if metrics_path else None,
                       config=echo, steps=step, failed=failed, aborted=aborted,
                       records=records)
    if out_dir is not None:
        settings.write_json(result.to_dict(), Path(out_dir)/settings.RESULT_FILENAME)
    return result


def grid_search_lr(template, lrs, datasets=None, out_dir=None, abort_signal=Event()):
    """Train `template` once per learning rate; return (results, best index).

    The best run has the highest best validation top-1, the first one on ties.
    """
    if len(lrs) == 0:
        raise ConfigError('lrs: need at least one learning rate')
    if datasets is None:
        datasets = load_datasets(template)
    results = []
    for i, lr in enumerate(lrs):
        if abort_signal.is_set():
            break
        run_dir = None if out_dir is None else Path(out_dir)/f'lr-{i}'
        results.append(train_run(dataclasses.replace(template, lr=lr),
                                 datasets=datasets, out_dir=run_dir,
                                 abort_signal=abort_signal))
        logging.info(f'lr {lr}: best top-1 '
                     f'{utils.format_percent(results[-1].best_top1)}')
    if not results:
        return results, None
    best = max(range(len(results)), key=lambda i: (results[i].best_top1, -i))
    return results, best


@dataclass
class LrAlphaGrid:
    lrs: List[float]
    alphas: List[float]
    # top1[j][i] is the best validation top-1 at alphas[j], lrs[i]
    top1: List[List[float]]
    best_lr: List[int]
    aborted: bool = False

    def to_dict(self):
        return dataclasses.asdict(self)


def grid_search_lr_alpha(template, lrs, alphas, datasets=None, out_dir=None,
                         abort_signal=Event()):
    """Joint lr x alpha grid of FixNorm-FC trainings, one lr sweep per alpha.

    Each sweep writes its runs to out_dir/alpha-<j>/lr-<i>. Failed runs score
    0. An aborted grid keeps only the sweeps that completed.
    """
    if template.mode != 'FIXNORM_FC':
        raise ConfigError(f'alphas: only FIXNORM_FC training has a gain cap, '
                          f'not {template.mode}')
    if len(alphas) == 0 or any(not alpha > 0.0 for alpha in alphas):
        raise ConfigError('alphas: need at least one positive candidate')
    if len(lrs) == 0:
        raise ConfigError('lrs: need at least one learning rate')
    if datasets is None:
        datasets = load_datasets(template)

    grid = LrAlphaGrid(lrs=list(lrs), alphas=[], top1=[], best_lr=[])
    for j, alpha in enumerate(alphas):
        sweep_dir = None if out_dir is None else Path(out_dir)/f'alpha-{j}'
        results, best = grid_search_lr(
            dataclasses.replace(template, alpha=alpha), lrs, datasets=datasets,
            out_dir=sweep_dir, abort_signal=abort_signal)
        if len(results) < len(lrs) or any(result.aborted for result in results):
            grid.aborted = True
            break
        grid.alphas.append(alpha)
        grid.top1.append([result.best_top1 for result in results])
        grid.best_lr.append(best)
        logging.info(f'alpha {alpha:g}: best lr {utils.format_lr(lrs[best])} '
                     f'({utils.format_percent(results[best].best_top1)})')

    if out_dir is not None:
        settings.mkdirs(out_dir)
        settings.write_json(grid.to_dict(), Path(out_dir)/settings.GRID_FILENAME)
    return grid
