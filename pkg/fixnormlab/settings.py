import configparser
import copy
import dataclasses
import errno
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List


SECTION = 'experiment'
CONFIG_FILENAME = 'config.conf'
METRICS_FILENAME = 'metrics.jsonl'
RESULT_FILENAME = 'result.json'
LEDGER_FILENAME = 'ledger.jsonl'
GRID_FILENAME = 'grid.json'

MODES = ('WD', 'ALGO1', 'WN_FC', 'FIXNORM_FC')
PRESETS = ('mlp-blobs', 'cnn-small')
DATASETS = ('blobs', 'mnist', 'cifar10')
METRICS_KEYS = ('epoch', 'step', 'lr_mult', 'train_loss', 'val_top1',
                'group_norm', 'head_gain', 'mcbr_train', 'mcbr_val')

DEFAULT_SETTINGS = {
    # training recipe
    'mode': 'FIXNORM_FC',
    'lr': 0.1,
    'alpha': 1.0,
    'weight_decay': 0.0,
    'fc_weight_decay': 0.0,
    'momentum': 0.9,
    'nesterov': True,
    'label_smoothing': 0.1,
    'epochs': 30,
    'batch_size': 64,
    'warmup_epochs': 4,
    'seed': 0,
    'model': 'mlp-blobs',
    'mcbr_samples': 2048,
    # data
    'dataset': 'blobs',
    'data_dir': '',
    'train_subset': 0,
    'blob_classes': 4,
    'blob_dim': 16,
    'blob_separation': 4.0,
    'blob_sigma': 1.0,
    'blob_samples': 250,
    'blob_image_side': 0,
    'data_seed': 0,
    # tuner
    'lr_min': 0.2,
    'lr_max': 3.2,
    'lr_splits': 5,
    'budgets': [],
    'alphas': [0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
    'parallelism': 1,
    }
DOCUMENTATION = {
    'mode': 'WD, ALGO1, WN_FC or FIXNORM_FC',
    'lr': 'base learning rate',
    'alpha': 'FixNorm-FC gain cap coefficient (inf disables the cap)',
    'weight_decay': 'decay on every weight tensor (WD mode only)',
    'fc_weight_decay': 'decay on the final FC weights (ALGO1 mode only, e.g. 1e-4)',
    'momentum': 'momentum coefficient',
    'nesterov': 'nesterov momentum instead of heavy ball',
    'label_smoothing': 'label smoothing epsilon in [0, 1)',
    'epochs': 'training epochs',
    'batch_size': 'samples per step (partial batches are dropped)',
    'warmup_epochs': 'linear warmup length in epochs',
    'seed': 'seed for initialization and batch order',
    'model': 'mlp-blobs or cnn-small',
    'mcbr_samples': 'samples per split used for the cross-boundary risk',
    'dataset': 'blobs, mnist or cifar10',
    'data_dir': 'directory holding the mnist/cifar10 files',
    'train_subset': 'use only the first N training samples (0 = all)',
    'blob_classes': 'synthetic classes',
    'blob_dim': 'synthetic feature dimension',
    'blob_separation': 'distance of the class means from the origin',
    'blob_sigma': 'synthetic noise scale',
    'blob_samples': 'synthetic samples per class',
    'blob_image_side': 'reshape blobs into 1xSxS images (0 = vectors)',
    'data_seed': 'seed for synthetic data',
    'lr_min': 'tuner learning rate range, lower end (excluded)',
    'lr_max': 'tuner learning rate range, upper end (included)',
    'lr_splits': 'learning rates per tuning round',
    'budgets': 'epochs per lr round, non-decreasing (empty = 0.2*epochs, epochs)',
    'alphas': 'alpha candidates, the first one is used during lr rounds',
    'parallelism': 'concurrent trials',
    }


class ConfigError(ValueError):
    pass


def _float_list(text):
    return [float(item) for item in text.split(',') if item.strip() != '']


def read_settings_from_file(fd):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(f'[{SECTION}]\n' + fd.read())
    except configparser.Error as err:
        raise ConfigError(f'unreadable configuration: {err}')
    methods = {
        'mode': parser.get,
        'lr': parser.getfloat,
        'alpha': parser.getfloat,
        'weight_decay': parser.getfloat,
        'fc_weight_decay': parser.getfloat,
        'momentum': parser.getfloat,
        'nesterov': parser.getboolean,
        'label_smoothing': parser.getfloat,
        'epochs': parser.getint,
        'batch_size': parser.getint,
        'warmup_epochs': parser.getint,
        'seed': parser.getint,
        'model': parser.get,
        'mcbr_samples': parser.getint,
        'dataset': parser.get,
        'data_dir': parser.get,
        'train_subset': parser.getint,
        'blob_classes': parser.getint,
        'blob_dim': parser.getint,
        'blob_separation': parser.getfloat,
        'blob_sigma': parser.getfloat,
        'blob_samples': parser.getint,
        'blob_image_side': parser.getint,
        'data_seed': parser.getint,
        'lr_min': parser.getfloat,
        'lr_max': parser.getfloat,
        'lr_splits': parser.getint,
        'budgets': lambda section, key: _float_list(parser.get(section, key)),
        'alphas': lambda section, key: _float_list(parser.get(section, key)),
        'parallelism': parser.getint,
        }
    unknown = set(parser.options(SECTION)) - set(methods)
    if unknown:
        raise ConfigError(f'unknown key(s): {", ".join(sorted(unknown))}')

    def read_option(key, method):
        if not parser.has_option(SECTION, key):
            return copy.deepcopy(DEFAULT_SETTINGS[key])
        try:
            return method(SECTION, key)
        except ValueError as err:
            raise ConfigError(f'{key}: {err}')
    return {key: read_option(key, method) for key, method in methods.items()}


def _format_value(value):
    if isinstance(value, list):
        return ', '.join(repr(float(item)) for item in value)
    elif isinstance(value, float):
        return repr(value)
    else:
        return str(value)


def write_settings_to_file(fd, settings):
    for key in DEFAULT_SETTINGS:
        fd.write(f'{key} = {_format_value(settings[key])}\n')


def describe_settings():
    """One line per key with its default, for --help."""
    return '\n'.join(f'  {key} = {_format_value(DEFAULT_SETTINGS[key])}'
                     f'  ({DOCUMENTATION[key]})' for key in DEFAULT_SETTINGS)


@dataclass
class TrainConfig:
    mode: str = DEFAULT_SETTINGS['mode']
    lr: float = DEFAULT_SETTINGS['lr']
    alpha: float = DEFAULT_SETTINGS['alpha']
    weight_decay: float = DEFAULT_SETTINGS['weight_decay']
    fc_weight_decay: float = DEFAULT_SETTINGS['fc_weight_decay']
    momentum: float = DEFAULT_SETTINGS['momentum']
    nesterov: bool = DEFAULT_SETTINGS['nesterov']
    label_smoothing: float = DEFAULT_SETTINGS['label_smoothing']
    epochs: int = DEFAULT_SETTINGS['epochs']
    batch_size: int = DEFAULT_SETTINGS['batch_size']
    warmup_epochs: int = DEFAULT_SETTINGS['warmup_epochs']
    seed: int = DEFAULT_SETTINGS['seed']
    model: str = DEFAULT_SETTINGS['model']
    mcbr_samples: int = DEFAULT_SETTINGS['mcbr_samples']
    dataset: str = DEFAULT_SETTINGS['dataset']
    data_dir: str = DEFAULT_SETTINGS['data_dir']
    train_subset: int = DEFAULT_SETTINGS['train_subset']
    blob_classes: int = DEFAULT_SETTINGS['blob_classes']
    blob_dim: int = DEFAULT_SETTINGS['blob_dim']
    blob_separation: float = DEFAULT_SETTINGS['blob_separation']
    blob_sigma: float = DEFAULT_SETTINGS['blob_sigma']
    blob_samples: int = DEFAULT_SETTINGS['blob_samples']
    blob_image_side: int = DEFAULT_SETTINGS['blob_image_side']
    data_seed: int = DEFAULT_SETTINGS['data_seed']

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f'mode: expected one of {", ".join(MODES)}, got {self.mode}')
        if self.model not in PRESETS:
            raise ConfigError(f'model: unknown preset {self.model}')
        if self.dataset not in DATASETS:
            raise ConfigError(f'dataset: unknown dataset {self.dataset}')
        if not self.lr > 0.0:
            raise ConfigError(f'lr: must be positive, got {self.lr}')
        if not self.alpha > 0.0:
            raise ConfigError(f'alpha: must be positive, got {self.alpha}')
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f'momentum: must lie in [0, 1), got {self.momentum}')
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError(f'label_smoothing: must lie in [0, 1), '
                              f'got {self.label_smoothing}')
        for key in ('weight_decay', 'fc_weight_decay'):
            if getattr(self, key) < 0.0:
                raise ConfigError(f'{key}: must be >= 0')
        if self.mode in ('WN_FC', 'FIXNORM_FC') and (
                self.weight_decay > 0.0 or self.fc_weight_decay > 0.0):
            raise ConfigError(f'weight_decay: {self.mode} training uses no decay')
        if self.mode == 'ALGO1' and self.weight_decay > 0.0:
            raise ConfigError('weight_decay: ALGO1 fixes conv norms, '
                              'use fc_weight_decay for the final FC')
        if self.mode == 'WD' and self.fc_weight_decay > 0.0:
            raise ConfigError('fc_weight_decay: WD mode decays every weight '
                              'with weight_decay')
        if self.epochs < 1:
            raise ConfigError(f'epochs: must be positive, got {self.epochs}')
        if self.batch_size < 1:
            raise ConfigError(f'batch_size: must be positive, got {self.batch_size}')
        if self.model == 'mlp-blobs' and self.batch_size < 2:
            raise ConfigError('batch_size: mlp-blobs batch norm needs at least 2 '
                              'samples per batch')
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError(f'warmup_epochs: must lie in [0, epochs), '
                              f'got {self.warmup_epochs}')
        if self.seed < 0 or self.data_seed < 0:
            raise ConfigError('seed: must be >= 0')
        if self.mcbr_samples < 1:
            raise ConfigError('mcbr_samples: must be positive')
        if self.train_subset < 0:
            raise ConfigError('train_subset: must be >= 0')
        if self.dataset == 'blobs':
            if self.blob_classes < 2 or self.blob_dim < 1 or self.blob_samples < 1:
                raise ConfigError('blob_classes: need >= 2 classes, '
                                  'positive dimension and samples')
            if not self.blob_sigma > 0.0:
                raise ConfigError(f'blob_sigma: must be positive, got {self.blob_sigma}')
            if self.blob_image_side and self.blob_image_side**2 != self.blob_dim:
                raise ConfigError('blob_image_side: its square must equal blob_dim')
        elif self.data_dir == '':
            raise ConfigError(f'data_dir: required for dataset {self.dataset}')
        return self


@dataclass
class TunerConfig:
    template: TrainConfig
    lr_min: float = DEFAULT_SETTINGS['lr_min']
    lr_max: float = DEFAULT_SETTINGS['lr_max']
    lr_splits: int = DEFAULT_SETTINGS['lr_splits']
    budgets: List[float] = field(default_factory=list)
    alphas: List[float] = field(
        default_factory=lambda: list(DEFAULT_SETTINGS['alphas']))
    parallelism: int = DEFAULT_SETTINGS['parallelism']

    @property
    def rounds(self):
        return len(self.budgets)

    def validate(self):
        if not self.lr_min < self.lr_max:
            raise ConfigError(f'lr_min: must be below lr_max '
                              f'({self.lr_min} >= {self.lr_max})')
        if self.lr_min < 0.0:
            raise ConfigError('lr_min: must be >= 0')
        if self.lr_splits < 2:
            raise ConfigError(f'lr_splits: need at least 2, got {self.lr_splits}')
        if len(self.budgets) == 0:
            raise ConfigError('budgets: need at least one round')
        if any(not budget > 0 for budget in self.budgets):
            raise ConfigError('budgets: must be positive')
        if any(a > b for a, b in zip(self.budgets, self.budgets[1:])):
            raise ConfigError('budgets: must be non-decreasing')
        if len(self.alphas) == 0 or any(not a > 0.0 for a in self.alphas):
            raise ConfigError('alphas: need at least one positive candidate')
        if self.parallelism < 1:
            raise ConfigError('parallelism: must be positive')
        return self


@dataclass
class ExperimentConfig:
    train: TrainConfig
    tuner: TunerConfig
    settings: dict


def configs_from_settings(settings):
    train = TrainConfig(**{f.name: settings[f.name]
                           for f in dataclasses.fields(TrainConfig)})
    budgets = list(settings['budgets']) or [0.2*train.epochs, float(train.epochs)]
    tuner = TunerConfig(template=train,
                        lr_min=settings['lr_min'], lr_max=settings['lr_max'],
                        lr_splits=settings['lr_splits'], budgets=budgets,
                        alphas=list(settings['alphas']),
                        parallelism=settings['parallelism'])
    return ExperimentConfig(train=train.validate(), tuner=tuner, settings=settings)


def settings_from_config(train):
    """Flat settings dict describing one training run (tuner keys defaulted)."""
    settings = dict(DEFAULT_SETTINGS)
    settings.update(dataclasses.asdict(train))
    return settings


def load_config(path):
    """Read, default-fill and validate an experiment file."""
    try:
        with open(path, 'r') as fd:
            settings = read_settings_from_file(fd)
    except OSError as err:
        raise ConfigError(f'cannot read {path}: {err.strerror}')
    config = configs_from_settings(settings)
    config.tuner.validate()
    return config


def save_config(run_dir, settings):
    mkdirs(run_dir)
    with open(Path(run_dir)/CONFIG_FILENAME, 'w') as fd:
        write_settings_to_file(fd, settings)


def write_jsonl(records, path):
    with open(path, 'w') as fd:
        for record in records:
            fd.write(json.dumps(record) + '\n')


def append_jsonl(record, path):
    with open(path, 'a') as fd:
        fd.write(json.dumps(record) + '\n')


def read_jsonl(path):
    with open(path, 'r') as fd:
        return [json.loads(line) for line in fd if line.strip() != '']


def write_metrics(records, path):
    write_jsonl([{key: record[key] for key in METRICS_KEYS} for record in records],
                path)


def read_metrics(path):
    return read_jsonl(path)


def write_json(document, path):
    with open(path, 'w') as fd:
        json.dump(document, fd, indent=4)


def read_json(path):
    with open(path, 'r') as fd:
        return json.load(fd)


def mkdirs(d):
    try:
        os.makedirs(d)
    except OSError as err:
        if err.errno != errno.EEXIST or not os.path.isdir(d):
            raise
