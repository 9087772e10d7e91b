import argparse
import json
import logging
import signal
import sys
from contextlib import contextmanager
from pathlib import Path
from threading import Event

import numpy as np

from fixnormlab import settings, utils
from fixnormlab.autodiff.tensor import AutodiffError
from fixnormlab.checks import run_gradcheck, TOLERANCE
from fixnormlab.data.datasets import inspect_dataset, load_datasets
from fixnormlab.data.readers import FormatError
from fixnormlab.download.downloads import DownloadError, fetch_dataset, make_datasets
from fixnormlab.report import report, ReportError
from fixnormlab.settings import ConfigError
from fixnormlab.training.trainer import (grid_search_lr, grid_search_lr_alpha,
                                        train_run)
from fixnormlab.tuning.budgeted import tune, TunerError
from fixnormlab.version import __version__


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def make_parser():
    argp = argparse.ArgumentParser(
        prog='fixnormlab',
        description='Train and tune networks with fixed weight norms.')
    argp.add_argument('-v', '--verbose', action='store_true',
                      help='print progress to the console log')
    argp.add_argument('--debug', action='store_true',
                      help='print per-step details, implies --verbose')
    argp.add_argument('--version', action='version',
                      version=f'fixnormlab {__version__}')
    commands = argp.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    def experiment_command(name, help):
        command = commands.add_parser(
            name, help=help, epilog='configuration keys (defaults):\n'
            + settings.describe_settings(),
            formatter_class=argparse.RawDescriptionHelpFormatter)
        command.add_argument('--config', required=True, type=Path,
                             help='experiment file of key = value lines')
        command.add_argument('--out', type=Path, default=None,
                             help='output directory')
        return command

    experiment_command('train', 'train one network')
    experiment_command('tune', 'search lr and alpha for FixNorm-FC training')
    sweep = experiment_command('sweep', 'train once per learning rate')
    sweep.add_argument('--lrs', required=True,
                       help='comma-separated learning rates')
    sweep.add_argument('--alphas', default=None,
                       help='comma-separated gain caps; sweeps the lrs once per '
                       'alpha (FIXNORM_FC only)')

    gradcheck = commands.add_parser(
        'gradcheck', help='compare every gradient against finite differences')
    gradcheck.add_argument('--seed', type=int, default=0,
                           help='seed of the random instances (default: 0)')

    data = commands.add_parser('data', help='generate, inspect or fetch datasets')
    data_commands = data.add_subparsers(dest='data_command', metavar='ACTION')
    data_commands.required = True
    synth = data_commands.add_parser(
        'synth', help='generate the synthetic blobs of an experiment file')
    synth.add_argument('--config', type=Path, default=None)
    synth.add_argument('--out', type=Path, default=None,
                       help='write train.npz and val.npz here')
    inspect = data_commands.add_parser('inspect', help='summarize a dataset')
    inspect.add_argument('--config', type=Path, default=None)
    fetch = data_commands.add_parser('fetch', help='download a dataset')
    fetch.add_argument('name', choices=sorted(make_datasets('.')))
    fetch.add_argument('--data-dir', type=Path, default=Path('data'))

    report_command = commands.add_parser(
        'report', help='CSV tables of runs and summaries of tuner outputs')
    report_command.add_argument('dirs', nargs='+', type=Path)
    report_command.add_argument('--out', type=Path, default=None,
                                help='write CSV files here instead of printing')
    return argp


def main(argv=None):
    sys.excepthook = excepthook

    argp = make_parser()
    try:
        args = argp.parse_args(argv)
    except SystemExit as err:
        return err.code

    if args.debug:
        log_level = logging.DEBUG
    elif args.verbose:
        log_level = logging.INFO
    else:
        log_level = logging.WARN
    logging.basicConfig(format='%(asctime)s %(levelname)s: %(message)s',
                        level=log_level)

    try:
        return COMMANDS[args.command](args)
    except ConfigError as err:
        print(f'fixnormlab: configuration error: {err}', file=sys.stderr)
        return EXIT_USAGE
    except (AutodiffError, FormatError, DownloadError, ReportError, TunerError,
            OSError) as err:
        logging.error(f'{err}')
        print(f'fixnormlab: {err}', file=sys.stderr)
        return EXIT_FAILURE


def excepthook(type, value, traceback):
    sys.__excepthook__(type, value, traceback)
    logging.critical('Crash! Unhandled exception, results may be incomplete.')


@contextmanager
def interruptible():
    """Turn SIGINT into an abort signal for the duration of the block."""
    abort_signal = Event()
    previous = signal.signal(signal.SIGINT, lambda signum, frame: abort_signal.set())
    try:
        yield abort_signal
    finally:
        signal.signal(signal.SIGINT, previous)


def _print_json(document):
    print(json.dumps(document, indent=4))


def run_train(args):
    config = settings.load_config(args.config)
    with interruptible() as abort_signal:
        result = train_run(config.train, out_dir=args.out, abort_signal=abort_signal)
    _print_json(result.to_dict())
    return EXIT_FAILURE if result.failed else EXIT_OK


def run_tune(args):
    config = settings.load_config(args.config)
    if args.out is not None:
        settings.save_config(args.out, config.settings)
    with interruptible() as abort_signal:
        result = tune(config.tuner, out_dir=args.out, abort_signal=abort_signal)
    print(f'lr_best = {utils.format_lr(result.lr_best)}')
    print(f'alpha_best = {result.alpha_best:g}')
    print(f'acc_best = {utils.format_percent(result.acc_best)}')
    print(f'budget: {utils.format_budget(result.steps, result.single_steps)}')
    return EXIT_OK


def _float_list_option(name, text):
    try:
        return [float(item) for item in text.split(',') if item.strip() != '']
    except ValueError as err:
        raise ConfigError(f'{name}: {err}')


def run_sweep(args):
    config = settings.load_config(args.config)
    lrs = _float_list_option('lrs', args.lrs)
    if args.alphas is not None:
        alphas = _float_list_option('alphas', args.alphas)
        with interruptible() as abort_signal:
            grid = grid_search_lr_alpha(config.train, lrs, alphas, out_dir=args.out,
                                        abort_signal=abort_signal)
        for alpha, top1, best in zip(grid.alphas, grid.top1, grid.best_lr):
            print(f'alpha {alpha:g}: best lr = {utils.format_lr(lrs[best])} '
                  f'({utils.format_percent(top1[best])})')
        return EXIT_OK

    with interruptible() as abort_signal:
        results, best = grid_search_lr(config.train, lrs, out_dir=args.out,
                                       abort_signal=abort_signal)
    for lr, result in zip(lrs, results):
        status = 'failed' if result.failed else utils.format_percent(result.best_top1)
        print(f'lr {utils.format_lr(lr)}: {status}')
    if best is not None:
        print(f'best lr = {utils.format_lr(lrs[best])}')
    return EXIT_OK


def run_gradcheck_command(args):
    errors = run_gradcheck(seed=args.seed)
    ok = True
    for name, error in errors.items():
        passed = error < TOLERANCE
        ok = ok and passed
        print(f'{name:22s} max rel. error {error:.3e} {"ok" if passed else "FAIL"}')
    return EXIT_OK if ok else EXIT_FAILURE


def _experiment(path):
    if path is None:
        return settings.configs_from_settings(dict(settings.DEFAULT_SETTINGS))
    return settings.load_config(path)


def run_data(args):
    if args.data_command == 'fetch':
        print(fetch_dataset(args.name, args.data_dir))
        return EXIT_OK

    config = _experiment(args.config).train
    if args.data_command == 'synth' and config.dataset != 'blobs':
        raise ConfigError(f'dataset: synth generates blobs, not {config.dataset}')
    train, val = load_datasets(config)
    if args.data_command == 'synth' and args.out is not None:
        settings.mkdirs(args.out)
        for dataset in (train, val):
            np.savez(Path(args.out)/f'{dataset.split}.npz',
                     features=dataset.features, labels=dataset.labels)
    _print_json([inspect_dataset(train), inspect_dataset(val)])
    return EXIT_OK


def run_report(args):
    report(args.dirs, out_dir=args.out)
    return EXIT_OK


COMMANDS = {
    'train': run_train,
    'tune': run_tune,
    'sweep': run_sweep,
    'gradcheck': run_gradcheck_command,
    'data': run_data,
    'report': run_report,
    }
