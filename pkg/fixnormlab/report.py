import csv
import logging
import sys
from pathlib import Path

from fixnormlab import settings, utils


# metric columns of the per-epoch tables
REPORT_METRICS = tuple(key for key in settings.METRICS_KEYS if key != 'epoch')


class ReportError(Exception):
    pass


def is_run_dir(path):
    return (Path(path)/settings.METRICS_FILENAME).is_file()


def is_tuner_dir(path):
    return (Path(path)/settings.LEDGER_FILENAME).is_file()


def is_grid_dir(path):
    return (Path(path)/settings.GRID_FILENAME).is_file()


def _load_metrics(path):
    try:
        return settings.read_metrics(Path(path)/settings.METRICS_FILENAME)
    except (OSError, ValueError) as err:
        raise ReportError(f'{path}: cannot read metrics ({err})')


def metric_table(run_dirs, metric):
    """Rows of epoch followed by `metric` of each run; blank past a run's end."""
    if metric not in REPORT_METRICS:
        raise ReportError(f'unknown metric {metric}')
    runs = [(Path(d).name, _load_metrics(d)) for d in run_dirs]
    epochs = sorted(set(record['epoch'] for _, records in runs for record in records))
    header = ['epoch'] + [name for name, _ in runs]
    rows = []
    for epoch in epochs:
        row = [epoch]
        for _, records in runs:
            value = next((r[metric] for r in records if r['epoch'] == epoch), '')
            row.append(repr(value) if isinstance(value, float) else value)
        rows.append(row)
    return header, rows


def write_table(header, rows, fd):
    writer = csv.writer(fd, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)


def report_runs(run_dirs, out_dir=None):
    """One CSV table per metric, written to out_dir or printed.

    Returns the paths written (empty when printing).
    """
    paths = []
    if out_dir is not None:
        settings.mkdirs(out_dir)
    for metric in REPORT_METRICS:
        header, rows = metric_table(run_dirs, metric)
        if out_dir is None:
            print(f'# {metric}')
            write_table(header, rows, sys.stdout)
        else:
            path = Path(out_dir)/f'{metric}.csv'
            with open(path, 'w', newline='') as fd:
                write_table(header, rows, fd)
            paths.append(path)
    logging.info(f'Reported {len(run_dirs)} run(s)')
    return paths


def ledger_summary(tuner_dir):
    """Trial table of a tuner directory and its budget line, as text lines."""
    tuner_dir = Path(tuner_dir)
    try:
        trials = settings.read_jsonl(tuner_dir/settings.LEDGER_FILENAME)
        result = settings.read_json(tuner_dir/settings.RESULT_FILENAME)
    except (OSError, ValueError) as err:
        raise ReportError(f'{tuner_dir}: cannot read tuner output ({err})')

    lines = ['phase round index         lr  alpha  budget    steps     top-1']
    for t in trials:
        top1 = 'failed' if t['failed'] else utils.format_percent(t['top1'])
        lines.append(f"{t['phase']:5d} {t['round']:5d} {t['index']:5d} "
                     f"{utils.format_lr(t['lr']):>10} {t['alpha']:6g} "
                     f"{t['budget']:7g} {t['steps']:8d} {top1:>9}")
    consumed = sum(t['steps'] for t in trials)
    lines.append(f"best: lr {utils.format_lr(result['lr_best'])}, "
                 f"alpha {result['alpha_best']:g}, "
                 f"top-1 {utils.format_percent(result['acc_best'])}")
    lines.append(f"budget: {utils.format_budget(consumed, result['single_steps'])}")
    if consumed == result['budget']:
        lines.append(f"budget matches the planned {result['budget']} steps")
    else:
        lines.append(f"budget differs from the planned {result['budget']} steps "
                     f"(failed or aborted trials)")
    return lines


def grid_table(grid_dir):
    """Best top-1 of every lr (rows) under every alpha (columns)."""
    try:
        grid = settings.read_json(Path(grid_dir)/settings.GRID_FILENAME)
    except (OSError, ValueError) as err:
        raise ReportError(f'{grid_dir}: cannot read grid ({err})')
    header = ['lr'] + [f"alpha={alpha:g}" for alpha in grid['alphas']]
    rows = [[repr(lr)] + [repr(top1[i]) for top1 in grid['top1']]
            for i, lr in enumerate(grid['lrs'])]
    return header, rows


def report_grid(grid_dir, out_dir=None):
    header, rows = grid_table(grid_dir)
    if out_dir is None:
        print('# top-1 by lr and alpha')
        write_table(header, rows, sys.stdout)
        return []
    settings.mkdirs(out_dir)
    path = Path(out_dir)/f'{Path(grid_dir).name}_grid_top1.csv'
    with open(path, 'w', newline='') as fd:
        write_table(header, rows, fd)
    return [path]


def report(dirs, out_dir=None):
    """Summarize tuner directories, tabulate grid and run directories."""
    runs = []
    paths = []
    for d in dirs:
        if is_tuner_dir(d):
            print('\n'.join(ledger_summary(d)))
        elif is_grid_dir(d):
            paths += report_grid(d, out_dir=out_dir)
        elif is_run_dir(d):
            runs.append(d)
        else:
            raise ReportError(f'{d}: not a run, grid or tuner directory')
    if runs:
        paths += report_runs(runs, out_dir=out_dir)
    return paths
