# coding=utf-8
"""Prediction CSV files and the structured and plain-text run reports."""
import os
import csv
import json
import logging

import numpy as np

from .dataset import CSV_HEADER
from .errors import DataError, MalformedCsv, ColumnOrderMismatch

_logger = logging.getLogger(__name__)


def _ensure_folder(folder):
    if not os.path.isdir(folder):
        os.makedirs(folder)
    return folder


def write_predictions_csv(file_path, ids, preds):
    """Write predicted probabilities with the label CSV header, 6 decimals each.

    Args:
        file_path: Destination CSV path.
        ids: Image identifiers, one per row of preds.
        preds: An N x 4 matrix of probabilities.
    """
    ids = list(ids)
    preds = np.asarray(preds, dtype=np.float64).reshape(len(ids), len(CSV_HEADER) - 1)
    _ensure_folder(os.path.dirname(os.path.abspath(file_path)))
    with open(file_path, 'w', newline='') as fp:
        fp.write(','.join(CSV_HEADER) + '\n')
        for image_id, row in zip(ids, preds):
            fp.write(image_id + ',' + ','.join('{:.6f}'.format(v) for v in row) + '\n')
    return file_path


def read_predictions_csv(file_path):
    """Read a predictions CSV file written by write_predictions_csv.

    Returns:
        A tuple of (ids, N x 4 numpy array).
    """
    if not os.path.isfile(file_path):
        raise DataError('Predictions file not found: {}'.format(file_path))
    ids, rows = [], []
    with open(file_path, newline='') as fp:
        reader = csv.reader(fp)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ColumnOrderMismatch('Expected header {}. Got {}.'.format(
                ','.join(CSV_HEADER), header))
        for row in reader:
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise MalformedCsv(reader.line_num, 'expected {} fields, got {}'.format(
                    len(CSV_HEADER), len(row)))
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise MalformedCsv(reader.line_num, 'probabilities must be numbers')
            ids.append(row[0])
    return ids, np.array(rows, dtype=np.float64).reshape(len(rows), len(CSV_HEADER) - 1)


def write_report(folder, name, data, text=None):
    """Write a structured JSON report and, optionally, its plain-text rendering.

    Args:
        folder: Output folder.
        name: File name without extension.
        data: JSON-serializable dictionary.
        text: Optional plain text written to <name>.txt.

    Returns:
        Path to the JSON file.
    """
    _ensure_folder(folder)
    json_path = os.path.join(folder, name + '.json')
    with open(json_path, 'w') as fp:
        json.dump(data, fp, indent=2, sort_keys=True)
        fp.write('\n')
    if text is not None:
        with open(os.path.join(folder, name + '.txt'), 'w') as fp:
            fp.write(text)
    _logger.info('Wrote report %s.', json_path)
    return json_path


def run_header(run_cfg, seed):
    """Get the lines every plain-text report starts with."""
    return '# seed: {}\n# config:\n{}\n'.format(
        seed, '\n'.join('#   ' + line for line in run_cfg.to_yaml().splitlines()))


def write_metrics_report(folder, report, run_cfg, name='metrics', extra=None):
    """Write a MetricsReport with the config and seed that produced it.

    Args:
        folder: Output folder.
        report: A MetricsReport.
        run_cfg: The RunConfig of the run.
        name: File name without extension. (Default: metrics).
        extra: Optional dictionary merged into the JSON report.
    """
    data = report.to_dict()
    data['seed'] = run_cfg.seed
    data['config'] = run_cfg.model_dump(mode='json')
    if extra:
        data.update(extra)
    return write_report(folder, name, data, run_header(run_cfg, run_cfg.seed) +
                        report.to_text())


def iteration_table(iteration_reports):
    """Render the per-iteration results of self-training as a text table."""
    lines = ['iteration  parameters  real  pseudo  val_mean_auc']
    for rep in iteration_reports:
        counts = rep.origin_counts
        lines.append('{:>9}  {:>10}  {:>4}  {:>6}  {:>12.6f}'.format(
            rep.iteration, rep.model.parameter_count, counts['real'], counts['pseudo'],
            rep.mean_auc))
    return '\n'.join(lines) + '\n'


def write_selftrain_report(folder, iteration_reports, run_cfg, name='selftrain'):
    """Write the per-iteration reports of a self-training run."""
    data = {
        'type': 'SelfTrainReport',
        'seed': run_cfg.seed,
        'config': run_cfg.model_dump(mode='json'),
        'iterations': [rep.to_dict() for rep in iteration_reports]
    }
    text = run_header(run_cfg, run_cfg.seed) + iteration_table(iteration_reports)
    for rep in iteration_reports:
        text += '\n## iteration {}\n{}'.format(rep.iteration, rep.metrics.to_text())
    return write_report(folder, name, data, text)


def table_text(rows, columns):
    """Render a list of dictionaries as an aligned plain-text table."""
    widths = [max([len(c)] + [len(_cell(r.get(c))) for r in rows]) for c in columns]
    lines = ['  '.join(c.rjust(w) for c, w in zip(columns, widths))]
    for r in rows:
        lines.append('  '.join(_cell(r.get(c)).rjust(w) for c, w in zip(columns, widths)))
    return '\n'.join(lines) + '\n'


def _cell(value):
    if value is None:
        return '-'
    if isinstance(value, float):
        return '{:.6g}'.format(value)
    return str(value)
