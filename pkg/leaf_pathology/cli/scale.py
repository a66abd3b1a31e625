# coding=utf-8
"""leaf-pathology compound scaling commands."""
import logging

import click
import numpy as np

from ..blocks import build_model
from ..optim import train_supervised
from ..report import write_report, run_header, table_text
from ..scaling import grid_search_coefficients, apply_scaling, constraint_value, \
    flops_estimate, scale_model_spec
from ..experiments import synthetic_split
from .util import Command, config_option, seed_option, out_option, load_config, \
    prepare_out, run_command

_logger = logging.getLogger(__name__)


@click.command('scale-search', cls=Command)
@click.option('--grid-step', help='Spacing of the (alpha, beta, gamma) grid over '
              '[1, 2]. Defaults to scaling.grid_step of the configuration.',
              type=float, default=None)
@click.option('--tolerance', help='Largest accepted |alpha * beta^2 * gamma^2 - 2|. '
              'Defaults to scaling.tolerance of the configuration.', type=float,
              default=None)
@click.option('--top', help='Number of ranked candidates written to the report.',
              type=int, default=10, show_default=True)
@click.option('--train-objective/--constraint-objective', default=False,
              help='Flag to rank candidates by the validation mean AUC of a model '
              'scaled by each of them and trained on the configured data instead of '
              'by closeness of the constraint to 2.', show_default=True)
@click.option('--workers', '-w', help='Number of threads training candidates.',
              type=int, default=None)
@config_option
@seed_option
@out_option
def scale_search_cli(grid_step, tolerance, top, train_objective, workers, config_file,
                     seed, out_dir):
    """Grid-search compound scaling coefficients and write the ranked candidates."""
    run_command('Scaling search', scale_search, grid_step, tolerance, top,
                train_objective, workers, config_file, seed, out_dir)


def scale_search(grid_step=None, tolerance=None, top=10, train_objective=False,
                 workers=None, config_file=None, seed=None, out_dir='run'):
    """Search scaling coefficients and write scaling.json and scaling.txt.

    Args:
        grid_step: Optional grid spacing overriding the configuration.
        tolerance: Optional constraint tolerance overriding the configuration.
        top: Number of candidates kept in the report.
        train_objective: Set to True to score every candidate by training a model
            scaled with it (phi = 1) on the synthetic data of the run.
        workers: Optional number of threads used to score candidates.
        config_file: Optional path to a YAML run configuration.
        seed: Optional seed overriding the configuration seed.
        out_dir: Output folder.

    Returns:
        The ranked list of ScalingCoefficients.
    """
    run_cfg = load_config(config_file, seed)
    prepare_out(out_dir, run_cfg)
    sc = run_cfg.scaling
    grid_step = sc.grid_step if grid_step is None else grid_step
    tolerance = sc.tolerance if tolerance is None else tolerance

    objective, scores = None, {}
    if train_objective:
        base = run_cfg.model.to_spec()
        train, validation = synthetic_split(run_cfg, run_cfg.seed)

        def objective(c):
            spec = scale_model_spec(base, apply_scaling(c))
            model = build_model(spec, np.random.default_rng([run_cfg.seed, 0]))
            _, report = train_supervised(model, train, run_cfg.train,
                                         run_cfg.augment_for(spec),
                                         validation=validation)
            scores[tuple(c[:3])] = report.mean_auc
            return report.mean_auc

    ranked = grid_search_coefficients(grid_step, tolerance, objective, workers)
    rows = []
    for rank, c in enumerate(ranked[:top], 1):
        dims = apply_scaling(c)
        rows.append({
            'rank': rank, 'alpha': c.alpha, 'beta': c.beta, 'gamma': c.gamma,
            'constraint': constraint_value(c),
            'flops': flops_estimate(dims, sc.base_flops),
            'val_mean_auc': scores.get(tuple(c[:3]))
        })
    columns = ['rank', 'alpha', 'beta', 'gamma', 'constraint', 'flops']
    if train_objective:
        columns.append('val_mean_auc')
    data = {'type': 'ScalingReport', 'seed': run_cfg.seed, 'grid_step': grid_step,
            'tolerance': tolerance, 'candidates': len(ranked), 'rows': rows,
            'config': run_cfg.model_dump(mode='json')}
    write_report(out_dir, 'scaling', data,
                 run_header(run_cfg, run_cfg.seed) + table_text(rows, columns))
    return ranked
