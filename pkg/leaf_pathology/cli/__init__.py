# coding=utf-8
"""leaf-pathology command line interface."""
import logging

import click

from .util import Group
from .train import train_cli, selftrain_cli, evaluate_cli, predict_cli, \
    ensemble_cli, sweep_cli, experiment_cli
from .data import make_synthetic_cli, augment_preview_cli
from .scale import scale_search_cli


@click.group(cls=Group, help='leaf-pathology commands.')
@click.version_option()
@click.option('--verbose', '-v', is_flag=True, default=False,
              help='Flag to log every training batch in addition to every epoch.')
def main(verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


main.add_command(train_cli)
main.add_command(selftrain_cli)
main.add_command(evaluate_cli)
main.add_command(predict_cli)
main.add_command(ensemble_cli)
main.add_command(sweep_cli)
main.add_command(experiment_cli)
main.add_command(make_synthetic_cli)
main.add_command(augment_preview_cli)
main.add_command(scale_search_cli)
