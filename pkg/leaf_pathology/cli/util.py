# coding=utf-8
"""Helpers shared by the leaf-pathology commands."""
import os
import sys
import logging

import click

from ..config import RunConfig, load_run_config
from ..dataset import DatasetManifest, UnlabeledSet, load_dataset, hide_labels
from ..errors import ConfigError, DataError, NumericError
from ..experiments import synthetic_split

_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageExitCode(object):
    """Make click usage errors exit with EXIT_USAGE."""

    def make_context(self, *args, **kwargs):
        try:
            return super(_UsageExitCode, self).make_context(*args, **kwargs)
        except click.UsageError as e:
            e.exit_code = EXIT_USAGE
            raise


class Command(_UsageExitCode, click.Command):
    pass


class Group(_UsageExitCode, click.Group):
    command_class = Command

    def resolve_command(self, ctx, args):
        try:
            return super(Group, self).resolve_command(ctx, args)
        except click.UsageError as e:
            e.exit_code = EXIT_USAGE
            raise


def exit_code_for(error):
    """Get the process exit code of an exception."""
    if isinstance(error, NumericError):
        return EXIT_NUMERIC
    if isinstance(error, DataError):
        return EXIT_DATA
    return EXIT_USAGE


def run_command(description, func, *args, **kwargs):
    """Run a command body, log any failure and exit with the matching code."""
    try:
        func(*args, **kwargs)
    except Exception as e:
        _logger.exception('{} failed:\n{}'.format(description, e))
        sys.exit(exit_code_for(e))
    else:
        sys.exit(EXIT_OK)


config_option = click.option(
    '--config', '-c', 'config_file', help='Path to a YAML run configuration. Every '
    'key that is left out takes its default value.', type=str, default=None)
seed_option = click.option(
    '--seed', '-s', help='Seed that overrides the seed of the configuration. It seeds '
    'training, data splitting, augmentation and synthetic data.', type=int, default=None)
out_option = click.option(
    '--out', '-o', 'out_dir', help='Folder where checkpoints and reports are written.',
    type=click.Path(file_okay=False, resolve_path=True), default='run', show_default=True)


def load_config(config_file=None, seed=None):
    """Get the RunConfig of a command from an optional file and seed override."""
    if config_file is not None:
        run_cfg = load_run_config(config_file)
    else:
        run_cfg = RunConfig()
    return run_cfg.with_seed(run_cfg.seed if seed is None else seed)


def prepare_out(out_dir, run_cfg):
    """Create the output folder and write the resolved configuration into it."""
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)
    with open(os.path.join(out_dir, 'config.yaml'), 'w') as fp:
        fp.write(run_cfg.to_yaml())
    return out_dir


def load_training_data(run_cfg):
    """Get (train, validation, unlabeled) for a run.

    The labeled set comes from the data section when it names a label file and
    from the synthetic generator otherwise. A data.hide_fraction share of the
    training labels is hidden and added to the unlabeled images.
    """
    data_cfg = run_cfg.data
    if data_cfg.labels_csv:
        loaded = load_dataset(DatasetManifest.from_config(data_cfg))
        train, validation, unlabeled = loaded.train, loaded.validation, loaded.unlabeled
        if validation is None:
            raise ConfigError('data.train_fraction must be below 1 to hold out a '
                              'validation set.')
    else:
        _logger.info('No label file configured; generating %d synthetic images.',
                     run_cfg.synthetic.count)
        train, validation = synthetic_split(run_cfg, run_cfg.seed)
        unlabeled = None
    if data_cfg.hide_fraction > 0:
        train, hidden = hide_labels(train, data_cfg.hide_fraction, data_cfg.split_seed)
        if unlabeled is not None:
            hidden = UnlabeledSet(unlabeled.images + hidden.images,
                                  unlabeled.ids + hidden.ids)
        unlabeled = hidden
    return train, validation, unlabeled
