# coding=utf-8
"""leaf-pathology dataset commands."""
import os
import logging

import click

from ..augment import apply_train_pipeline, denormalize, image_rng, resize
from ..dataset import make_synthetic, write_dataset, hide_labels
from ..errors import ConfigError
from ..image import Image
from .util import Command, config_option, seed_option, out_option, load_config, \
    run_command

_logger = logging.getLogger(__name__)


@click.command('make-synthetic', cls=Command)
@click.option('--count', '-n', help='Number of images to generate.', type=int,
              default=None)
@click.option('--size', help='Height and width of every image in pixels.', type=int,
              default=None)
@click.option('--noise', help='Standard deviation of the Gaussian pixel noise.',
              type=float, default=None)
@click.option('--image-format', '-f', help='File format of the written images.',
              type=click.Choice(('png', 'ppm')), default='png', show_default=True)
@click.option('--unlabeled-fraction', '-u', help='Share of every class whose labels '
              'are dropped. Those images are written to an unlabeled folder instead.',
              type=click.FloatRange(0, 1, max_open=True), default=0.0,
              show_default=True)
@config_option
@seed_option
@out_option
def make_synthetic_cli(count, size, noise, image_format, unlabeled_fraction,
                       config_file, seed, out_dir):
    """Write a synthetic leaf dataset as labels.csv, images/ and unlabeled/.

    Values left out are taken from the synthetic section of the configuration.
    """
    run_command('Synthetic data generation', write_synthetic, out_dir, count, size,
                noise, image_format, unlabeled_fraction, config_file, seed)


def write_synthetic(out_dir, count=None, size=None, noise=None, image_format='png',
                    unlabeled_fraction=0.0, config_file=None, seed=None):
    """Generate and write a synthetic dataset.

    Returns:
        Path to the written labels.csv.
    """
    run_cfg = load_config(config_file, seed)
    syn = run_cfg.synthetic
    labeled = make_synthetic(syn.count if count is None else count,
                             syn.size if size is None else size,
                             syn.noise if noise is None else noise, run_cfg.seed)
    labeled, hidden = hide_labels(labeled, unlabeled_fraction, run_cfg.seed)
    csv_path = write_dataset(labeled, out_dir, image_format)
    for image_id, img in zip(hidden.ids, hidden.images):
        img.to_file(os.path.join(out_dir, 'unlabeled', '{}.{}'.format(
            image_id, image_format)))
    _logger.info('Wrote %d labeled and %d unlabeled images to %s.', len(labeled),
                 len(hidden), out_dir)
    return csv_path


@click.command('augment-preview', cls=Command)
@click.argument('image-file', type=click.Path(exists=True, dir_okay=False,
                                              resolve_path=True))
@click.option('--count', '-n', help='Number of augmented versions to write.',
              type=int, default=8, show_default=True)
@config_option
@seed_option
@out_option
def augment_preview_cli(image_file, count, config_file, seed, out_dir):
    """Write augmented versions of one image to inspect the training pipeline.

    \b
    Args:
        image_file: Path to a PNG or PPM image.
    """
    run_command('Augmentation preview', augment_preview, image_file, count,
                config_file, seed, out_dir)


def augment_preview(image_file, count=8, config_file=None, seed=None, out_dir='run'):
    """Augment an image count times and write the results as PNG files.

    Every version uses the generator of (seed, version, 0), so a preview matches
    what the first image of a training set sees in the same epoch. The image
    resized to the target size without augmentation is written as {name}_before.

    Returns:
        A list of the written file paths, the unaugmented image first.
    """
    if count < 1:
        raise ConfigError('--count must be at least 1. Got {}.'.format(count))
    run_cfg = load_config(config_file, seed)
    cfg = run_cfg.augment
    img = Image.from_file(image_file)
    name = os.path.splitext(os.path.basename(image_file))[0]
    written = [resize(img, cfg.target_size).to_file(
        os.path.join(out_dir, '{}_before.png'.format(name)))]
    for version in range(count):
        out = apply_train_pipeline(img, cfg, image_rng(run_cfg.seed, version, 0))
        out = denormalize(out, cfg.channel_mean, cfg.channel_std)
        written.append(out.to_file(os.path.join(
            out_dir, '{}_aug_{}.png'.format(name, version))))
    _logger.info('Wrote %d augmented versions of %s to %s.', count, image_file, out_dir)
    return written
