# coding=utf-8
"""leaf-pathology training, evaluation and prediction commands."""
import os
import logging

import click
import numpy as np

from ..blocks import build_model
from ..checkpoint import checkpoint_from_model, model_from_checkpoint, \
    save_checkpoint, load_checkpoint
from ..dataset import load_unlabeled
from ..ensemble import Ensemble, ensemble_predict, evaluate_ensemble
from ..errors import ConfigError, DataError
from ..experiments import EXPERIMENTS, DEFAULT_SEEDS, SWEEP_LEARNING_RATES, \
    SWEEP_OPTIMIZERS, base_model_spec, run_experiment, sweep
from ..metrics import MetricsReport
from ..optim import OptimizerState, evaluate_model, predict_images, train_supervised
from ..report import write_metrics_report, write_predictions_csv, write_report, \
    write_selftrain_report, read_predictions_csv, run_header, table_text
from ..selftrain import noisy_student_loop
from .util import Command, config_option, seed_option, out_option, load_config, \
    prepare_out, load_training_data, run_command

_logger = logging.getLogger(__name__)

checkpoint_option = click.option(
    '--checkpoint', '-k', 'checkpoint_file', help='Path to a model checkpoint.',
    type=str, required=True)
workers_option = click.option(
    '--workers', '-w', help='Number of threads used to augment training batches.',
    type=int, default=None)


@click.command('train', cls=Command)
@config_option
@seed_option
@out_option
@workers_option
def train_cli(config_file, seed, out_dir, workers):
    """Train one model on labeled data and save its checkpoint and metrics."""
    run_command('Training', train, config_file, seed, out_dir, workers)


def train(config_file=None, seed=None, out_dir='run', workers=None):
    """Train one model and write model.lpck, metrics.json and metrics.txt.

    Args:
        config_file: Optional path to a YAML run configuration.
        seed: Optional seed overriding the configuration seed.
        out_dir: Output folder.
        workers: Optional number of augmentation threads.

    Returns:
        The MetricsReport of the trained model on the validation set.
    """
    run_cfg = load_config(config_file, seed)
    prepare_out(out_dir, run_cfg)
    train_set, validation, _ = load_training_data(run_cfg)
    spec = base_model_spec(run_cfg)
    model = build_model(spec, np.random.default_rng([run_cfg.seed, 0]))
    state = OptimizerState.for_params(run_cfg.train.optimizer, model.parameters())
    rng = np.random.default_rng([run_cfg.seed, 1])
    model, report = train_supervised(model, train_set, run_cfg.train,
                                     run_cfg.augment_for(spec), rng=rng,
                                     validation=validation, state=state, workers=workers)
    save_checkpoint(os.path.join(out_dir, 'model.lpck'), checkpoint_from_model(
        model, state, run_cfg.train, rng, {'seed': run_cfg.seed}))
    write_metrics_report(out_dir, report, run_cfg)
    return report


@click.command('selftrain', cls=Command)
@config_option
@seed_option
@out_option
def selftrain_cli(config_file, seed, out_dir):
    """Run Noisy Student self-training and save every iteration's model."""
    run_command('Self-training', selftrain, config_file, seed, out_dir)


def selftrain(config_file=None, seed=None, out_dir='run'):
    """Run teacher-student self-training.

    Writes iteration_<k>.lpck for every trained model, model.lpck for the final
    student and selftrain.json / selftrain.txt with the per-iteration table.

    Returns:
        The list of IterationReports.
    """
    run_cfg = load_config(config_file, seed)
    prepare_out(out_dir, run_cfg)
    train_set, validation, unlabeled = load_training_data(run_cfg)
    if run_cfg.selftrain.iterations and (unlabeled is None or len(unlabeled) == 0):
        _logger.warning('No unlabeled images: set data.unlabeled_dir or '
                        'data.hide_fraction to give students pseudo-labeled data.')
    final, reports = noisy_student_loop(
        train_set, unlabeled, base_model_spec(run_cfg), run_cfg.selftrain,
        rng=run_cfg.seed, train_cfg=run_cfg.selftrain_train(), augment_cfg=run_cfg.augment,
        validation=validation, scaling_cfg=run_cfg.scaling)
    for rep in reports:
        save_checkpoint(
            os.path.join(out_dir, 'iteration_{}.lpck'.format(rep.iteration)),
            checkpoint_from_model(rep.model, train_config=run_cfg.selftrain_train(),
                                  metadata={'seed': run_cfg.seed,
                                            'iteration': rep.iteration}))
    save_checkpoint(os.path.join(out_dir, 'model.lpck'), checkpoint_from_model(
        final, train_config=run_cfg.selftrain_train(), metadata={'seed': run_cfg.seed}))
    write_selftrain_report(out_dir, reports, run_cfg)
    return reports


@click.command('evaluate', cls=Command)
@checkpoint_option
@click.option('--predictions', '-p', 'predictions_file', help='Optional predictions CSV '
              'to score instead of running the checkpoint. Its ids must match the '
              'validation images.', type=str, default=None)
@config_option
@seed_option
@out_option
def evaluate_cli(checkpoint_file, predictions_file, config_file, seed, out_dir):
    """Score a checkpoint on the validation split of the configured dataset."""
    run_command('Evaluation', evaluate, checkpoint_file, config_file, seed, out_dir,
                predictions_file)


def evaluate(checkpoint_file, config_file=None, seed=None, out_dir='run',
             predictions_file=None):
    """Write metrics.json and metrics.txt for a checkpoint on the validation split.

    Returns:
        The MetricsReport.
    """
    run_cfg = load_config(config_file, seed)
    prepare_out(out_dir, run_cfg)
    ckpt = load_checkpoint(checkpoint_file)
    _, validation, _ = load_training_data(run_cfg)
    if predictions_file:
        ids, preds = read_predictions_csv(predictions_file)
        by_id = dict(zip(ids, preds))
        missing = [i for i in validation.ids if i not in by_id]
        if missing:
            raise DataError('{} has no predictions for {} validation images, for '
                            'example {}.'.format(predictions_file, len(missing), missing[0]))
        report = MetricsReport.from_predictions(
            np.array([by_id[i] for i in validation.ids]), validation.labels)
    else:
        model = model_from_checkpoint(ckpt)
        report = evaluate_model(model, validation, run_cfg.augment_for(model.spec))
    write_metrics_report(out_dir, report, run_cfg,
                         extra={'checkpoint': os.path.abspath(checkpoint_file)})
    return report


@click.command('predict', cls=Command)
@checkpoint_option
@click.option('--images-dir', '-i', help='Folder of images to predict. Defaults to '
              'data.unlabeled_dir of the configuration.', type=str, default=None)
@config_option
@seed_option
@out_option
def predict_cli(checkpoint_file, images_dir, config_file, seed, out_dir):
    """Write class probabilities of a folder of images to predictions.csv."""
    run_command('Prediction', predict, checkpoint_file, images_dir, config_file, seed,
                out_dir)


def predict(checkpoint_file, images_dir=None, config_file=None, seed=None, out_dir='run'):
    """Predict every image of a folder with a checkpoint.

    Returns:
        Path to the written predictions.csv.
    """
    run_cfg = load_config(config_file, seed)
    prepare_out(out_dir, run_cfg)
    images_dir = images_dir or run_cfg.data.unlabeled_dir
    if not images_dir:
        raise ConfigError('No images to predict: pass --images-dir or set '
                          'data.unlabeled_dir.')
    model = model_from_checkpoint(load_checkpoint(checkpoint_file))
    images = load_unlabeled(images_dir)
    preds = predict_images(model, list(images.images), run_cfg.augment_for(model.spec))
    return write_predictions_csv(os.path.join(out_dir, 'predictions.csv'), images.ids,
                                 preds)


@click.command('ensemble', cls=Command)
@click.argument('checkpoint-files', nargs=-1, required=True)
@click.option('--images-dir', '-i', help='Optional folder of images whose averaged '
              'probabilities are written to predictions.csv.', type=str, default=None)
@config_option
@seed_option
@out_option
def ensemble_cli(checkpoint_files, images_dir, config_file, seed, out_dir):
    """Average the probabilities of several checkpoints and score the ensemble.

    \b
    Args:
        checkpoint_files: Paths to two or more model checkpoints.
    """
    run_command('Ensembling', ensemble, checkpoint_files, images_dir, config_file, seed,
                out_dir)


def ensemble(checkpoint_files, images_dir=None, config_file=None, seed=None,
             out_dir='run'):
    """Score a uniform ensemble on the validation split.

    Writes ensemble.json / ensemble.txt and, when images_dir is given,
    predictions.csv.

    Returns:
        The MetricsReport of the ensemble.
    """
    run_cfg = load_config(config_file, seed)
    prepare_out(out_dir, run_cfg)
    members = [model_from_checkpoint(load_checkpoint(f)) for f in checkpoint_files]
    ens = Ensemble(members)
    _, validation, _ = load_training_data(run_cfg)
    report = evaluate_ensemble(ens, validation, run_cfg.augment)
    write_metrics_report(out_dir, report, run_cfg, name='ensemble', extra={
        'checkpoints': [os.path.abspath(f) for f in checkpoint_files]})
    if images_dir:
        images = load_unlabeled(images_dir)
        write_predictions_csv(os.path.join(out_dir, 'predictions.csv'), images.ids,
                              ensemble_predict(ens, images.images, run_cfg.augment))
    return report


@click.command('sweep', cls=Command)
@click.option('--optimizer', '-op', 'optimizers', multiple=True,
              type=click.Choice(SWEEP_OPTIMIZERS), help='Optimizer to compare. Repeat '
              'the option for several. (Default: adam and sgd).')
@click.option('--lr', 'learning_rates', multiple=True, type=float,
              help='Initial learning rate to compare. Repeat the option for several. '
              '(Default: 1e-1, 1e-2, 1e-3 and 1e-4).')
@config_option
@seed_option
@out_option
def sweep_cli(optimizers, learning_rates, config_file, seed, out_dir):
    """Compare optimizers and learning rates by validation AUC and convergence."""
    run_command('Sweep', run_sweep, config_file, seed, out_dir,
                optimizers or SWEEP_OPTIMIZERS, learning_rates or SWEEP_LEARNING_RATES)


def run_sweep(config_file=None, seed=None, out_dir='run', optimizers=SWEEP_OPTIMIZERS,
              learning_rates=SWEEP_LEARNING_RATES):
    """Train one model per optimizer and learning rate; write sweep.json / sweep.txt."""
    run_cfg = load_config(config_file, seed)
    prepare_out(out_dir, run_cfg)
    train_set, validation, _ = load_training_data(run_cfg)
    rows = sweep(train_set, base_model_spec(run_cfg), run_cfg, optimizers,
                 learning_rates, validation)
    columns = ['optimizer', 'lr', 'best_val_auc', 'final_train_loss',
               'epochs_to_threshold']
    write_report(out_dir, 'sweep', {'type': 'SweepReport', 'seed': run_cfg.seed,
                                    'config': run_cfg.model_dump(mode='json'),
                                    'rows': rows},
                 run_header(run_cfg, run_cfg.seed) + table_text(rows, columns))
    return rows


@click.command('experiment', cls=Command)
@click.argument('name', type=click.Choice(sorted(EXPERIMENTS)))
@click.option('--seeds', help='Comma-separated seeds to run.',
              default=','.join(str(s) for s in DEFAULT_SEEDS), show_default=True)
@config_option
@out_option
def experiment_cli(name, seeds, config_file, out_dir):
    """Run a multi-seed experiment on synthetic data and write its table.

    \b
    Args:
        name: Name of the experiment.
    """
    run_command('Experiment', experiment, name, seeds, config_file, out_dir)


def experiment(name, seeds='0,1,2,3,4', config_file=None, out_dir='run'):
    """Run an experiment and write <name>.json and <name>.txt.

    Returns:
        The ExperimentResult.
    """
    try:
        seed_list = [int(s) for s in str(seeds).split(',') if s.strip()]
    except ValueError:
        raise ConfigError('--seeds must be comma-separated integers. Got "{}".'.format(
            seeds))
    if not seed_list:
        raise ConfigError('--seeds needs at least one seed.')
    run_cfg = load_config(config_file, None)
    prepare_out(out_dir, run_cfg)
    result = run_experiment(name, run_cfg, seed_list)
    columns = list(result.rows[0]) if result.rows else []
    text = '{}\n{}\nclaim holds: {}\n'.format(
        table_text(result.rows, columns), result.summary, result.passed)
    write_report(out_dir, name, {'type': 'ExperimentReport', 'name': name,
                                 'seeds': seed_list, 'passed': result.passed,
                                 'summary': result.summary, 'rows': result.rows,
                                 'config': run_cfg.model_dump(mode='json')}, text)
    return result
