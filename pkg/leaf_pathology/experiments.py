# coding=utf-8
"""Multi-seed experiments on the synthetic leaf dataset.

Each experiment trains small models on freshly generated synthetic data for
every seed and returns an ExperimentResult whose rows can be written as a
report table. The checks are the relative outcomes expected at full scale:
scaled models learn the task, a noised student beats a labeled-only
teacher, Adam converges faster than SGD and an ensemble is at least as good as
its members.
"""
import math
import logging
from collections import namedtuple

import numpy as np

from .blocks import build_model
from .config import RunConfig
from .dataset import make_synthetic, stratified_split, hide_labels
from .ensemble import Ensemble, evaluate_ensemble
from .errors import ConfigError
from .optim import train_supervised
from .scaling import apply_scaling, scale_model_spec
from .selftrain import noisy_student_loop

_logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
SWEEP_OPTIMIZERS = ('adam', 'sgd')
SWEEP_LEARNING_RATES = (1e-1, 1e-2, 1e-3, 1e-4)

ExperimentResult = namedtuple('ExperimentResult', ('name', 'rows', 'passed', 'summary'))
ExperimentResult.__doc__ = 'Per-seed rows of an experiment and whether its claim holds.'


def epochs_to_threshold(history, loss):
    """Get the first epoch whose train loss is <= loss, or None if none is.

    Args:
        history: List of (epoch, train_loss, val_mean_auc) rows.
        loss: Train loss threshold.
    """
    for epoch, train_loss, _ in history:
        if train_loss <= loss:
            return epoch
    return None


def tail_std(history, epochs=10):
    """Get the population standard deviation of the validation AUC over the last epochs."""
    tail = [auc for _, _, auc in history[-epochs:]]
    return float(np.std(tail)) if tail else 0.0


def base_model_spec(run_cfg):
    """Get the model spec of a run: the configured base scaled by the scaling section."""
    return scale_model_spec(run_cfg.model.to_spec(),
                            apply_scaling(run_cfg.scaling.coefficients()))


def synthetic_split(run_cfg, seed):
    """Generate the synthetic dataset of a seed and split it into (train, validation)."""
    syn = run_cfg.synthetic
    data = make_synthetic(syn.count, syn.size, syn.noise, seed)
    train_idx, val_idx = stratified_split(data.class_indices, run_cfg.data.train_fraction,
                                          seed)
    return data.subset(train_idx), data.subset(val_idx)


def _train(spec, train, validation, run_cfg, seed, **overrides):
    train_cfg = run_cfg.train.model_copy(update=dict(seed=seed, **overrides))
    model = build_model(spec, np.random.default_rng([seed, 0]))
    return train_supervised(model, train, train_cfg,
                            run_cfg.augment_for(spec), validation=validation)


def sweep(labeled, base_spec, run_cfg, optimizers=SWEEP_OPTIMIZERS,
          learning_rates=SWEEP_LEARNING_RATES, validation=None, loss_threshold=0.5):
    """Train one model per (optimizer, learning rate) pair.

    Args:
        labeled: LabeledSet to train on.
        base_spec: ModelSpec of every model.
        run_cfg: RunConfig supplying the remaining training settings.
        optimizers: Optimizer names to compare.
        learning_rates: Initial learning rates to compare.
        validation: Optional validation LabeledSet.
        loss_threshold: Train loss used to measure convergence speed.

    Returns:
        A list of row dictionaries with optimizer, lr, best_val_auc,
        final_train_loss and epochs_to_threshold.
    """
    rows = []
    for opt in optimizers:
        for lr in learning_rates:
            _, report = _train(base_spec, labeled, validation, run_cfg, run_cfg.seed,
                               optimizer=opt, lr0=lr)
            history = report.loss_history
            rows.append({
                'optimizer': opt, 'lr': lr,
                'best_val_auc': max(a for _, _, a in history),
                'final_train_loss': history[-1][1],
                'epochs_to_threshold': epochs_to_threshold(history, loss_threshold)
            })
            _logger.info('sweep %s lr %g: best val mean AUC %.6f', opt, lr,
                         rows[-1]['best_val_auc'])
    return rows


def supervised_learnability(run_cfg=None, seeds=DEFAULT_SEEDS, target_auc=0.95):
    """Check that a small scaled model reaches target_auc in most seeds."""
    run_cfg = run_cfg or RunConfig()
    spec = base_model_spec(run_cfg)
    rows = []
    for seed in seeds:
        train, validation = synthetic_split(run_cfg, seed)
        _, report = _train(spec, train, validation, run_cfg, seed)
        rows.append({'seed': seed, 'val_mean_auc': report.mean_auc,
                     'passed': report.mean_auc >= target_auc})
    wins = sum(r['passed'] for r in rows)
    return ExperimentResult('learnability', rows, wins >= len(rows) - 1,
                            '{} of {} seeds reach mean AUC {}'.format(
                                wins, len(rows), target_auc))


def noisy_student(run_cfg=None, seeds=DEFAULT_SEEDS, hidden_fraction=0.8,
                  min_improvement=0.005, tail_epochs=10):
    """Compare one noised student iteration with the labeled-only teacher.

    A share hidden_fraction of the training labels is hidden and used as the
    unlabeled pool. Rows also carry the validation AUC spread over the last
    tail_epochs of both models. The claim holds when the student is at least as
    good in all seeds but one, gains min_improvement on average and is no less
    steady in all seeds but two.
    """
    run_cfg = run_cfg or RunConfig()
    spec = base_model_spec(run_cfg)
    st_cfg = run_cfg.selftrain.model_copy(update={'iterations': 1})
    rows = []
    for seed in seeds:
        train, validation = synthetic_split(run_cfg, seed)
        kept, hidden = hide_labels(train, hidden_fraction, seed)
        _, reports = noisy_student_loop(
            kept, hidden, spec, st_cfg, rng=seed, train_cfg=run_cfg.selftrain_train(),
            augment_cfg=run_cfg.augment, validation=validation,
            scaling_cfg=run_cfg.scaling)
        base, student = reports[0].metrics, reports[-1].metrics
        base_std = tail_std(base.loss_history, tail_epochs)
        student_std = tail_std(student.loss_history, tail_epochs)
        rows.append({
            'seed': seed,
            'baseline_auc': base.mean_auc,
            'student_auc': student.mean_auc,
            'improvement': student.mean_auc - base.mean_auc,
            'baseline_tail_std': base_std,
            'student_tail_std': student_std,
            'steadier': student_std <= base_std
        })
    wins = sum(r['improvement'] >= 0 for r in rows)
    mean_gain = math.fsum(r['improvement'] for r in rows) / len(rows)
    steadier = sum(r['steadier'] for r in rows)
    passed = wins >= len(rows) - 1 and mean_gain >= min_improvement and \
        steadier >= max(1, len(rows) - 2)
    return ExperimentResult('noisy-student', rows, passed,
                            'student >= baseline in {} of {} seeds, mean gain {:.4f}, '
                            'steadier in {} seeds'.format(wins, len(rows), mean_gain,
                                                          steadier))


def optimizer_convergence(run_cfg=None, seeds=DEFAULT_SEEDS, loss_threshold=0.5):
    """Compare the epochs Adam and SGD need to reach a train loss threshold."""
    run_cfg = run_cfg or RunConfig()
    spec = base_model_spec(run_cfg)
    rows = []
    for seed in seeds:
        train, validation = synthetic_split(run_cfg, seed)
        row = {'seed': seed}
        for opt in SWEEP_OPTIMIZERS:
            _, report = _train(spec, train, validation, run_cfg, seed, optimizer=opt)
            row[opt + '_epochs'] = epochs_to_threshold(report.loss_history, loss_threshold)
        adam, sgd = row['adam_epochs'], row['sgd_epochs']
        row['adam_faster'] = adam is not None and (sgd is None or adam < sgd)
        rows.append(row)
    wins = sum(r['adam_faster'] for r in rows)
    return ExperimentResult('convergence', rows, wins >= len(rows) - 1,
                            'Adam faster in {} of {} seeds'.format(wins, len(rows)))


def ensemble_members(run_cfg=None, seeds=DEFAULT_SEEDS, members=3, tolerance=0.005):
    """Compare a uniform ensemble of independently seeded models with its members."""
    run_cfg = run_cfg or RunConfig()
    spec = base_model_spec(run_cfg)
    rows = []
    for seed in seeds:
        train, validation = synthetic_split(run_cfg, seed)
        models, aucs = [], []
        for k in range(members):
            model, report = _train(spec, train, validation, run_cfg,
                                   seed * 1000 + k + 1)
            models.append(model)
            aucs.append(report.mean_auc)
        ens_auc = evaluate_ensemble(Ensemble(models), validation,
                                    run_cfg.augment_for(spec)).mean_auc
        mean_member = math.fsum(aucs) / len(aucs)
        rows.append({'seed': seed, 'ensemble_auc': ens_auc, 'mean_member_auc': mean_member,
                     'passed': ens_auc >= mean_member - tolerance})
    wins = sum(r['passed'] for r in rows)
    return ExperimentResult('ensemble', rows, wins == len(rows),
                            'ensemble within tolerance in {} of {} seeds'.format(
                                wins, len(rows)))


EXPERIMENTS = {
    'learnability': supervised_learnability,
    'noisy-student': noisy_student,
    'convergence': optimizer_convergence,
    'ensemble': ensemble_members
}


def run_experiment(name, run_cfg=None, seeds=DEFAULT_SEEDS):
    """Run an experiment of EXPERIMENTS by name."""
    try:
        func = EXPERIMENTS[name]
    except KeyError:
        raise ConfigError('Unknown experiment "{}". Choose from {}.'.format(
            name, sorted(EXPERIMENTS)))
    _logger.info('Running experiment %s over seeds %s.', name, list(seeds))
    return func(run_cfg, seeds)
