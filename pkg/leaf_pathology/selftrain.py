# coding=utf-8
"""Noisy Student self-training.

A teacher trained on the labeled images assigns pseudo-labels to unlabeled
images. A larger student, noised with dropout, stochastic depth and training
augmentation, is trained from scratch on the real and pseudo-labeled images
together and becomes the teacher of the next iteration.
"""
import logging

import numpy as np

from .architecture import ModelSpec
from .blocks import build_model, count_parameters
from .config import SelfTrainConfig, TrainConfig, ScalingConfig
from .dataset import LabeledSet, PseudoLabeledSet, UnlabeledSet
from .errors import EmptyUnlabeledSet, ColumnOrderMismatch, InvalidSpec, ConfigError
from .optim import predict_images, train_supervised, default_augment_config, \
    split_validation
from .scaling import ScaledDims, apply_scaling, scale_model_spec

_logger = logging.getLogger(__name__)

LABEL_MODES = ('soft', 'hard')


class IterationReport(object):
    """What one teacher or student of the loop achieved.

    Args:
        iteration: 0 for the teacher trained on labeled data only, k for the
            student of the k-th iteration.
        model: The trained Model.
        metrics: Its MetricsReport on the validation set.
        origin_counts: Dictionary of real and pseudo example counts it was
            trained on.
        pseudo_count: Number of pseudo-labeled examples before filtering, or
            None for iteration 0.

    Properties:
        * iteration
        * model
        * metrics
        * origin_counts
        * pseudo_count
        * mean_auc
    """
    __slots__ = ('_iteration', '_model', '_metrics', '_origin_counts', '_pseudo_count')

    def __init__(self, iteration, model, metrics, origin_counts, pseudo_count=None):
        self._iteration = iteration
        self._model = model
        self._metrics = metrics
        self._origin_counts = dict(origin_counts)
        self._pseudo_count = pseudo_count

    @property
    def iteration(self):
        return self._iteration

    @property
    def model(self):
        return self._model

    @property
    def metrics(self):
        return self._metrics

    @property
    def origin_counts(self):
        return dict(self._origin_counts)

    @property
    def pseudo_count(self):
        return self._pseudo_count

    @property
    def mean_auc(self):
        return self._metrics.mean_auc

    def to_dict(self):
        return {
            'type': 'IterationReport',
            'iteration': self._iteration,
            'model_spec': self._model.spec.to_dict(),
            'parameter_count': self._model.parameter_count,
            'origin_counts': self.origin_counts,
            'pseudo_count': self._pseudo_count,
            'metrics': self._metrics.to_dict()
        }

    def __repr__(self):
        return 'IterationReport: [iteration {}, mean AUC {:.4f}]'.format(
            self._iteration, self.mean_auc)


def pseudo_label(teacher, unlabeled, mode='soft', augment_cfg=None):
    """Label unlabeled images with the Eval-mode predictions of a teacher.

    Args:
        teacher: A trained Model. It is not modified.
        unlabeled: An UnlabeledSet.
        mode: soft to keep the predicted distributions, hard to keep one-hot
            rows of their argmax (ties to the lowest column). (Default: soft).
        augment_cfg: AugmentConfig of the evaluation pipeline. (Default: the
            default pipeline at the teacher resolution).

    Returns:
        A PseudoLabeledSet whose confidences are the teacher's maximum
        probabilities.
    """
    if mode not in LABEL_MODES:
        raise ConfigError('Label mode must be one of {}. Got "{}".'.format(
            LABEL_MODES, mode))
    if unlabeled is None or len(unlabeled) == 0:
        raise EmptyUnlabeledSet('Pseudo-labeling needs at least one unlabeled image.')
    augment_cfg = augment_cfg or default_augment_config(teacher.spec)
    probs = predict_images(teacher, list(unlabeled.images), augment_cfg)
    confidences = probs.max(axis=1)
    if mode == 'hard':
        labels = np.eye(probs.shape[1])[probs.argmax(axis=1)]
    else:
        labels = probs
    return PseudoLabeledSet(unlabeled.images, labels, unlabeled.ids,
                            confidences=confidences)


def filter_pseudo(ps, threshold):
    """Keep the pseudo-labeled rows whose confidence is at least threshold, in order."""
    if not 0 <= threshold < 1:
        raise ConfigError('Confidence threshold must be in [0, 1). Got {}.'.format(
            threshold))
    if threshold == 0:
        return ps
    return ps.subset(np.nonzero(ps.confidences >= threshold)[0])


def combine(labeled, pseudo):
    """Concatenate real and pseudo-labeled examples, tagging every row's origin."""
    if pseudo is None or len(pseudo) == 0:
        return labeled
    if tuple(labeled.columns) != tuple(pseudo.columns):
        raise ColumnOrderMismatch('Label columns {} and pseudo-label columns {} '
                                  'differ.'.format(labeled.columns, pseudo.columns))
    return LabeledSet(
        labeled.images + pseudo.images,
        np.concatenate([labeled.labels, pseudo.soft_labels]),
        labeled.ids + pseudo.ids,
        labeled.origins + ('pseudo',) * len(pseudo),
        labeled.columns)


def grow_student(teacher_spec, growth):
    """Get the spec of a student scaled up from its teacher's spec.

    Channel counts never fall below the teacher's, so a student has at least as
    many parameters. Growth of (1, 1, 1) returns the teacher spec itself.

    Args:
        teacher_spec: The ModelSpec of the teacher.
        growth: ScaledDims with every multiplier >= 1.
    """
    if not isinstance(teacher_spec, ModelSpec):
        raise InvalidSpec('Expected ModelSpec. Got {}.'.format(type(teacher_spec)))
    growth = ScaledDims(*growth)
    if min(growth) < 1:
        raise InvalidSpec('Student growth must be >= 1 in every dimension. Got {}.'
                          .format(tuple(growth)))
    if tuple(growth) == (1, 1, 1):
        return teacher_spec
    student = scale_model_spec(teacher_spec, growth, grow=True)
    if count_parameters(student) < count_parameters(teacher_spec):
        raise InvalidSpec('Student {} is smaller than its teacher {}.'.format(
            student, teacher_spec))
    return student


def growth_for(cfg, iteration, scaling_cfg=None):
    """Get the ScaledDims that grows the student of a 1-based iteration."""
    if cfg.phi_step is not None:
        scaling_cfg = scaling_cfg or ScalingConfig()
        return apply_scaling(scaling_cfg.coefficients(phi=cfg.phi_step))
    rules = cfg.growth
    if not rules:
        return ScaledDims(1.0, 1.0, 1.0)
    return rules[min(iteration - 1, len(rules) - 1)].dims()


def noisy_student_loop(labeled, unlabeled, base_spec, cfg=None, rng=None,
                       train_cfg=None, augment_cfg=None, validation=None,
                       scaling_cfg=None):
    """Run iterative teacher-student training.

    Iteration 0 trains a teacher on the labeled images with dropout and
    stochastic depth disabled. Every later iteration pseudo-labels the unlabeled
    images with the current model in Eval mode, filters them by confidence,
    grows the architecture, trains a freshly initialized noised student on the
    union and promotes it to teacher.

    Args:
        labeled: A LabeledSet.
        unlabeled: An UnlabeledSet (may be empty or None).
        base_spec: ModelSpec of the first teacher.
        cfg: A SelfTrainConfig. (Default: SelfTrainConfig()).
        rng: Optional integer seed that replaces train_cfg.seed.
        train_cfg: TrainConfig shared by every training phase.
        augment_cfg: AugmentConfig whose target size is replaced by each
            model's resolution. (Default: AugmentConfig()).
        validation: Optional LabeledSet used to score every iteration. If None,
            a stratified share of train_cfg.val_fraction is held out once.
        scaling_cfg: ScalingConfig used when cfg.phi_step is set.

    Returns:
        A tuple of (final model, list of iterations + 1 IterationReports).
    """
    cfg = cfg or SelfTrainConfig()
    train_cfg = train_cfg or TrainConfig()
    if rng is not None:
        train_cfg = train_cfg.model_copy(update={'seed': int(rng)})
    seed = train_cfg.seed
    base_aug = augment_cfg
    unlabeled = unlabeled if unlabeled is not None else UnlabeledSet([], [])

    def _aug(spec):
        if base_aug is None:
            return default_augment_config(spec)
        return base_aug.model_copy(update={'target_size': spec.input_resolution})

    if validation is None:
        train_set, validation = split_validation(labeled, train_cfg)
    else:
        train_set = labeled

    teacher_spec = base_spec.with_noise(dropout_prob=0.0, survival_prob=1.0)
    teacher = build_model(teacher_spec, np.random.default_rng([seed, 0]))
    teacher, metrics = train_supervised(
        teacher, train_set, train_cfg, _aug(teacher_spec), validation=validation,
        rng=np.random.default_rng([seed, 1, 0]))
    reports = [IterationReport(0, teacher, metrics, train_set.origin_counts())]
    _logger.info('iteration 0 (teacher, %d parameters): val mean AUC %.6f',
                 teacher.parameter_count, metrics.mean_auc)

    grown = base_spec
    for it in range(1, cfg.iterations + 1):
        pseudo, pseudo_count = None, 0
        if len(unlabeled):
            pseudo = pseudo_label(teacher, unlabeled, cfg.label_mode, _aug(teacher.spec))
            pseudo_count = len(pseudo)
            pseudo = filter_pseudo(pseudo, cfg.confidence_threshold)
        if pseudo is None or len(pseudo) == 0:
            _logger.warning('Iteration %d has no pseudo-labeled examples; the student '
                            'trains on labeled data only.', it)
        combined = combine(train_set, pseudo)

        grown = grow_student(grown, growth_for(cfg, it, scaling_cfg))
        student_spec = grown.with_noise(cfg.noise.dropout_prob, cfg.noise.survival_prob)
        student = build_model(student_spec, np.random.default_rng([seed, 0, it]))
        student, metrics = train_supervised(
            student, combined, train_cfg, _aug(student_spec), validation=validation,
            augment=cfg.noise.augment, rng=np.random.default_rng([seed, 1, it]))
        reports.append(IterationReport(it, student, metrics, combined.origin_counts(),
                                       pseudo_count))
        _logger.info('iteration %d (student, %d parameters, %d real + %d pseudo): '
                     'val mean AUC %.6f', it, student.parameter_count,
                     combined.origin_counts()['real'], combined.origin_counts()['pseudo'],
                     metrics.mean_auc)
        teacher = student
    return teacher, reports
