# coding=utf-8
"""Probability-averaging ensembles of trained models."""
import math
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import EmptyEnsemble, ClassCountMismatch, ConfigError
from .metrics import MetricsReport
from .optim import predict_images, default_augment_config

_logger = logging.getLogger(__name__)


class Ensemble(object):
    """Models whose predicted probabilities are averaged.

    Members may have different architectures and input resolutions but must
    predict the same number of classes.

    Args:
        members: A list of Models.
        weights: Optional list of nonnegative weights summing to 1, one per
            member. (Default: uniform).

    Properties:
        * members
        * weights
        * num_classes
    """
    __slots__ = ('_members', '_weights')

    def __init__(self, members, weights=None):
        members = tuple(members)
        if not members:
            raise EmptyEnsemble('An ensemble needs at least one member.')
        classes = set(m.spec.num_classes for m in members)
        if len(classes) != 1:
            raise ClassCountMismatch('Ensemble members predict different numbers of '
                                     'classes: {}.'.format(sorted(classes)))
        if weights is None:
            weights = [1.0 / len(members)] * len(members)
        weights = tuple(float(w) for w in weights)
        if len(weights) != len(members):
            raise ConfigError('Got {} weights for {} members.'.format(
                len(weights), len(members)))
        if min(weights) < 0 or abs(math.fsum(weights) - 1.0) > 1e-9:
            raise ConfigError('Ensemble weights must be nonnegative and sum to 1. '
                              'Got {}.'.format(weights))
        self._members = members
        self._weights = weights

    @property
    def members(self):
        return self._members

    @property
    def weights(self):
        return self._weights

    @property
    def num_classes(self):
        return self._members[0].spec.num_classes

    def __len__(self):
        return len(self._members)

    def __repr__(self):
        return 'Ensemble: [{} members]'.format(len(self._members))


def ensemble_predict(e, images, augment_cfg=None, workers=None):
    """Get the weighted mean of the member probabilities for a list of images.

    Every member preprocesses the images with the evaluation pipeline at its own
    input resolution. Each output entry is an exactly rounded sum, so the result
    does not depend on member order.

    Args:
        e: An Ensemble.
        images: A list of Images.
        augment_cfg: Optional AugmentConfig whose normalization is shared by all
            members; its target size is replaced by each member's resolution.
        workers: Optional number of threads evaluating members in parallel.

    Returns:
        An N x num_classes numpy array.
    """
    images = list(images)

    def _member_probs(model):
        if augment_cfg is None:
            cfg = default_augment_config(model.spec)
        else:
            cfg = augment_cfg.model_copy(update={'target_size': model.spec.input_resolution})
        return predict_images(model, images, cfg)

    if workers and workers > 1 and len(e) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            member_probs = list(pool.map(_member_probs, e.members))
    else:
        member_probs = [_member_probs(m) for m in e.members]
    weighted = np.stack([w * p for w, p in zip(e.weights, member_probs)])
    if weighted.shape[1] == 0:
        return np.zeros((0, e.num_classes))
    return np.apply_along_axis(math.fsum, 0, weighted)


def evaluate_ensemble(e, labeled, augment_cfg=None):
    """Get the MetricsReport of an ensemble on a LabeledSet."""
    preds = ensemble_predict(e, labeled.images, augment_cfg)
    _logger.info('Ensemble of %d members scored on %d images.', len(e), len(labeled))
    return MetricsReport.from_predictions(preds, labeled.labels, columns=labeled.columns)
