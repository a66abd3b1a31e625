# coding=utf-8
"""SGD and Adam optimizers, learning rate decay and the supervised training loop."""
import math
import logging
from collections import OrderedDict

import numpy as np

from .augment import augment_batch
from .blocks import Mode, forward, predict_proba
from .config import AugmentConfig, TrainConfig
from .dataset import stratified_split
from .errors import ShapeMismatch, EmptyDataset, NonFinite, ConfigError, \
    AllColumnsDegenerate
from .image import images_to_batch
from .metrics import MetricsReport, confusion_matrix, mean_columnwise_auc, \
    softmax_cross_entropy
from .tensor import Tensor, backward

_logger = logging.getLogger(__name__)

OPTIMIZERS = ('sgd', 'adam')
_BUFFERS = {'sgd': ('velocity',), 'adam': ('m', 'v')}
EVAL_BATCH_SIZE = 64


class OptimizerState(object):
    """Per-parameter moment buffers and the step counter of an optimizer.

    Args:
        kind: sgd (one velocity buffer) or adam (first and second moments).
        shapes: Shapes of the parameters, in parameter order.
        step: Number of steps taken so far. (Default: 0).

    Properties:
        * kind
        * buffers
        * step
    """
    __slots__ = ('_kind', '_buffers', 'step')

    def __init__(self, kind, shapes, step=0):
        if kind not in OPTIMIZERS:
            raise ConfigError('Optimizer must be one of {}. Got "{}".'.format(
                OPTIMIZERS, kind))
        assert step >= 0, 'Step counter must be >= 0. Got {}.'.format(step)
        self._kind = kind
        self._buffers = OrderedDict(
            (name, [np.zeros(s) for s in shapes]) for name in _BUFFERS[kind])
        self.step = int(step)

    @classmethod
    def for_params(cls, kind, params):
        """Create an empty state for a list of arrays or Tensors."""
        return cls(kind, [p.shape for p in params])

    @classmethod
    def from_arrays(cls, kind, step, arrays):
        """Rebuild a state from the flat dictionary made by to_arrays."""
        names = _BUFFERS[kind]
        count = sum(1 for k in arrays if k.startswith(names[0] + '.'))
        shapes = [np.shape(arrays['{}.{}'.format(names[0], i)]) for i in range(count)]
        state = cls(kind, shapes, step)
        for name in names:
            state._buffers[name] = [np.array(arrays['{}.{}'.format(name, i)],
                                             dtype=np.float64) for i in range(count)]
        return state

    @property
    def kind(self):
        return self._kind

    @property
    def buffers(self):
        """Get an ordered dictionary from buffer names to lists of arrays."""
        return self._buffers

    def to_arrays(self):
        """Get every buffer as an ordered dictionary keyed '<buffer>.<index>'."""
        return OrderedDict(('{}.{}'.format(name, i), arr)
                           for name, arrs in self._buffers.items()
                           for i, arr in enumerate(arrs))

    def __repr__(self):
        return 'OptimizerState: [{}, step {}]'.format(self._kind, self.step)


def lr_at(epoch, cfg):
    """Get the time-decayed learning rate lr0 / (1 + lr_decay * epoch)."""
    if epoch < 0:
        raise ConfigError('Epoch must be >= 0. Got {}.'.format(epoch))
    return cfg.lr0 / (1.0 + cfg.lr_decay * epoch)


def _check_step_inputs(params, grads, state):
    buffers = next(iter(state.buffers.values()))
    if not (len(params) == len(grads) == len(buffers)):
        raise ShapeMismatch('Got {} parameters, {} gradients and {} buffers.'.format(
            len(params), len(grads), len(buffers)))
    for p, g, b in zip(params, grads, buffers):
        if np.shape(p) != np.shape(g) or np.shape(p) != np.shape(b):
            raise ShapeMismatch('Parameter {}, gradient {} and buffer {} differ.'.format(
                np.shape(p), np.shape(g), np.shape(b)))


def sgd_step(params, grads, state, lr, momentum):
    """Update parameter arrays in place with momentum SGD.

    v = momentum * v + g, then p = p - lr * v.

    Returns:
        The tuple (params, state).
    """
    _check_step_inputs(params, grads, state)
    for p, g, v in zip(params, grads, state.buffers['velocity']):
        v *= momentum
        v += g
        p -= lr * v
    state.step += 1
    return params, state


def adam_step(params, grads, state, lr, cfg):
    """Update parameter arrays in place with bias-corrected Adam.

    Args:
        params: List of numpy arrays, updated in place.
        grads: List of gradient arrays of the same shapes.
        state: An adam OptimizerState.
        lr: Learning rate of this step.
        cfg: Object with beta1, beta2 and eps (usually a TrainConfig).

    Returns:
        The tuple (params, state).
    """
    _check_step_inputs(params, grads, state)
    state.step += 1
    t = state.step
    b1, b2 = cfg.beta1, cfg.beta2
    corr1, corr2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.buffers['m'], state.buffers['v']):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + cfg.eps)
    return params, state


def optimizer_step(model, state, lr, cfg):
    """Apply one step of the configured optimizer to every parameter of a model."""
    params = model.parameters()
    arrays = [p.data for p in params]
    grads = [p.grad if p.grad is not None else np.zeros(p.shape) for p in params]
    if state.kind == 'sgd':
        sgd_step(arrays, grads, state, lr, cfg.momentum)
    else:
        adam_step(arrays, grads, state, lr, cfg)


def predict_images(model, images, augment_cfg, batch_size=EVAL_BATCH_SIZE):
    """Get Eval-mode probabilities of images after the evaluation pipeline.

    Args:
        model: A Model.
        images: A list of Images.
        augment_cfg: AugmentConfig whose target size matches the model resolution.
        batch_size: Number of images per forward pass. (Default: 64).

    Returns:
        An N x num_classes numpy array.
    """
    chunks = []
    for start in range(0, len(images), batch_size):
        part = images[start:start + batch_size]
        prepared = augment_batch(part, augment_cfg, 0, 0, range(len(part)), train=False)
        chunks.append(predict_proba(model, Tensor(images_to_batch(prepared))))
    if not chunks:
        return np.zeros((0, model.spec.num_classes))
    return np.concatenate(chunks)


def evaluate_model(model, labeled, augment_cfg, loss_history=(), allow_degenerate=False):
    """Get the MetricsReport of a model on a LabeledSet.

    Args:
        model: The Model to evaluate.
        labeled: A LabeledSet.
        augment_cfg: AugmentConfig of the evaluation pipeline.
        loss_history: Optional (epoch, train_loss, val_mean_auc) rows to carry.
        allow_degenerate: Set to True to get a report with a NaN mean AUC instead
            of AllColumnsDegenerate when no column has both positives and
            negatives.
    """
    if len(labeled) == 0:
        raise EmptyDataset('Cannot evaluate on an empty set.')
    preds = predict_images(model, list(labeled.images), augment_cfg)
    try:
        return MetricsReport.from_predictions(preds, labeled.labels, loss_history,
                                              labeled.columns)
    except AllColumnsDegenerate:
        if not allow_degenerate:
            raise
    _logger.warning('No validation column has both positive and negative examples; '
                    'the mean AUC of the report is NaN.')
    return MetricsReport([None] * len(labeled.columns), float('nan'),
                         confusion_matrix(preds, labeled.labels), loss_history,
                         None, labeled.columns)


def default_augment_config(spec):
    """Get the default AugmentConfig for the input resolution of a ModelSpec."""
    return AugmentConfig(target_size=spec.input_resolution)


def _prepare_augment(model, augment_cfg, augment):
    if augment_cfg is None:
        augment_cfg = default_augment_config(model.spec)
    if augment_cfg.target_size != model.spec.input_resolution:
        raise ConfigError('Augmentation target size {} does not match the model input '
                          'resolution {}.'.format(augment_cfg.target_size,
                                                  model.spec.input_resolution))
    if not augment:
        augment_cfg = augment_cfg.model_copy(update=dict(
            p_hflip=0.0, p_vflip=0.0, p_ssr=0.0, p_oneof_filter=0.0, p_piecewise=0.0))
    return augment_cfg


def split_validation(labeled, cfg):
    """Hold out a stratified share of cfg.val_fraction, or reuse tiny sets whole."""
    if len(labeled) < 2:
        return labeled, labeled
    train_idx, val_idx = stratified_split(labeled.class_indices, 1.0 - cfg.val_fraction,
                                          cfg.seed)
    if len(val_idx) == 0:
        return labeled, labeled
    return labeled.subset(train_idx), labeled.subset(val_idx)


def _validation_auc(model, validation, augment_cfg):
    preds = predict_images(model, list(validation.images), augment_cfg)
    try:
        return mean_columnwise_auc(preds, validation.labels, validation.columns)[1]
    except AllColumnsDegenerate:
        return float('nan')


def train_supervised(model, labeled, cfg=None, augment_cfg=None, rng=None,
                     validation=None, augment=True, state=None, workers=None):
    """Train a model with mini-batch gradient descent.

    Every epoch shuffles the training set, augments each batch with the train
    pipeline, runs a Train-mode forward pass, takes the mean cross-entropy and
    one optimizer step at lr_at(epoch). After each epoch the train loss and the
    validation mean AUC are recorded. The weights of the epoch with the best
    validation mean AUC (earliest on ties) are restored at the end.

    Args:
        model: The Model to train. Its weights are updated in place.
        labeled: A LabeledSet with the training examples.
        cfg: A TrainConfig. (Default: TrainConfig()).
        augment_cfg: AugmentConfig matching the model resolution. (Default:
            default pipeline at the model resolution).
        rng: Optional numpy Generator for shuffling, dropout and stochastic
            depth. (Default: seeded from cfg.seed).
        validation: Optional LabeledSet for validation. If None, a stratified
            share of cfg.val_fraction is held out of labeled.
        augment: Set to False to only resize and normalize training images.
        state: Optional OptimizerState to continue from. It is updated in place.
        workers: Optional number of threads for batch augmentation.

    Returns:
        A tuple of (model, MetricsReport on the validation set). The report
        carries the per-epoch (epoch, train_loss, val_mean_auc) history. Its
        mean AUC is NaN when no validation column has both classes.
    """
    cfg = cfg if cfg is not None else TrainConfig()
    if len(labeled) == 0:
        raise EmptyDataset('Cannot train on an empty labeled set.')
    augment_cfg = _prepare_augment(model, augment_cfg, augment)
    if validation is None:
        train_set, validation = split_validation(labeled, cfg)
    else:
        train_set = labeled
    rng = rng if rng is not None else np.random.default_rng([cfg.seed, 1])
    if state is None:
        state = OptimizerState.for_params(cfg.optimizer, model.parameters())

    images, labels, n = list(train_set.images), train_set.labels, len(train_set)
    cached = None
    if not augment:
        cached = images_to_batch(augment_batch(images, augment_cfg, cfg.seed, 0,
                                               range(n), train=False))

    history, best_auc, best_state, best_epoch = [], -math.inf, None, None
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if cached is not None:
                batch = cached[idx]
            else:
                batch = images_to_batch(augment_batch(
                    [images[i] for i in idx], augment_cfg, cfg.seed, epoch, idx,
                    train=True, workers=workers))
            if _logger.isEnabledFor(logging.DEBUG):
                origins = [train_set.origins[i] for i in idx]
                _logger.debug('epoch %d batch %d: %d real, %d pseudo', epoch + 1,
                              start // cfg.batch_size, origins.count('real'),
                              origins.count('pseudo'))
            model.zero_grad()
            logits = forward(model, Tensor(batch), Mode.Train, rng)
            loss = softmax_cross_entropy(logits, labels[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise NonFinite('Training loss became {} at epoch {}, batch {}.'.format(
                    value, epoch + 1, start // cfg.batch_size))
            backward(loss)
            optimizer_step(model, state, lr, cfg)
            total += value * len(idx)

        train_loss = total / n
        val_auc = _validation_auc(model, validation, augment_cfg)
        history.append((epoch + 1, train_loss, val_auc))
        _logger.info('epoch %d/%d  lr %.3g  train loss %.6f  val mean AUC %.6f',
                     epoch + 1, cfg.epochs, lr, train_loss, val_auc)
        if cfg.keep_best and val_auc > best_auc:
            best_auc, best_state, best_epoch = val_auc, model.state_dict(), epoch + 1

    if best_state is not None:
        model.load_state_dict(best_state)
        _logger.info('Restored the weights of epoch %d (val mean AUC %.6f).',
                     best_epoch, best_auc)
    return model, evaluate_model(model, validation, augment_cfg, history,
                                 allow_degenerate=True)
