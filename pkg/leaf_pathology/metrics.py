# coding=utf-8
"""Cross-entropy loss, mean column-wise ROC AUC and confusion matrices."""
import math
import logging

import numpy as np
from scipy.stats import rankdata

from .tensor import Tensor, softmax, log, tensor_sum, elementwise
from .errors import ShapeMismatch, DegenerateColumn, AllColumnsDegenerate

_logger = logging.getLogger(__name__)

CLASS_COLUMNS = ('healthy', 'multiple_diseases', 'rust', 'scab')
PROB_FLOOR = 1e-12
POSITIVE_THRESHOLD = 0.5


def _matrix(values, name):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeMismatch('{} must be a row or a matrix. Got shape {}.'.format(
            name, arr.shape))
    return arr


def cross_entropy(p, y):
    """Get -sum(p * ln(y)) averaged over rows.

    Args:
        p: Target probabilities, one row or an N x C matrix.
        y: Predicted probabilities of the same shape. Values are clamped to
            [1e-12, 1] before the logarithm.
    """
    p, y = _matrix(p, 'Targets'), _matrix(y, 'Predictions')
    if p.shape != y.shape:
        raise ShapeMismatch('Targets {} and predictions {} differ in shape.'.format(
            p.shape, y.shape))
    per_row = -(p * np.log(np.clip(y, PROB_FLOOR, 1.0))).sum(axis=1)
    return float(per_row.mean())


def softmax_cross_entropy(logits, targets):
    """Mean cross-entropy between softmax(logits) and target rows, as a Tensor.

    The gradient with respect to the logits is (softmax(logits) - targets) / N.

    Args:
        logits: An N x C Tensor.
        targets: An N x C array of target probabilities.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != logits.shape:
        raise ShapeMismatch('Targets {} do not match logits {}.'.format(
            targets.shape, logits.shape))
    log_probs = log(softmax(logits), floor=PROB_FLOOR)
    total = tensor_sum(elementwise('mul', log_probs, Tensor(targets)))
    return elementwise('mul', total, -1.0 / logits.shape[0])


def _column_inputs(scores, positives):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    positives = np.asarray(positives, dtype=bool).ravel()
    if scores.shape != positives.shape:
        raise ShapeMismatch('Got {} scores for {} labels.'.format(
            scores.size, positives.size))
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateColumn('AUC needs positives and negatives. Got {} and {}.'.format(
            n_pos, n_neg))
    return scores, positives, n_pos, n_neg


def roc_auc_column(scores, positives):
    """Area under the ROC curve of one column.

    This is the Mann-Whitney statistic: the share of (positive, negative) pairs
    where the positive scores higher, counting ties as one half. It is computed
    from average ranks.

    Args:
        scores: Predicted scores.
        positives: Booleans, True where the example belongs to the class.
    """
    scores, positives, n_pos, n_neg = _column_inputs(scores, positives)
    ranks = rankdata(scores)
    rank_sum = math.fsum(ranks[positives])
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_curve(scores, positives):
    """Get (threshold, TPR, FPR) points, from the strictest threshold down.

    The first point is (inf, 0, 0) and the last is (min score, 1, 1). The
    trapezoidal area under the points equals roc_auc_column.
    """
    scores, positives, n_pos, n_neg = _column_inputs(scores, positives)
    order = np.argsort(-scores, kind='mergesort')
    sorted_scores, sorted_pos = scores[order], positives[order]
    tps = np.cumsum(sorted_pos)
    fps = np.cumsum(~sorted_pos)
    # keep the last index of every run of equal scores
    last = np.r_[np.nonzero(np.diff(sorted_scores))[0], sorted_scores.size - 1]
    points = [(float('inf'), 0.0, 0.0)]
    for k in last:
        points.append((float(sorted_scores[k]), tps[k] / float(n_pos),
                       fps[k] / float(n_neg)))
    return points


def curve_area(points):
    """Trapezoidal area under (threshold, TPR, FPR) points."""
    area = 0.0
    for (_, tpr0, fpr0), (_, tpr1, fpr1) in zip(points[:-1], points[1:]):
        area += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0
    return area


def binarize(labels):
    """Positives of every column of a label matrix, thresholded at 0.5."""
    return _matrix(labels, 'Labels') >= POSITIVE_THRESHOLD


def mean_columnwise_auc(preds, labels, columns=CLASS_COLUMNS):
    """Get the AUC of every column and their mean.

    Columns without positives or without negatives are logged, reported as None
    and left out of the mean.

    Args:
        preds: N x C predicted probabilities.
        labels: N x C target probabilities, binarized at 0.5.
        columns: Column names used in log messages.

    Returns:
        A tuple of (per column AUCs, mean AUC).
    """
    preds, labels = _matrix(preds, 'Predictions'), _matrix(labels, 'Labels')
    if preds.shape != labels.shape:
        raise ShapeMismatch('Predictions {} and labels {} differ in shape.'.format(
            preds.shape, labels.shape))
    positives = binarize(labels)
    per_column = []
    for c in range(preds.shape[1]):
        try:
            per_column.append(roc_auc_column(preds[:, c], positives[:, c]))
        except DegenerateColumn as e:
            name = columns[c] if c < len(columns) else str(c)
            _logger.warning('Column "%s" is left out of the mean AUC: %s', name, e)
            per_column.append(None)
    valid = [a for a in per_column if a is not None]
    if not valid:
        raise AllColumnsDegenerate('No column has both positive and negative examples.')
    return per_column, math.fsum(valid) / len(valid)


def confusion_matrix(preds, labels):
    """Count examples by (argmax of label row, argmax of prediction row).

    Ties go to the lowest column index.
    """
    preds, labels = _matrix(preds, 'Predictions'), _matrix(labels, 'Labels')
    if preds.shape != labels.shape:
        raise ShapeMismatch('Predictions {} and labels {} differ in shape.'.format(
            preds.shape, labels.shape))
    size = preds.shape[1]
    matrix = np.zeros((size, size), dtype=np.int64)
    np.add.at(matrix, (labels.argmax(axis=1), preds.argmax(axis=1)), 1)
    return matrix


def accuracy(preds, labels):
    """Share of rows where the predicted and target argmax agree."""
    matrix = confusion_matrix(preds, labels)
    return float(np.trace(matrix)) / matrix.sum()


class MetricsReport(object):
    """Evaluation summary of a model on a labeled set.

    Args:
        per_column_auc: AUC of every class column, None where degenerate.
        mean_auc: Mean of the non-degenerate column AUCs.
        confusion: C x C integer confusion matrix.
        loss_history: List of (epoch, train_loss, val_mean_auc) rows.
        curves: Per column list of (threshold, TPR, FPR) points, or None.
        columns: Class column names. (Default: CLASS_COLUMNS).

    Properties:
        * per_column_auc
        * mean_auc
        * confusion
        * loss_history
        * curves
        * columns
        * accuracy
    """
    __slots__ = ('_per_column_auc', '_mean_auc', '_confusion', '_loss_history',
                 '_curves', '_columns')

    def __init__(self, per_column_auc, mean_auc, confusion, loss_history=(),
                 curves=None, columns=CLASS_COLUMNS):
        self._per_column_auc = [None if a is None else float(a) for a in per_column_auc]
        self._mean_auc = float(mean_auc)
        self._confusion = np.asarray(confusion, dtype=np.int64)
        self._loss_history = [(int(e), float(l), float(a)) for e, l, a in loss_history]
        self._curves = curves
        self._columns = tuple(columns)
        assert len(self._per_column_auc) == len(self._columns), \
            'Got {} AUC values for {} columns.'.format(
                len(self._per_column_auc), len(self._columns))

    @classmethod
    def from_predictions(cls, preds, labels, loss_history=(), columns=CLASS_COLUMNS):
        """Evaluate predicted probabilities against target probabilities."""
        per_column, mean_auc = mean_columnwise_auc(preds, labels, columns)
        positives = binarize(labels)
        preds = _matrix(preds, 'Predictions')
        curves = [None if a is None else roc_curve(preds[:, c], positives[:, c])
                  for c, a in enumerate(per_column)]
        return cls(per_column, mean_auc, confusion_matrix(preds, labels), loss_history,
                   curves, columns)

    @classmethod
    def from_dict(cls, data):
        assert data['type'] == 'MetricsReport', \
            'Expected MetricsReport dictionary. Got {}.'.format(data['type'])
        curves = data.get('curves')
        if curves is not None:
            curves = [None if c is None else [tuple(p) for p in c] for c in curves]
        return cls(data['per_column_auc'], data['mean_auc'], data['confusion'],
                   data.get('loss_history', ()), curves,
                   data.get('columns', CLASS_COLUMNS))

    @property
    def per_column_auc(self):
        return list(self._per_column_auc)

    @property
    def mean_auc(self):
        return self._mean_auc

    @property
    def confusion(self):
        """Get the confusion matrix, rows are true classes and columns predictions."""
        return self._confusion.copy()

    @property
    def loss_history(self):
        return list(self._loss_history)

    @property
    def curves(self):
        return self._curves

    @property
    def columns(self):
        return self._columns

    @property
    def accuracy(self):
        total = self._confusion.sum()
        return float(np.trace(self._confusion)) / total if total else 0.0

    def to_dict(self):
        base = {
            'type': 'MetricsReport',
            'columns': list(self._columns),
            'per_column_auc': self.per_column_auc,
            'mean_auc': self._mean_auc,
            'accuracy': self.accuracy,
            'confusion': self._confusion.tolist(),
            'loss_history': [list(row) for row in self._loss_history]
        }
        if self._curves is not None:
            # inf thresholds are not valid JSON
            base['curves'] = [
                None if c is None else
                [[t if math.isfinite(t) else 1e308, tpr, fpr] for t, tpr, fpr in c]
                for c in self._curves]
        return base

    def to_text(self):
        """Get a plain-text rendering of the report."""
        lines = ['mean column-wise AUC: {:.6f}'.format(self._mean_auc)]
        for name, auc in zip(self._columns, self._per_column_auc):
            value = 'n/a (degenerate column)' if auc is None else '{:.6f}'.format(auc)
            lines.append('  {:<18} {}'.format(name, value))
        lines.append('accuracy: {:.4f}'.format(self.accuracy))
        lines.append('confusion (rows = true, columns = predicted):')
        lines.append('  {:<18} {}'.format('', ' '.join(
            '{:>8}'.format(c[:8]) for c in self._columns)))
        for name, row in zip(self._columns, self._confusion):
            lines.append('  {:<18} {}'.format(name, ' '.join(
                '{:>8d}'.format(int(v)) for v in row)))
        if self._loss_history:
            lines.append('epoch  train_loss  val_mean_auc')
            for epoch, loss, auc in self._loss_history:
                lines.append('{:>5}  {:>10.6f}  {:>12.6f}'.format(epoch, loss, auc))
        return '\n'.join(lines) + '\n'

    def ToString(self):
        return self.__repr__()

    def __repr__(self):
        return 'MetricsReport: [mean AUC {:.4f}]'.format(self._mean_auc)
