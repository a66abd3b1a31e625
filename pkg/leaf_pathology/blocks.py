# coding=utf-8
"""Layers, inverted residual blocks and the classifier built from a ModelSpec."""
import enum
import math
from collections import OrderedDict

import numpy as np

from .architecture import ModelSpec
from .errors import ShapeMismatch, InvalidProbability, InvalidSpec, NonFinite
from .tensor import Tensor, conv2d, matmul, activation, pool, softmax, reshape, \
    no_grad


class Mode(enum.Enum):
    """Whether stochastic layers (dropout, stochastic depth) are active."""
    Train = 'train'
    Eval = 'eval'


class Model(object):
    """A classifier: a ModelSpec plus its named weight tensors.

    Args:
        spec: The ModelSpec describing the architecture.
        params: An ordered dictionary from parameter names to Tensors.

    Properties:
        * spec
        * params
        * parameter_count
        * noise_draws
    """
    __slots__ = ('_spec', '_params', 'noise_draws')

    def __init__(self, spec, params):
        assert isinstance(spec, ModelSpec), \
            'Expected ModelSpec. Got {}.'.format(type(spec))
        expected = param_shapes(spec)
        if list(expected) != list(params) or \
                any(params[k].shape != expected[k][0] for k in expected):
            raise InvalidSpec('Parameters do not match the shapes of {}.'.format(spec))
        self._spec = spec
        self._params = OrderedDict(params)
        self.noise_draws = 0

    @property
    def spec(self):
        """Get the ModelSpec of this model."""
        return self._spec

    @property
    def params(self):
        """Get an ordered dictionary of parameter Tensors."""
        return self._params

    @property
    def parameter_count(self):
        """Get the total number of weights in the model."""
        return sum(p.size for p in self._params.values())

    def parameters(self):
        """Get a list of all parameter Tensors."""
        return list(self._params.values())

    def zero_grad(self):
        """Clear the gradients of every parameter."""
        for p in self._params.values():
            p.zero_grad()

    def state_dict(self):
        """Get an ordered dictionary of copies of the parameter arrays."""
        return OrderedDict((k, p.data.copy()) for k, p in self._params.items())

    def load_state_dict(self, state):
        """Replace the parameter values from a dictionary of arrays."""
        for k, p in self._params.items():
            p.data = np.array(state[k], dtype=np.float64)

    def duplicate(self):
        """Get a copy of this model with copied weights."""
        params = OrderedDict(
            (k, Tensor(p.data.copy(), requires_grad=True)) for k, p in self._params.items())
        return Model(self._spec, params)

    def ToString(self):
        return self.__repr__()

    def __repr__(self):
        return 'Model: [{}, {} parameters]'.format(self._spec, self.parameter_count)


def param_shapes(spec):
    """Get the shapes and fan-in of every parameter of a ModelSpec.

    Returns:
        An ordered dictionary from parameter names to (shape, fan_in) tuples,
        where fan_in is None for biases.
    """
    shapes = OrderedDict()
    if spec.kind == 'baseline':
        prev = 3
        for k in range(3):
            ch = spec.stem_channels * 2 ** k
            shapes['conv{}.w'.format(k)] = ((ch, prev, 3, 3), prev * 9)
            shapes['conv{}.b'.format(k)] = ((ch, 1, 1), None)
            prev = ch
    else:
        stem = spec.stem_channels
        shapes['stem.w'] = ((stem, 3, 3, 3), 27)
        shapes['stem.b'] = ((stem, 1, 1), None)
        for i, blk in enumerate(spec.blocks):
            pre = 'blocks.{}.'.format(i)
            exp, hid = blk.expanded_channels, blk.se_channels
            if blk.expansion_ratio != 1:
                shapes[pre + 'expand.w'] = ((exp, blk.in_channels, 1, 1), blk.in_channels)
                shapes[pre + 'expand.b'] = ((exp, 1, 1), None)
            shapes[pre + 'dw.w'] = ((exp, 1, 3, 3), 9)
            shapes[pre + 'dw.b'] = ((exp, 1, 1), None)
            shapes[pre + 'se.reduce_w'] = ((exp, hid), exp)
            shapes[pre + 'se.reduce_b'] = ((hid,), None)
            shapes[pre + 'se.expand_w'] = ((hid, exp), hid)
            shapes[pre + 'se.expand_b'] = ((exp,), None)
            shapes[pre + 'project.w'] = ((blk.out_channels, exp, 1, 1), exp)
            shapes[pre + 'project.b'] = ((blk.out_channels, 1, 1), None)
    shapes['head.w'] = ((spec.head_channels, spec.num_classes), spec.head_channels)
    shapes['head.b'] = ((spec.num_classes,), None)
    return shapes


def count_parameters(spec):
    """Get the number of weights a ModelSpec allocates without building it."""
    return sum(int(np.prod(shape)) for shape, _ in param_shapes(spec).values())


def build_model(spec, rng=None):
    """Allocate and initialize the weights of a model.

    Conv and dense weights are He-normal (std = sqrt(2 / fan_in)); biases are
    zero. Weights are drawn in parameter order, so the same seed always
    produces the same model.

    Args:
        spec: A ModelSpec.
        rng: A numpy Generator or an integer seed. (Default: None).
    """
    if not isinstance(spec, ModelSpec):
        raise InvalidSpec('Expected ModelSpec. Got {}.'.format(type(spec)))
    spec.check_channels()
    if spec.kind == 'baseline' and spec.input_resolution % 8:
        raise InvalidSpec('Baseline models need an input resolution divisible by 8. '
                          'Got {}.'.format(spec.input_resolution))
    rng = as_rng(rng)
    params = OrderedDict()
    for name, (shape, fan_in) in param_shapes(spec).items():
        if fan_in is None:
            values = np.zeros(shape)
        else:
            values = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)
        params[name] = Tensor(values, requires_grad=True)
    return Model(spec, params)


def build_baseline(num_classes=4, channels=8, input_resolution=32, rng=None,
                   dropout_prob=0.0):
    """Build the three-layer convolutional baseline network.

    Each layer is a 3x3 conv, relu and 2x2 max pooling; channel counts are
    channels, 2 * channels and 4 * channels.
    """
    spec = ModelSpec(channels, (), dropout_prob, num_classes, input_resolution,
                     kind='baseline')
    return build_model(spec, rng)


def as_rng(rng):
    """Get a numpy Generator from a Generator, an integer seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def stochastic_depth(residual, survival_prob, mode, rng):
    """Randomly drop a whole residual branch while training.

    Train mode keeps the branch with probability survival_prob and otherwise
    replaces it with zeros (one draw for the whole batch). Eval mode scales the
    branch by survival_prob so both modes agree in expectation.
    """
    if not 0 <= survival_prob <= 1:
        raise InvalidProbability('survival_prob must be in [0, 1]. Got {}.'.format(
            survival_prob))
    if survival_prob == 1:
        return residual
    if mode is Mode.Eval:
        return residual * float(survival_prob)
    if survival_prob > 0 and rng.random() < survival_prob:
        return residual
    return residual * 0.0


def dropout(x, p, mode, rng):
    """Inverted dropout: zero elements with probability p and rescale survivors."""
    if not 0 <= p < 1:
        raise InvalidProbability('dropout probability must be in [0, 1). Got {}.'.format(p))
    if mode is Mode.Eval or p == 0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * Tensor(mask)


def se_block(x, weights, se_ratio=None, in_channels=None):
    """Squeeze-and-excitation: gate every channel by a learned value in (0, 1).

    Args:
        x: Tensor of shape N x C x H x W.
        weights: A dictionary with reduce_w (C x h), reduce_b (h), expand_w
            (h x C) and expand_b (C) Tensors.
        se_ratio: Optional ratio used to check the number of hidden units
            against max(1, round(in_channels * se_ratio)).
        in_channels: The channel count the ratio applies to. If None, the
            channel count of x is used.
    """
    n, c = x.shape[0], x.shape[1]
    reduce_w, expand_w = weights['reduce_w'], weights['expand_w']
    hidden = reduce_w.shape[1]
    if reduce_w.shape[0] != c or expand_w.shape != (hidden, c):
        raise ShapeMismatch('SE weights {} and {} do not fit {} channels.'.format(
            reduce_w.shape, expand_w.shape, c))
    if se_ratio is not None:
        base = c if in_channels is None else in_channels
        if hidden != max(1, int(math.floor(base * se_ratio + 0.5))):
            raise ShapeMismatch('SE has {} hidden units but ratio {} of {} channels '
                                'was requested.'.format(hidden, se_ratio, base))
    squeeze = reshape(pool('global_avg', x), (n, c))
    excite = activation('swish', matmul(squeeze, reduce_w) + weights['reduce_b'])
    gates = activation('sigmoid', matmul(excite, expand_w) + weights['expand_b'])
    return x * reshape(gates, (n, c, 1, 1))


def inverted_residual(x, cfg, weights, mode, rng):
    """Inverted residual block: expand, depthwise 3x3, SE, project (+ skip).

    Args:
        x: Tensor of shape N x in_channels x H x W.
        cfg: The BlockConfig of the block.
        weights: A dictionary of block Tensors keyed by expand.w, expand.b (only
            when expansion_ratio != 1), dw.w, dw.b, se.reduce_w, se.reduce_b,
            se.expand_w, se.expand_b, project.w and project.b.
        mode: Mode.Train or Mode.Eval.
        rng: A numpy Generator used by stochastic depth in Train mode.
    """
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise ShapeMismatch('Block expects {} input channels. Got shape {}.'.format(
            cfg.in_channels, x.shape))
    h = x
    if cfg.expansion_ratio != 1:
        h = activation('swish', conv2d(h, weights['expand.w']) + weights['expand.b'])
    h = conv2d(h, weights['dw.w'], stride=cfg.stride, padding=1, depthwise=True)
    h = activation('swish', h + weights['dw.b'])
    se_weights = {k[3:]: v for k, v in weights.items() if k.startswith('se.')}
    h = se_block(h, se_weights, cfg.se_ratio, cfg.in_channels)
    h = conv2d(h, weights['project.w']) + weights['project.b']
    if cfg.has_skip:
        h = x + stochastic_depth(h, cfg.survival_prob, mode, rng)
    return h


def forward(model, batch, mode=Mode.Eval, rng=None):
    """Compute the class logits of a batch of images.

    Args:
        model: A Model.
        batch: A Tensor of shape N x 3 x R x R where R is the input resolution.
        mode: Mode.Train to enable dropout and stochastic depth. (Default: Eval).
        rng: A numpy Generator for the stochastic layers. Required in Train mode.

    Returns:
        A Tensor of N x num_classes logits.
    """
    spec, params = model.spec, model.params
    res = spec.input_resolution
    if batch.ndim != 4 or batch.shape[1:] != (3, res, res):
        raise ShapeMismatch('Expected a batch of shape N x 3 x {0} x {0}. Got {1}.'.format(
            res, batch.shape))
    if mode is Mode.Train and rng is None:
        raise ValueError('Train mode forward passes need a random generator.')
    n = batch.shape[0]

    if spec.kind == 'baseline':
        x = batch
        for k in range(3):
            x = conv2d(x, params['conv{}.w'.format(k)], padding=1) + \
                params['conv{}.b'.format(k)]
            x = pool('max2x2', activation('relu', x))
    else:
        x = activation('swish', conv2d(batch, params['stem.w'], padding=1) +
                       params['stem.b'])
        for i, blk in enumerate(spec.blocks):
            pre = 'blocks.{}.'.format(i)
            weights = {k[len(pre):]: v for k, v in params.items() if k.startswith(pre)}
            if mode is Mode.Train and blk.has_skip and blk.survival_prob < 1:
                model.noise_draws += 1
            x = inverted_residual(x, blk, weights, mode, rng)
    x = reshape(pool('global_avg', x), (n, x.shape[1]))
    if mode is Mode.Train and spec.dropout_prob > 0:
        model.noise_draws += 1
    x = dropout(x, spec.dropout_prob, mode, rng)
    logits = matmul(x, params['head.w']) + params['head.b']
    if not np.all(np.isfinite(logits.data)):
        raise NonFinite('Forward pass of {} produced non-finite logits.'.format(spec))
    return logits


def predict_proba(model, batch):
    """Get the Eval-mode class probabilities of a batch as a numpy array."""
    with no_grad():
        return softmax(forward(model, batch, Mode.Eval)).data.copy()
