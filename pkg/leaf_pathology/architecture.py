# coding=utf-8
"""Architecture descriptions for inverted-residual classifiers."""
import math

from .errors import InvalidSpec

MODEL_KINDS = ('efficient', 'baseline')


class BlockConfig(object):
    """Description of a single inverted residual (MBConv) block.

    Args:
        in_channels: Integer for the number of channels entering the block.
        out_channels: Integer for the number of channels leaving the block.
        expansion_ratio: Number >= 1 by which the 1x1 expansion conv multiplies
            the channel count. (Default: 4).
        se_ratio: Number in (0, 1] for the size of the squeeze-and-excitation
            bottleneck relative to in_channels. (Default: 0.25).
        survival_prob: Number in [0, 1] for the probability that the residual
            branch is kept during training. (Default: 0.8).
        stride: Integer stride of the depthwise conv, either 1 or 2. (Default: 1).

    Properties:
        * in_channels
        * out_channels
        * expansion_ratio
        * se_ratio
        * survival_prob
        * stride
        * expanded_channels
        * se_channels
        * has_skip
    """
    __slots__ = ('_in_channels', '_out_channels', '_expansion_ratio', '_se_ratio',
                 '_survival_prob', '_stride')

    def __init__(self, in_channels, out_channels, expansion_ratio=4, se_ratio=0.25,
                 survival_prob=0.8, stride=1):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.expansion_ratio = expansion_ratio
        self.se_ratio = se_ratio
        self.survival_prob = survival_prob
        self.stride = stride

    @property
    def in_channels(self):
        """Get or set an integer for the input channel count."""
        return self._in_channels

    @in_channels.setter
    def in_channels(self, value):
        self._in_channels = _positive_int(value, 'in_channels')

    @property
    def out_channels(self):
        """Get or set an integer for the output channel count."""
        return self._out_channels

    @out_channels.setter
    def out_channels(self, value):
        self._out_channels = _positive_int(value, 'out_channels')

    @property
    def expansion_ratio(self):
        """Get or set a number >= 1 for the channel expansion ratio."""
        return self._expansion_ratio

    @expansion_ratio.setter
    def expansion_ratio(self, value):
        value = float(value)
        if value < 1:
            raise InvalidSpec('expansion_ratio must be >= 1. Got {}.'.format(value))
        self._expansion_ratio = value

    @property
    def se_ratio(self):
        """Get or set a number in (0, 1] for the squeeze-and-excitation ratio."""
        return self._se_ratio

    @se_ratio.setter
    def se_ratio(self, value):
        value = float(value)
        if not 0 < value <= 1:
            raise InvalidSpec('se_ratio must be in (0, 1]. Got {}.'.format(value))
        self._se_ratio = value

    @property
    def survival_prob(self):
        """Get or set a number in [0, 1] for the stochastic depth survival."""
        return self._survival_prob

    @survival_prob.setter
    def survival_prob(self, value):
        value = float(value)
        if not 0 <= value <= 1:
            raise InvalidSpec('survival_prob must be in [0, 1]. Got {}.'.format(value))
        self._survival_prob = value

    @property
    def stride(self):
        """Get or set the depthwise stride (1 or 2)."""
        return self._stride

    @stride.setter
    def stride(self, value):
        if value not in (1, 2):
            raise InvalidSpec('stride must be 1 or 2. Got {}.'.format(value))
        self._stride = int(value)

    @property
    def expanded_channels(self):
        """Get the channel count after the expansion conv."""
        return max(1, _round_half_up(self.in_channels * self.expansion_ratio))

    @property
    def se_channels(self):
        """Get the number of hidden units of the squeeze-and-excitation gate."""
        return max(1, _round_half_up(self.in_channels * self.se_ratio))

    @property
    def has_skip(self):
        """Get a boolean for whether the block adds a skip connection."""
        return self.stride == 1 and self.in_channels == self.out_channels

    @classmethod
    def from_dict(cls, data):
        """Create a BlockConfig from a dictionary.

        .. code-block:: python

            {
            "type": "BlockConfig",
            "in_channels": 16,
            "out_channels": 16,
            "expansion_ratio": 4,
            "se_ratio": 0.25,
            "survival_prob": 0.8,
            "stride": 1
            }
        """
        assert data['type'] == 'BlockConfig', \
            'Expected BlockConfig. Got {}.'.format(data['type'])
        return cls(data['in_channels'], data['out_channels'],
                   data.get('expansion_ratio', 4), data.get('se_ratio', 0.25),
                   data.get('survival_prob', 0.8), data.get('stride', 1))

    def to_dict(self):
        """Return BlockConfig as a dictionary."""
        return {
            'type': 'BlockConfig',
            'in_channels': self.in_channels,
            'out_channels': self.out_channels,
            'expansion_ratio': self.expansion_ratio,
            'se_ratio': self.se_ratio,
            'survival_prob': self.survival_prob,
            'stride': self.stride
        }

    def duplicate(self, **overrides):
        """Get a copy of this object with any attributes replaced by keyword."""
        base = self.to_dict()
        base.update(overrides)
        return BlockConfig.from_dict(base)

    def __eq__(self, other):
        return isinstance(other, BlockConfig) and self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash(tuple(self.to_dict().values()))

    def ToString(self):
        return self.__repr__()

    def __repr__(self):
        return 'BlockConfig: [{} -> {}, x{}, stride {}]'.format(
            self.in_channels, self.out_channels, self.expansion_ratio, self.stride)


class ModelSpec(object):
    """Description of a complete classifier.

    Args:
        stem_channels: Integer number of channels produced by the 3x3 stem conv.
        blocks: An ordered list of BlockConfig objects. The first block must take
            stem_channels inputs and every block must take the outputs of the
            previous one.
        dropout_prob: Number in [0, 1) for dropout before the classifier head.
            (Default: 0.2).
        num_classes: Integer >= 2 for the number of output logits. (Default: 4).
        input_resolution: Integer side length of the square input images.
            (Default: 32).
        kind: Text for the network family. Choose from the following.

            * efficient - stem, inverted residual blocks, pooled dense head
            * baseline - three conv/relu/max-pool layers and a dense head
        stage_sizes: Optional list of block counts, one per stage, that sum to the
            number of blocks. If None, stages are grouped from the blocks.

    Properties:
        * stem_channels
        * blocks
        * dropout_prob
        * num_classes
        * input_resolution
        * kind
        * stage_sizes
        * stages
        * head_channels
    """
    __slots__ = ('_stem_channels', '_blocks', '_dropout_prob', '_num_classes',
                 '_input_resolution', '_kind', '_stage_sizes')

    def __init__(self, stem_channels, blocks=(), dropout_prob=0.2, num_classes=4,
                 input_resolution=32, kind='efficient', stage_sizes=None):
        if kind not in MODEL_KINDS:
            raise InvalidSpec('Unknown model kind "{}". Choose from {}.'.format(
                kind, MODEL_KINDS))
        self._kind = kind
        self._stem_channels = _positive_int(stem_channels, 'stem_channels')
        self._blocks = tuple(blocks)
        for blk in self._blocks:
            assert isinstance(blk, BlockConfig), \
                'Expected BlockConfig for ModelSpec blocks. Got {}.'.format(type(blk))
        dropout_prob = float(dropout_prob)
        if not 0 <= dropout_prob < 1:
            raise InvalidSpec('dropout_prob must be in [0, 1). Got {}.'.format(
                dropout_prob))
        self._dropout_prob = dropout_prob
        self._num_classes = int(num_classes)
        if self._num_classes < 2:
            raise InvalidSpec('num_classes must be >= 2. Got {}.'.format(num_classes))
        self._input_resolution = _positive_int(input_resolution, 'input_resolution')
        self._stage_sizes = None
        if stage_sizes is not None:
            sizes = tuple(_positive_int(s, 'stage size') for s in stage_sizes)
            if sum(sizes) != len(self._blocks):
                raise InvalidSpec('Stage sizes {} do not add up to {} blocks.'.format(
                    sizes, len(self._blocks)))
            self._stage_sizes = sizes
        self.check_channels()

    @property
    def stem_channels(self):
        """Get the number of channels produced by the stem."""
        return self._stem_channels

    @property
    def blocks(self):
        """Get a tuple of BlockConfig objects."""
        return self._blocks

    @property
    def dropout_prob(self):
        """Get the dropout probability before the classifier head."""
        return self._dropout_prob

    @property
    def num_classes(self):
        """Get the number of output classes."""
        return self._num_classes

    @property
    def input_resolution(self):
        """Get the side length of the square input images."""
        return self._input_resolution

    @property
    def kind(self):
        """Get the network family (efficient or baseline)."""
        return self._kind

    @property
    def head_channels(self):
        """Get the number of features entering the classifier head."""
        if self._kind == 'baseline':
            return self._stem_channels * 4
        return self._blocks[-1].out_channels if self._blocks else self._stem_channels

    @property
    def stage_sizes(self):
        """Get the tuple of per-stage block counts given at creation, or None."""
        return self._stage_sizes

    @property
    def stages(self):
        """Get a list of tuples grouping consecutive blocks into stages.

        Specs built from stages keep those boundaries. Otherwise a stage starts
        with any block and continues while the following blocks keep the channel
        count and use stride 1.
        """
        if self._stage_sizes is not None:
            stages, start = [], 0
            for size in self._stage_sizes:
                stages.append(self._blocks[start:start + size])
                start += size
            return stages
        stages, current = [], []
        for blk in self._blocks:
            if current and blk.has_skip and blk.in_channels == current[-1].out_channels:
                current.append(blk)
            else:
                if current:
                    stages.append(tuple(current))
                current = [blk]
        if current:
            stages.append(tuple(current))
        return stages

    def check_channels(self):
        """Check that consecutive blocks have matching channel counts."""
        prev = self._stem_channels
        for i, blk in enumerate(self._blocks):
            if blk.in_channels != prev:
                raise InvalidSpec(
                    'Block {} expects {} input channels but receives {}.'.format(
                        i, blk.in_channels, prev))
            prev = blk.out_channels

    def with_noise(self, dropout_prob=None, survival_prob=None):
        """Get a copy of this spec with new dropout and/or survival probabilities.

        Args:
            dropout_prob: Optional number for the new dropout probability.
            survival_prob: Optional number for the survival probability of
                every block.
        """
        blocks = self._blocks if survival_prob is None else \
            [b.duplicate(survival_prob=survival_prob) for b in self._blocks]
        drop = self._dropout_prob if dropout_prob is None else dropout_prob
        return ModelSpec(self._stem_channels, blocks, drop, self._num_classes,
                         self._input_resolution, self._kind, self._stage_sizes)

    @classmethod
    def from_stages(cls, stem_channels, stages, dropout_prob=0.2, num_classes=4,
                    input_resolution=32, expansion_ratio=4, se_ratio=0.25,
                    survival_prob=0.8):
        """Create a ModelSpec from a compact list of stages.

        Args:
            stem_channels: Integer number of stem channels.
            stages: A list of (repeats, out_channels, stride) tuples.
            dropout_prob: Number for the dropout before the head.
            num_classes: Integer number of classes.
            input_resolution: Integer side length of the input images.
            expansion_ratio: Expansion ratio used for every block.
            se_ratio: Squeeze-and-excitation ratio used for every block.
            survival_prob: Survival probability used for every block.
        """
        blocks, prev, sizes = [], stem_channels, []
        for repeats, out_ch, stride in stages:
            for i in range(repeats):
                blocks.append(BlockConfig(
                    prev, out_ch, expansion_ratio, se_ratio, survival_prob,
                    stride if i == 0 else 1))
                prev = out_ch
            if repeats:
                sizes.append(repeats)
        return cls(stem_channels, blocks, dropout_prob, num_classes,
                   input_resolution, stage_sizes=sizes)

    @classmethod
    def from_dict(cls, data):
        """Create a ModelSpec from a dictionary.

        .. code-block:: python

            {
            "type": "ModelSpec",
            "kind": "efficient",
            "stem_channels": 16,
            "blocks": [],  # list of BlockConfig dictionaries
            "dropout_prob": 0.2,
            "num_classes": 4,
            "input_resolution": 32,
            "stage_sizes": [1, 2]  # optional block count of every stage
            }
        """
        assert data['type'] == 'ModelSpec', \
            'Expected ModelSpec. Got {}.'.format(data['type'])
        blocks = [BlockConfig.from_dict(b) for b in data.get('blocks', [])]
        return cls(data['stem_channels'], blocks, data.get('dropout_prob', 0.2),
                   data.get('num_classes', 4), data.get('input_resolution', 32),
                   data.get('kind', 'efficient'), data.get('stage_sizes'))

    def to_dict(self):
        """Return ModelSpec as a dictionary."""
        base = {
            'type': 'ModelSpec',
            'kind': self.kind,
            'stem_channels': self.stem_channels,
            'blocks': [b.to_dict() for b in self.blocks],
            'dropout_prob': self.dropout_prob,
            'num_classes': self.num_classes,
            'input_resolution': self.input_resolution
        }
        if self._stage_sizes is not None:
            base['stage_sizes'] = list(self._stage_sizes)
        return base

    def duplicate(self):
        """Get a copy of this object."""
        return ModelSpec.from_dict(self.to_dict())

    def __eq__(self, other):
        return isinstance(other, ModelSpec) and self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash((self.kind, self.stem_channels, self.blocks, self.dropout_prob,
                     self.num_classes, self.input_resolution))

    def ToString(self):
        return self.__repr__()

    def __repr__(self):
        return 'ModelSpec: [{}, stem {}, {} blocks, {}px, {} classes]'.format(
            self.kind, self.stem_channels, len(self.blocks), self.input_resolution,
            self.num_classes)


def _positive_int(value, name):
    try:
        int_value = int(value)
    except (TypeError, ValueError):
        raise InvalidSpec('{} must be an integer. Got {}.'.format(name, value))
    if int_value != value or int_value < 1:
        raise InvalidSpec('{} must be an integer >= 1. Got {}.'.format(name, value))
    return int_value


def _round_half_up(value):
    return int(math.floor(value + 0.5))
