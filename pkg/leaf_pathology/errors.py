# coding=utf-8
"""Exceptions raised by leaf-pathology.

Every error derives from ValueError so that callers validating inputs the usual
way keep working. The three intermediate classes decide the exit code of the
command line interface.
"""


class LeafPathologyError(ValueError):
    """Base class for all leaf-pathology errors."""


class ConfigError(LeafPathologyError):
    """An invalid argument, configuration value or model description."""


class DataError(LeafPathologyError):
    """A problem with a dataset, an image, a file or its contents."""


class NumericError(LeafPathologyError):
    """A numeric failure such as a shape mismatch or a non-finite value."""


# tensor engine
class ShapeMismatch(NumericError):
    pass


class InvalidStride(ConfigError):
    pass


class NotScalar(NumericError):
    pass


class EmptyTape(NumericError):
    pass


class NonFinite(NumericError):
    pass


# model blocks and scaling
class InvalidProbability(ConfigError):
    pass


class InvalidSpec(ConfigError):
    pass


class InvalidCoefficient(ConfigError):
    pass


class InvalidBase(ConfigError):
    pass


class EmptyResult(ConfigError):
    pass


# augmentation
class InvalidTarget(ConfigError):
    pass


class InvalidScale(ConfigError):
    pass


class InvalidGrid(ConfigError):
    pass


class ZeroStd(ConfigError):
    pass


# metrics
class DegenerateColumn(DataError):
    pass


class AllColumnsDegenerate(DataError):
    pass


# datasets
class EmptyDataset(DataError):
    pass


class EmptyUnlabeledSet(DataError):
    pass


class ColumnOrderMismatch(DataError):
    pass


class MissingImage(DataError):
    """An image referenced by a label CSV does not exist."""

    def __init__(self, image_id, path=None):
        self.image_id = image_id
        self.path = path
        msg = 'Missing image for id "{}"'.format(image_id)
        if path is not None:
            msg = '{} (expected at {})'.format(msg, path)
        super(MissingImage, self).__init__(msg)


class MalformedCsv(DataError):
    """A label CSV line that cannot be parsed."""

    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super(MalformedCsv, self).__init__(
            'Malformed CSV at line {}: {}'.format(line, reason))


class UnsupportedImageFormat(DataError):
    pass


# ensembles
class EmptyEnsemble(ConfigError):
    pass


class ClassCountMismatch(ConfigError):
    pass


# checkpoints
class ChecksumMismatch(DataError):
    pass


class VersionUnsupported(DataError):
    pass


class Truncated(DataError):
    pass
