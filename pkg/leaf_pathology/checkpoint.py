# coding=utf-8
"""Versioned, checksummed binary checkpoints of trained models.

File layout, all integers little-endian::

    b'LPCK'                    magic
    uint32                     format version
    uint32                     header length in bytes
    uint64                     payload length in bytes
    header                     UTF-8 JSON: model spec, array manifests, training
                               config echo, rng state and free-form metadata
    payload                    float64 arrays, weights first, then optimizer
                               buffers, each in manifest order
    32 bytes                   SHA-256 of everything above

Loading checks, in order, that the file holds at least a prefix and a digest,
that the checksum matches, that the magic is right and that the version is
supported. A checksum failure on a file shorter than its declared length is
reported as Truncated and any other as ChecksumMismatch. A corrupted byte in
the prefix is therefore a ChecksumMismatch, or Truncated when it inflates a
length field.
"""
import os
import json
import struct
import hashlib
import logging
from collections import OrderedDict

import numpy as np

from .architecture import ModelSpec
from .blocks import Model, param_shapes
from .errors import DataError, ChecksumMismatch, VersionUnsupported, Truncated
from .optim import OptimizerState
from .tensor import Tensor

_logger = logging.getLogger(__name__)

MAGIC = b'LPCK'
FORMAT_VERSION = 1
_PREFIX = struct.Struct('<4sIIQ')
_DIGEST_SIZE = hashlib.sha256().digest_size
_DTYPE = np.dtype('<f8')


class Checkpoint(object):
    """A model's spec and weights plus what is needed to resume or reproduce it.

    Args:
        model_spec: The ModelSpec of the model.
        weights: Ordered dictionary from parameter names to arrays.
        optimizer: Optional OptimizerState.
        train_config: Optional dictionary echoing the training configuration.
        rng_state: Optional numpy bit generator state dictionary.
        metadata: Optional JSON-serializable dictionary (seed, reports, ...).
        format_version: Version of the file layout. (Default: 1).

    Properties:
        * model_spec
        * weights
        * optimizer
        * train_config
        * rng_state
        * metadata
        * format_version
    """
    __slots__ = ('_model_spec', '_weights', '_optimizer', '_train_config', '_rng_state',
                 '_metadata', '_format_version')

    def __init__(self, model_spec, weights, optimizer=None, train_config=None,
                 rng_state=None, metadata=None, format_version=FORMAT_VERSION):
        assert isinstance(model_spec, ModelSpec), \
            'Expected ModelSpec. Got {}.'.format(type(model_spec))
        self._model_spec = model_spec
        self._weights = OrderedDict(
            (k, np.array(v, dtype=np.float64)) for k, v in weights.items())
        self._optimizer = optimizer
        self._train_config = train_config
        self._rng_state = rng_state
        self._metadata = dict(metadata or {})
        self._format_version = format_version

    @property
    def model_spec(self):
        return self._model_spec

    @property
    def weights(self):
        return self._weights

    @property
    def optimizer(self):
        return self._optimizer

    @property
    def train_config(self):
        return self._train_config

    @property
    def rng_state(self):
        return self._rng_state

    @property
    def metadata(self):
        return self._metadata

    @property
    def format_version(self):
        return self._format_version

    def make_rng(self):
        """Get a numpy Generator restored to the saved rng state, or None."""
        if self._rng_state is None:
            return None
        bit_generator = getattr(np.random, self._rng_state['bit_generator'])()
        bit_generator.state = self._rng_state
        return np.random.Generator(bit_generator)

    def __repr__(self):
        return 'Checkpoint: [{}, {} arrays]'.format(self._model_spec, len(self._weights))


def checkpoint_from_model(model, optimizer=None, train_config=None, rng=None,
                          metadata=None):
    """Snapshot a Model (and optionally its optimizer and generator) as a Checkpoint.

    Args:
        model: A Model.
        optimizer: Optional OptimizerState.
        train_config: Optional TrainConfig or dictionary.
        rng: Optional numpy Generator whose state is saved.
        metadata: Optional JSON-serializable dictionary.
    """
    if train_config is not None and hasattr(train_config, 'model_dump'):
        train_config = train_config.model_dump(mode='json')
    rng_state = rng.bit_generator.state if rng is not None else None
    return Checkpoint(model.spec, model.state_dict(), optimizer, train_config,
                      rng_state, metadata)


def model_from_checkpoint(ckpt):
    """Rebuild the Model saved in a Checkpoint."""
    params = OrderedDict((k, Tensor(v.copy(), requires_grad=True))
                         for k, v in ckpt.weights.items())
    return Model(ckpt.model_spec, params)


def _manifest(arrays):
    return [[name, list(arr.shape)] for name, arr in arrays.items()]


def save_checkpoint(file_path, ckpt):
    """Write a Checkpoint to a file.

    The file is written next to its destination and moved into place, so a
    failed write never leaves a partial checkpoint behind.

    Args:
        file_path: Destination path.
        ckpt: A Checkpoint.

    Returns:
        The path of the written file.
    """
    opt = ckpt.optimizer
    opt_arrays = opt.to_arrays() if opt is not None else OrderedDict()
    header = {
        'model_spec': ckpt.model_spec.to_dict(),
        'weights': _manifest(ckpt.weights),
        'optimizer': None if opt is None else {
            'kind': opt.kind, 'step': opt.step, 'buffers': _manifest(opt_arrays)},
        'train_config': ckpt.train_config,
        'rng_state': ckpt.rng_state,
        'metadata': ckpt.metadata
    }
    header_bytes = json.dumps(header, sort_keys=True).encode('utf-8')
    payload = b''.join(
        np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
        for arr in list(ckpt.weights.values()) + list(opt_arrays.values()))
    body = _PREFIX.pack(MAGIC, ckpt.format_version, len(header_bytes), len(payload)) + \
        header_bytes + payload
    data = body + hashlib.sha256(body).digest()

    dir_name = os.path.dirname(os.path.abspath(file_path))
    if not os.path.isdir(dir_name):
        os.makedirs(dir_name)
    tmp_path = file_path + '.tmp'
    with open(tmp_path, 'wb') as fp:
        fp.write(data)
    os.replace(tmp_path, file_path)
    _logger.debug('Wrote checkpoint %s (%d bytes).', file_path, len(data))
    return file_path


def _read_arrays(payload, offset, manifest):
    arrays = OrderedDict()
    for name, shape in manifest:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + count * _DTYPE.itemsize
        arrays[name] = np.frombuffer(payload[offset:end], dtype=_DTYPE) \
            .reshape(shape).astype(np.float64)
        offset = end
    return arrays, offset


def load_checkpoint(file_path):
    """Read and verify a Checkpoint file.

    The checksum is verified before any field of the prefix is trusted.

    Raises:
        Truncated: The file is shorter than its declared content.
        ChecksumMismatch: The content, prefix included, does not match its
            SHA-256 checksum.
        VersionUnsupported: The format version is not 1.
    """
    if not os.path.isfile(file_path):
        raise DataError('Checkpoint file not found: {}'.format(file_path))
    with open(file_path, 'rb') as fp:
        data = fp.read()
    if len(data) < _PREFIX.size + _DIGEST_SIZE:
        raise Truncated('{} is too short to be a checkpoint ({} bytes).'.format(
            file_path, len(data)))
    magic, version, header_len, payload_len = _PREFIX.unpack_from(data)
    expected = _PREFIX.size + header_len + payload_len + _DIGEST_SIZE
    body, digest = data[:-_DIGEST_SIZE], data[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        if magic == MAGIC and len(data) < expected:
            raise Truncated('{} holds {} of {} bytes.'.format(
                file_path, len(data), expected))
        if magic != MAGIC:
            raise ChecksumMismatch('{} is not a checkpoint file or its magic is '
                                   'corrupted.'.format(file_path))
        raise ChecksumMismatch('{} does not match its checksum.'.format(file_path))
    if magic != MAGIC:
        raise DataError('{} is not a checkpoint file.'.format(file_path))
    if version != FORMAT_VERSION:
        raise VersionUnsupported('{} has format version {}; only version {} is '
                                 'supported.'.format(file_path, version, FORMAT_VERSION))
    if len(data) != expected:
        raise DataError('{} declares {} bytes but holds {}.'.format(
            file_path, expected, len(data)))

    start = _PREFIX.size
    header = json.loads(body[start:start + header_len].decode('utf-8'))
    payload = body[start + header_len:]
    spec = ModelSpec.from_dict(header['model_spec'])
    weights, offset = _read_arrays(payload, 0, header['weights'])
    expected_shapes = OrderedDict((k, list(v[0])) for k, v in param_shapes(spec).items())
    if OrderedDict((k, list(v.shape)) for k, v in weights.items()) != expected_shapes:
        raise DataError('Weights in {} do not match the shapes of {}.'.format(
            file_path, spec))
    optimizer = None
    if header['optimizer'] is not None:
        opt = header['optimizer']
        buffers, offset = _read_arrays(payload, offset, opt['buffers'])
        optimizer = OptimizerState.from_arrays(opt['kind'], opt['step'], buffers)
    return Checkpoint(spec, weights, optimizer, header['train_config'],
                      header['rng_state'], header['metadata'], version)
