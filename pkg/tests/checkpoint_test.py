"""Test writing and verifying model checkpoints."""
import numpy as np
import pytest

from leaf_pathology.checkpoint import Checkpoint, checkpoint_from_model, \
    model_from_checkpoint, save_checkpoint, load_checkpoint, FORMAT_VERSION
from leaf_pathology.architecture import ModelSpec
from leaf_pathology.blocks import build_model, forward
from leaf_pathology.config import TrainConfig
from leaf_pathology.optim import OptimizerState
from leaf_pathology.tensor import Tensor
from leaf_pathology.errors import DataError, ChecksumMismatch, VersionUnsupported, \
    Truncated


def _model():
    spec = ModelSpec.from_stages(4, [(2, 4, 1), (1, 8, 2)], input_resolution=8,
                                 expansion_ratio=2)
    return build_model(spec, 11)


def _saved(tmp_path, **kwargs):
    path = str(tmp_path / 'model.lpck')
    save_checkpoint(path, checkpoint_from_model(_model(), **kwargs))
    return path


def test_round_trip(tmp_path):
    """Test that a reloaded model gives bit-identical logits."""
    model = _model()
    rng = np.random.default_rng(4)
    rng.random(3)
    state = OptimizerState.for_params('adam', model.parameters())
    state.step = 7
    state.buffers['m'][0][:] = 0.5
    path = str(tmp_path / 'run' / 'model.lpck')
    save_checkpoint(path, checkpoint_from_model(
        model, state, TrainConfig(epochs=3), rng, {'seed': 4, 'note': 'unit'}))

    ckpt = load_checkpoint(path)
    assert ckpt.model_spec == model.spec
    assert ckpt.format_version == FORMAT_VERSION
    assert ckpt.metadata == {'seed': 4, 'note': 'unit'}
    assert ckpt.train_config['epochs'] == 3
    assert ckpt.optimizer.step == 7
    assert np.all(ckpt.optimizer.buffers['m'][0] == 0.5)
    assert ckpt.make_rng().random() == rng.random()

    batch = Tensor(np.random.default_rng(0).random((3, 3, 8, 8)))
    loaded = model_from_checkpoint(ckpt)
    assert np.array_equal(forward(loaded, batch).data, forward(model, batch).data)


def test_minimal_checkpoint(tmp_path):
    """Test a checkpoint without optimizer, config or generator."""
    ckpt = load_checkpoint(_saved(tmp_path))
    assert ckpt.optimizer is None and ckpt.rng_state is None
    assert ckpt.make_rng() is None
    assert ckpt.metadata == {}


def test_corrupted_byte(tmp_path):
    """Test that flipping one payload byte fails the checksum."""
    path = _saved(tmp_path)
    with open(path, 'rb') as fp:
        data = bytearray(fp.read())
    data[len(data) - 40] ^= 0xFF
    with open(path, 'wb') as fp:
        fp.write(bytes(data))
    with pytest.raises(ChecksumMismatch):
        load_checkpoint(path)


def test_corrupted_prefix(tmp_path):
    """Test that flipping a magic or version byte fails the checksum first."""
    path = _saved(tmp_path)
    with open(path, 'rb') as fp:
        original = fp.read()
    for index in (0, 3, 4, 7):
        data = bytearray(original)
        data[index] ^= 0xFF
        with open(path, 'wb') as fp:
            fp.write(bytes(data))
        with pytest.raises(ChecksumMismatch):
            load_checkpoint(path)
    with open(path, 'wb') as fp:
        fp.write(original + b'\x00')
    with pytest.raises(ChecksumMismatch):
        load_checkpoint(path)


def test_unsupported_version(tmp_path):
    """Test that other format versions are rejected."""
    model = _model()
    ckpt = Checkpoint(model.spec, model.state_dict(), format_version=FORMAT_VERSION + 1)
    path = save_checkpoint(str(tmp_path / 'v2.lpck'), ckpt)
    with pytest.raises(VersionUnsupported):
        load_checkpoint(path)


def test_truncated(tmp_path):
    """Test that files shorter than their declared length are Truncated."""
    path = _saved(tmp_path)
    with open(path, 'rb') as fp:
        data = fp.read()
    for cut in (10, len(data) - 5):
        with open(path, 'wb') as fp:
            fp.write(data[:cut])
        with pytest.raises(Truncated):
            load_checkpoint(path)


def test_not_a_checkpoint(tmp_path):
    """Test missing files and foreign files."""
    with pytest.raises(DataError):
        load_checkpoint(str(tmp_path / 'missing.lpck'))
    other = tmp_path / 'other.lpck'
    other.write_bytes(b'PNG0' + bytes(100))
    with pytest.raises(DataError):
        load_checkpoint(str(other))
