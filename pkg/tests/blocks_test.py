"""Test the architecture descriptions, blocks and classifier."""
import math

import numpy as np
import pytest

from leaf_pathology.architecture import BlockConfig, ModelSpec
from leaf_pathology.blocks import Mode, Model, build_model, build_baseline, \
    count_parameters, param_shapes, stochastic_depth, dropout, se_block, \
    inverted_residual, forward, predict_proba
from leaf_pathology.metrics import softmax_cross_entropy
from leaf_pathology.tensor import Tensor, grad_check, tensor_sum
from leaf_pathology.errors import InvalidSpec, InvalidProbability, ShapeMismatch


def _toy_spec(**kwargs):
    return ModelSpec.from_stages(4, [(2, 4, 1), (1, 8, 2)], input_resolution=8,
                                 expansion_ratio=2, **kwargs)


def test_block_config():
    """Test BlockConfig properties, validation and dictionary round trip."""
    blk = BlockConfig(8, 16, expansion_ratio=4, se_ratio=0.25, stride=2)
    assert blk.expanded_channels == 32
    assert blk.se_channels == 2
    assert not blk.has_skip
    assert BlockConfig(8, 8).has_skip
    assert BlockConfig.from_dict(blk.to_dict()) == blk
    assert blk.duplicate(stride=1).stride == 1
    with pytest.raises(InvalidSpec):
        BlockConfig(8, 8, stride=3)
    with pytest.raises(InvalidSpec):
        BlockConfig(8, 8, expansion_ratio=0.5)
    with pytest.raises(InvalidSpec):
        BlockConfig(0, 8)
    with pytest.raises(InvalidSpec):
        BlockConfig(8, 8, survival_prob=1.5)


def test_model_spec():
    """Test ModelSpec validation, stages and serialization."""
    spec = _toy_spec()
    assert len(spec.blocks) == 3
    assert [len(s) for s in spec.stages] == [2, 1]
    assert spec.head_channels == 8
    assert ModelSpec.from_dict(spec.to_dict()) == spec
    assert spec.duplicate() == spec
    noisy = spec.with_noise(dropout_prob=0.5, survival_prob=0.5)
    assert noisy.dropout_prob == 0.5
    assert all(b.survival_prob == 0.5 for b in noisy.blocks)
    with pytest.raises(InvalidSpec):
        ModelSpec(4, [BlockConfig(8, 8)])
    with pytest.raises(InvalidSpec):
        ModelSpec(4, num_classes=1)
    with pytest.raises(InvalidSpec):
        ModelSpec(4, dropout_prob=1.0)
    with pytest.raises(InvalidSpec):
        ModelSpec(4, kind='vgg')


def test_parameter_count():
    """Test the parameter count of a small spec against a hand computation."""
    spec = ModelSpec(8, [BlockConfig(8, 16, 4, 0.25, 0.8, 2)])
    stem = 8 * 3 * 3 * 3 + 8
    expand = 32 * 8 + 32
    depthwise = 32 * 9 + 32
    squeeze = 32 * 2 + 2 + 2 * 32 + 32
    project = 16 * 32 + 16
    head = 16 * 4 + 4
    assert count_parameters(spec) == stem + expand + depthwise + squeeze + project + head
    assert build_model(spec, 0).parameter_count == count_parameters(spec)
    assert count_parameters(ModelSpec(8)) == stem + 8 * 4 + 4


def test_deeper_spec_has_more_parameters():
    """Test that repeating blocks strictly increases the parameter count."""
    shallow = ModelSpec.from_stages(8, [(1, 8, 1), (1, 16, 2)])
    deep = ModelSpec.from_stages(8, [(2, 8, 1), (2, 16, 2)])
    assert count_parameters(deep) > count_parameters(shallow)


def test_build_model():
    """Test initialization determinism and the minimal model."""
    spec = _toy_spec()
    a, b = build_model(spec, 7), build_model(spec, 7)
    for k in a.params:
        assert np.array_equal(a.params[k].data, b.params[k].data)
    assert list(a.params) == list(param_shapes(spec))
    assert np.all(a.params['stem.b'].data == 0)
    c = build_model(spec, 8)
    assert not np.array_equal(a.params['stem.w'].data, c.params['stem.w'].data)

    minimal = build_model(ModelSpec(4, input_resolution=8), 0)
    logits = forward(minimal, Tensor(np.random.default_rng(0).random((3, 3, 8, 8))))
    assert logits.shape == (3, 4)
    with pytest.raises(InvalidSpec):
        Model(spec, minimal.params)


def test_model_state():
    """Test state_dict, load_state_dict and duplicate."""
    model = build_model(_toy_spec(), 1)
    state = model.state_dict()
    copy = model.duplicate()
    model.params['head.w'].data[:] = 0.0
    assert not np.array_equal(copy.params['head.w'].data, model.params['head.w'].data)
    model.load_state_dict(state)
    assert np.array_equal(copy.params['head.w'].data, model.params['head.w'].data)


def test_se_block():
    """Test identity and half gating of squeeze-and-excitation."""
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(2, 4, 3, 3)))
    weights = {
        'reduce_w': Tensor(rng.normal(size=(4, 1))),
        'reduce_b': Tensor(np.zeros(1)),
        'expand_w': Tensor(np.zeros((1, 4))),
        'expand_b': Tensor(np.full(4, 100.0))
    }
    assert np.array_equal(se_block(x, weights).data, x.data)
    weights['expand_b'] = Tensor(np.zeros(4))
    const = Tensor(np.full((1, 4, 2, 2), 2.0))
    assert np.allclose(se_block(const, weights).data, 1.0)
    with pytest.raises(ShapeMismatch):
        se_block(Tensor(np.ones((1, 3, 2, 2))), weights)
    with pytest.raises(ShapeMismatch):
        se_block(x, weights, se_ratio=0.5)


def test_se_block_gates_and_gradient():
    """Test that gates stay in (0, 1) and the SE gradient matches finite differences."""
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(2, 4, 3, 3)))
    weights = {
        'reduce_w': Tensor(rng.normal(size=(4, 2))),
        'reduce_b': Tensor(rng.normal(size=2)),
        'expand_w': Tensor(rng.normal(size=(2, 4))),
        'expand_b': Tensor(rng.normal(size=4))
    }
    out = se_block(x, weights).data
    assert np.all(np.abs(out) <= np.abs(x.data))
    w = Tensor(rng.normal(size=(2, 4, 3, 3)))
    for name in ('reduce_w', 'expand_w', 'expand_b'):
        assert grad_check(lambda t: tensor_sum(se_block(x, weights) * w),
                          weights[name]) < 1e-4
    assert grad_check(lambda t: tensor_sum(se_block(t, weights) * w), x) < 1e-4


def _block_weights(cfg, rng, zero_project=False):
    model = build_model(ModelSpec(cfg.in_channels, [cfg], input_resolution=8), rng)
    weights = {k[len('blocks.0.'):]: v for k, v in model.params.items()
               if k.startswith('blocks.0.')}
    if zero_project:
        weights['project.w'].data[:] = 0.0
    return weights


def test_inverted_residual():
    """Test the pure skip case, stride 2 shapes and the block gradient."""
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(2, 4, 6, 6)))
    cfg = BlockConfig(4, 4, expansion_ratio=1, survival_prob=1.0)
    out = inverted_residual(x, cfg, _block_weights(cfg, 0, zero_project=True),
                            Mode.Train, rng)
    assert np.array_equal(out.data, x.data)

    cfg2 = BlockConfig(4, 8, expansion_ratio=2, stride=2)
    out = inverted_residual(x, cfg2, _block_weights(cfg2, 0), Mode.Eval, None)
    assert out.shape == (2, 8, 3, 3)
    with pytest.raises(ShapeMismatch):
        inverted_residual(Tensor(np.ones((1, 3, 6, 6))), cfg2, _block_weights(cfg2, 0),
                          Mode.Eval, None)

    cfg3 = BlockConfig(4, 4, expansion_ratio=2, survival_prob=0.8)
    weights = _block_weights(cfg3, 3)
    w = Tensor(rng.normal(size=(2, 4, 6, 6)))
    for name in ('expand.w', 'dw.w', 'project.w'):
        assert grad_check(lambda t: tensor_sum(
            inverted_residual(x, cfg3, weights, Mode.Eval, None) * w),
            weights[name]) < 1e-4


def test_stochastic_depth():
    """Test certain survival, certain drop and expectation preservation."""
    rng = np.random.default_rng(4)
    residual = Tensor(np.full((1, 2, 2, 2), 3.0))
    assert stochastic_depth(residual, 1.0, Mode.Train, rng) is residual
    assert np.all(stochastic_depth(residual, 0.0, Mode.Train, rng).data == 0)
    assert np.allclose(stochastic_depth(residual, 0.8, Mode.Eval, None).data, 2.4)
    with pytest.raises(InvalidProbability):
        stochastic_depth(residual, 1.2, Mode.Train, rng)

    draws = 10000
    p = 0.8
    values = [stochastic_depth(Tensor([3.0]), p, Mode.Train, rng).item()
              for _ in range(draws)]
    stderr = 3.0 * math.sqrt(p * (1 - p) / draws)
    assert abs(np.mean(values) - 3.0 * p) < 3 * stderr


def test_dropout():
    """Test identity cases and expectation preservation of inverted dropout."""
    rng = np.random.default_rng(5)
    x = Tensor(np.full(10000, 2.0))
    assert dropout(x, 0.0, Mode.Train, rng) is x
    assert dropout(x, 0.5, Mode.Eval, rng) is x
    with pytest.raises(InvalidProbability):
        dropout(x, 1.0, Mode.Train, rng)
    with pytest.raises(InvalidProbability):
        dropout(x, -0.1, Mode.Train, rng)
    p = 0.2
    out = dropout(x, p, Mode.Train, rng).data
    assert set(np.unique(out)) <= {0.0, 2.0 / (1 - p)}
    stderr = 2.0 * math.sqrt(p / (1 - p)) / math.sqrt(x.size)
    assert abs(out.mean() - 2.0) < 3 * stderr


def test_forward():
    """Test shapes, determinism and mode handling of the forward pass."""
    model = build_model(_toy_spec(), 0)
    batch = Tensor(np.random.default_rng(1).random((5, 3, 8, 8)))
    a, b = forward(model, batch), forward(model, batch)
    assert a.shape == (5, 4)
    assert np.array_equal(a.data, b.data)
    probs = predict_proba(model, batch)
    assert np.allclose(probs.sum(axis=1), 1.0)
    with pytest.raises(ShapeMismatch):
        forward(model, Tensor(np.ones((1, 3, 9, 9))))
    with pytest.raises(ValueError):
        forward(model, batch, Mode.Train)

    assert model.noise_draws == 0
    forward(model, batch, Mode.Train, np.random.default_rng(0))
    assert model.noise_draws > 0


def test_end_to_end_gradient():
    """Test the gradient of the loss through a two-block model."""
    spec = ModelSpec.from_stages(4, [(2, 4, 1)], dropout_prob=0.0, input_resolution=6,
                                 expansion_ratio=2)
    model = build_model(spec, 3)
    rng = np.random.default_rng(3)
    batch = Tensor(rng.random((2, 3, 6, 6)))
    targets = np.eye(4)[[0, 2]]

    def loss(_):
        return softmax_cross_entropy(forward(model, batch), targets)
    for name in ('stem.b', 'blocks.1.dw.b', 'head.w'):
        assert grad_check(loss, model.params[name]) < 1e-4


def test_baseline():
    """Test the three-layer convolutional baseline."""
    model = build_baseline(channels=4, input_resolution=16, rng=0)
    assert model.spec.kind == 'baseline'
    out = forward(model, Tensor(np.random.default_rng(0).random((2, 3, 16, 16))))
    assert out.shape == (2, 4)
    with pytest.raises(InvalidSpec):
        build_baseline(input_resolution=12)
