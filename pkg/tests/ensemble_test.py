"""Test probability-averaging ensembles."""
import numpy as np
import pytest

from leaf_pathology.ensemble import Ensemble, ensemble_predict, evaluate_ensemble
from leaf_pathology.architecture import ModelSpec
from leaf_pathology.blocks import build_model
from leaf_pathology.config import AugmentConfig
from leaf_pathology.dataset import make_synthetic
from leaf_pathology.optim import predict_images, default_augment_config
from leaf_pathology.errors import EmptyEnsemble, ClassCountMismatch, ConfigError


def _model(seed=0, resolution=8, num_classes=4):
    spec = ModelSpec.from_stages(4, [(1, 4, 1)], num_classes=num_classes,
                                 input_resolution=resolution, expansion_ratio=2)
    return build_model(spec, seed)


def _constant_model(logits):
    model = _model()
    model.params['head.w'].data[:] = 0.0
    model.params['head.b'].data[:] = logits
    return model


def _images(count=5):
    return list(make_synthetic(count, size=10, seed=3).images)


def test_single_member():
    """Test that a single member ensemble predicts like the member."""
    model = _model()
    images = _images()
    expected = predict_images(model, images, default_augment_config(model.spec))
    assert np.allclose(ensemble_predict(Ensemble([model]), images), expected,
                       atol=1e-15)


def test_identical_members():
    """Test that averaging copies of a model changes nothing."""
    model = _model()
    images = _images()
    single = ensemble_predict(Ensemble([model]), images)
    double = ensemble_predict(Ensemble([model, model.duplicate()]), images)
    assert np.allclose(double, single, atol=1e-12)


def test_average_of_confident_members():
    """Test the mean of two members that are sure of different classes."""
    first = _constant_model([60.0, 0.0, 0.0, 0.0])
    second = _constant_model([0.0, 60.0, 0.0, 0.0])
    preds = ensemble_predict(Ensemble([first, second]), _images(2))
    assert np.allclose(preds, [[0.5, 0.5, 0.0, 0.0]] * 2, atol=1e-12)
    weighted = ensemble_predict(Ensemble([first, second], [0.25, 0.75]), _images(2))
    assert np.allclose(weighted[0], [0.25, 0.75, 0.0, 0.0], atol=1e-12)


def test_member_order():
    """Test that reordering members leaves predictions unchanged."""
    members = [_model(0), _model(1), _model(2, resolution=12)]
    images = _images()
    preds = ensemble_predict(Ensemble(members), images)
    reordered = ensemble_predict(Ensemble(members[::-1]), images)
    assert np.allclose(preds, reordered, atol=1e-12)
    assert np.allclose(preds.sum(axis=1), 1.0, atol=1e-9)
    threaded = ensemble_predict(Ensemble(members), images, workers=3)
    assert np.array_equal(threaded, preds)
    assert ensemble_predict(Ensemble(members), []).shape == (0, 4)


def test_shared_normalization():
    """Test that a shared augment config is resized for every member."""
    members = [_model(0), _model(1, resolution=12)]
    cfg = AugmentConfig(target_size=99)
    preds = ensemble_predict(Ensemble(members), _images(), cfg)
    assert preds.shape == (5, 4)


def test_ensemble_errors():
    """Test validation of members and weights."""
    with pytest.raises(EmptyEnsemble):
        Ensemble([])
    with pytest.raises(ClassCountMismatch):
        Ensemble([_model(), _model(num_classes=3)])
    with pytest.raises(ConfigError):
        Ensemble([_model(), _model(1)], [0.5])
    with pytest.raises(ConfigError):
        Ensemble([_model(), _model(1)], [0.7, 0.7])
    with pytest.raises(ConfigError):
        Ensemble([_model(), _model(1)], [1.5, -0.5])


def test_evaluate_ensemble():
    """Test the report of an ensemble on a labeled set."""
    labeled = make_synthetic(8, size=8)
    ens = Ensemble([_model(0), _model(1)])
    report = evaluate_ensemble(ens, labeled)
    assert report.confusion.sum() == 8
    assert 0 <= report.mean_auc <= 1
    assert len(ens) == 2 and ens.num_classes == 4
