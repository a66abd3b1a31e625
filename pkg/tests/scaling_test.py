"""Test the compound scaling algebra and coefficient search."""
import pytest

from leaf_pathology.architecture import ModelSpec
from leaf_pathology.scaling import ScalingCoefficients, ScaledDims, UNIT_DIMS, \
    apply_scaling, constraint_value, flops_estimate, grid_search_coefficients, \
    round_channels, scale_model_spec
from leaf_pathology.blocks import count_parameters
from leaf_pathology.errors import InvalidCoefficient, InvalidBase, EmptyResult, \
    InvalidSpec


def test_apply_scaling():
    """Test the scaled depth, width and resolution multipliers."""
    dims = apply_scaling(ScalingCoefficients(1.2, 1.1, 1.15, 2))
    assert tuple(dims) == pytest.approx((1.44, 1.21, 1.3225), abs=1e-12)
    assert apply_scaling(ScalingCoefficients(1.7, 1.3, 1.9, 0)) == UNIT_DIMS
    assert apply_scaling(ScalingCoefficients(1.2, 1.1, 1.15)).d == 1.2
    with pytest.raises(InvalidCoefficient):
        apply_scaling(ScalingCoefficients(0.9, 1.1, 1.15, 1))
    with pytest.raises(InvalidCoefficient):
        apply_scaling(ScalingCoefficients(1.2, 1.1, 1.15, -1))


def test_constraint_and_flops():
    """Test the constraint value and the FLOPS model."""
    c = ScalingCoefficients(1.2, 1.1, 1.15)
    assert constraint_value(c) == pytest.approx(1.9203, abs=5e-5)
    assert constraint_value(ScalingCoefficients(2, 1, 1)) == 2
    assert flops_estimate(UNIT_DIMS, 3.5e6) == 3.5e6
    assert flops_estimate(ScaledDims(2, 1, 1), 10) == 20
    with pytest.raises(InvalidBase):
        flops_estimate(UNIT_DIMS, 0)


def test_flops_ratio():
    """Test that raising phi by one multiplies the FLOPS by the constraint value."""
    for alpha, beta, gamma in [(1.2, 1.1, 1.15), (2, 1, 1), (1.05, 1.3, 1.1)]:
        for phi in (0, 1, 2.5, 4):
            lo = flops_estimate(apply_scaling(
                ScalingCoefficients(alpha, beta, gamma, phi)), 1e6)
            hi = flops_estimate(apply_scaling(
                ScalingCoefficients(alpha, beta, gamma, phi + 1)), 1e6)
            c = ScalingCoefficients(alpha, beta, gamma)
            assert hi / lo == pytest.approx(constraint_value(c), rel=1e-12)
            assert abs(hi / lo - 2) <= abs(constraint_value(c) - 2) + 1e-12


def test_grid_search():
    """Test filtering, ordering and errors of the coefficient grid search."""
    ranked = grid_search_coefficients(0.05, 0.01)
    assert tuple(ranked[0][:3]) == (2.0, 1.0, 1.0)
    for c in ranked:
        assert abs(constraint_value(c) - 2) <= 0.01
        assert c.phi == 1.0
    gaps = [abs(constraint_value(c) - 2) for c in ranked]
    assert gaps == sorted(gaps)
    assert ranked == grid_search_coefficients(0.05, 0.01)

    target = (1.2, 1.1, 1.15)
    assert target not in [tuple(c[:3]) for c in grid_search_coefficients(0.05, 0.05)]
    assert target in [tuple(c[:3]) for c in grid_search_coefficients(0.05, 0.1)]

    with pytest.raises(EmptyResult):
        grid_search_coefficients(0.3, 1e-9)
    with pytest.raises(InvalidCoefficient):
        grid_search_coefficients(0, 0.1)
    with pytest.raises(InvalidCoefficient):
        grid_search_coefficients(0.1, -1)


def test_grid_search_objective():
    """Test ranking by an objective with and without worker threads."""
    ranked = grid_search_coefficients(0.1, 0.1, objective=lambda c: -c.gamma)
    gammas = [c.gamma for c in ranked]
    assert gammas == sorted(gammas)
    threaded = grid_search_coefficients(0.1, 0.1, objective=lambda c: -c.gamma,
                                        workers=3)
    assert threaded == ranked


def test_round_channels():
    """Test rounding of scaled channel counts to multiples of four."""
    assert round_channels(16, 1.21) == 20
    assert round_channels(16, 1.0) == 16
    assert round_channels(2, 1.0) == 4
    assert round_channels(9, 1.0) == 8
    assert round_channels(9, 1.0, grow=True) == 12
    assert round_channels(9, 1.1, grow=True) == 12
    assert round_channels(16, 1.21, grow=True) == 20


def test_scale_model_spec():
    """Test scaling of a stage-structured spec."""
    base = ModelSpec.from_stages(16, [(2, 16, 1), (2, 32, 2)], input_resolution=32)
    scaled = scale_model_spec(base, ScaledDims(1.44, 1.21, 1.3225))
    assert [len(s) for s in scaled.stages] == [3, 3]
    assert scaled.stem_channels == 20
    assert scaled.blocks[0].out_channels == 20
    assert scaled.blocks[-1].out_channels == 40
    assert scaled.input_resolution == 42
    assert [b.stride for b in scaled.blocks] == [1, 1, 1, 2, 1, 1]
    assert count_parameters(scaled) > count_parameters(base)
    assert scale_model_spec(base, UNIT_DIMS) == base

    baseline = ModelSpec(8, input_resolution=32, kind='baseline')
    assert scale_model_spec(baseline, ScaledDims(1, 1, 1.3225)).input_resolution == 40
    with pytest.raises(InvalidSpec):
        scale_model_spec(base, ScaledDims(1, 0, 1))


def test_stage_boundaries():
    """Test that stages of equal channels and stride 1 stay apart."""
    base = ModelSpec.from_stages(8, [(1, 8, 1), (1, 8, 1)], input_resolution=16)
    assert base.stage_sizes == (1, 1)
    assert [len(s) for s in base.stages] == [1, 1]
    deeper = scale_model_spec(base, ScaledDims(1.5, 1, 1))
    assert [len(s) for s in deeper.stages] == [2, 2]
    assert ModelSpec.from_dict(deeper.to_dict()).stage_sizes == (2, 2)

    merged = ModelSpec(8, base.blocks, input_resolution=16)
    assert merged.stage_sizes is None
    assert [len(s) for s in merged.stages] == [2]
    with pytest.raises(InvalidSpec):
        ModelSpec(8, base.blocks, input_resolution=16, stage_sizes=[1])
