# coding=utf-8
"""Compound scaling of depth, width and resolution.

A single exponent phi scales depth by alpha^phi, width by beta^phi and input
resolution by gamma^phi. Since the cost of a convolution grows with
d * w^2 * r^2, coefficients with alpha * beta^2 * gamma^2 close to 2 make every
unit increase of phi roughly double the FLOPS.
"""
import math
import logging
import itertools
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

from .architecture import ModelSpec
from .errors import InvalidCoefficient, InvalidBase, EmptyResult, InvalidSpec

_logger = logging.getLogger(__name__)

ScalingCoefficients = namedtuple('ScalingCoefficients', ('alpha', 'beta', 'gamma', 'phi'))
ScalingCoefficients.__new__.__defaults__ = (1.0,)
ScalingCoefficients.__doc__ = 'Bases (alpha, beta, gamma >= 1) and exponent phi >= 0.'

ScaledDims = namedtuple('ScaledDims', ('d', 'w', 'r'))
ScaledDims.__doc__ = 'Multipliers for depth (d), width (w) and resolution (r).'

UNIT_DIMS = ScaledDims(1.0, 1.0, 1.0)


def check_coefficients(c):
    """Raise InvalidCoefficient unless alpha, beta, gamma >= 1 and phi >= 0."""
    for name in ('alpha', 'beta', 'gamma'):
        value = getattr(c, name)
        if not value >= 1:
            raise InvalidCoefficient('{} must be >= 1. Got {}.'.format(name, value))
    if not c.phi >= 0:
        raise InvalidCoefficient('phi must be >= 0. Got {}.'.format(c.phi))


def apply_scaling(c):
    """Get the ScaledDims (alpha^phi, beta^phi, gamma^phi) of a set of coefficients."""
    check_coefficients(c)
    return ScaledDims(c.alpha ** c.phi, c.beta ** c.phi, c.gamma ** c.phi)


def constraint_value(c):
    """Get alpha * beta^2 * gamma^2, the FLOPS factor of one unit of phi."""
    return c.alpha * c.beta ** 2 * c.gamma ** 2


def flops_estimate(dims, base_flops):
    """Estimate the FLOPS of a scaled model as base_flops * d * w^2 * r^2."""
    if not base_flops > 0:
        raise InvalidBase('base_flops must be positive. Got {}.'.format(base_flops))
    return base_flops * dims.d * dims.w ** 2 * dims.r ** 2


def _grid_values(grid_step):
    count = int(math.floor(1.0 / grid_step + 1e-9))
    return [round(1.0 + k * grid_step, 10) for k in range(count + 1)]


def grid_search_coefficients(grid_step, tolerance, objective=None, workers=None):
    """Search (alpha, beta, gamma) on a grid over [1, 2]^3 at phi = 1.

    Args:
        grid_step: Positive spacing of the grid.
        tolerance: Positive tolerance on |alpha * beta^2 * gamma^2 - 2|.
        objective: Optional function from ScalingCoefficients to a score, where
            higher is better (for example a validation mean AUC). If None,
            candidates are ordered by how close their constraint is to 2.
        workers: Optional number of threads used to evaluate the objective.
            The result order does not depend on it. (Default: None).

    Returns:
        A list of ScalingCoefficients satisfying the tolerance, best first, with
        ties broken by (alpha, beta, gamma).
    """
    if not grid_step > 0:
        raise InvalidCoefficient('grid_step must be positive. Got {}.'.format(grid_step))
    if not tolerance > 0:
        raise InvalidCoefficient('tolerance must be positive. Got {}.'.format(tolerance))
    values = _grid_values(grid_step)
    candidates = []
    for alpha, beta, gamma in itertools.product(values, repeat=3):
        c = ScalingCoefficients(alpha, beta, gamma, 1.0)
        if abs(constraint_value(c) - 2.0) <= tolerance:
            candidates.append(c)
    if not candidates:
        raise EmptyResult('No grid point with step {} satisfies |constraint - 2| <= {}.'
                          .format(grid_step, tolerance))
    _logger.info('%d of %d grid points satisfy the constraint.', len(candidates),
                 len(values) ** 3)

    if objective is None:
        return sorted(candidates,
                      key=lambda c: (abs(constraint_value(c) - 2.0), c[:3]))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(objective, candidates))
    else:
        scores = [objective(c) for c in candidates]
    ranked = sorted(zip(scores, candidates), key=lambda sc: (-sc[0], sc[1][:3]))
    return [c for _, c in ranked]


def round_channels(channels, width, grow=False):
    """Scale a channel count and round it to the nearest multiple of 4 (minimum 4).

    Args:
        channels: Integer channel count before scaling.
        width: Width multiplier.
        grow: Set to True to never return fewer than channels. When the nearest
            multiple falls below channels, the next multiple up is used.
    """
    rounded = max(4, int(math.floor(channels * width / 4.0 + 0.5)) * 4)
    if grow and rounded < channels:
        rounded = int(math.ceil(max(channels * width, channels) / 4.0 - 1e-9)) * 4
    return rounded


def scale_model_spec(base, dims, grow=False):
    """Scale the depth, width and input resolution of a ModelSpec.

    Every stage gets ceil(count * d) blocks (extra blocks repeat the last block
    of the stage), every channel count is multiplied by w and rounded to a
    multiple of 4, and the resolution is round(resolution * r).

    Args:
        base: The ModelSpec to scale.
        dims: The ScaledDims to apply.
        grow: Set to True so no channel count falls below the one of base.
    """
    if not isinstance(base, ModelSpec):
        raise InvalidSpec('Expected ModelSpec. Got {}.'.format(type(base)))
    if min(dims) <= 0:
        raise InvalidSpec('Scaled dims must be positive. Got {}.'.format(tuple(dims)))
    stem = round_channels(base.stem_channels, dims.w, grow)
    resolution = max(1, int(math.floor(base.input_resolution * dims.r + 0.5)))
    if base.kind == 'baseline':
        resolution = max(8, int(math.floor(resolution / 8.0 + 0.5)) * 8)
        return ModelSpec(stem, (), base.dropout_prob, base.num_classes, resolution,
                         kind='baseline')

    blocks, prev, sizes = [], stem, []
    for stage in base.stages:
        count = max(1, int(math.ceil(len(stage) * dims.d - 1e-9)))
        sizes.append(count)
        templates = list(stage[:count]) + [stage[-1]] * (count - len(stage))
        out = round_channels(stage[0].out_channels, dims.w, grow)
        for j, tmpl in enumerate(templates):
            blocks.append(tmpl.duplicate(
                in_channels=prev, out_channels=out, stride=tmpl.stride if j == 0 else 1))
            prev = out
    return ModelSpec(stem, blocks, base.dropout_prob, base.num_classes, resolution,
                     base.kind, sizes if base.stage_sizes is not None else None)
