# coding=utf-8
"""Stochastic training augmentation and deterministic evaluation preprocessing.

Training images go through, in this order: resize, horizontal flip, vertical
flip, shift-scale-rotate, one of emboss/sharpen/blur, piecewise affine and
channel-wise normalization. Every stage after the resize fires with its own
probability. Validation and test images are only resized and normalized.

All random decisions for an image are drawn up front into an AugmentPlan from
a per-image generator, so the output depends only on (image, config, seed,
epoch, index) and never on the order in which workers process images.
"""
import math
import logging
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import ndimage

from .image import Image
from .errors import InvalidTarget, InvalidScale, InvalidGrid, ZeroStd, ConfigError

_logger = logging.getLogger(__name__)

AXES = ('horizontal', 'vertical')
FILTER_KINDS = ('emboss', 'sharpen', 'blur')
BORDER_MODE = 'mirror'
EMBOSS_OFFSET = 0.5

KERNELS = {
    'sharpen': np.array([[0., -1., 0.], [-1., 5., -1.], [0., -1., 0.]]),
    'blur': np.full((3, 3), 1.0 / 9.0),
    'emboss': np.array([[-2., -1., 0.], [-1., 1., 1.], [0., 1., 2.]])
}

AugmentPlan = namedtuple('AugmentPlan', ('hflip', 'vflip', 'ssr', 'filter', 'jitters'))
AugmentPlan.__doc__ = """Every random decision for one training image.

ssr is None or (dx, dy, scale, angle_deg), filter is None or a FILTER_KINDS
value and jitters is None or a grid x grid x 2 array of (dy, dx) pixel offsets.
"""


def image_rng(seed, epoch, index):
    """Get the independent generator of one image in one epoch."""
    return np.random.default_rng([int(seed), int(epoch), int(index)])


def _axis_taps(n_in, n_out):
    # half-pixel centers, clamped to the edge pixels
    src = (np.arange(n_out) + 0.5) * (n_in / float(n_out)) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize(img, target):
    """Bilinearly resize an image to target x target.

    Args:
        img: An Image.
        target: Positive output height and width.
    """
    if target < 1:
        raise InvalidTarget('Resize target must be >= 1. Got {}.'.format(target))
    px = img.pixels
    lo, hi, w = _axis_taps(img.height, target)
    rows = px[lo] * (1.0 - w)[:, None, None] + px[hi] * w[:, None, None]
    lo, hi, w = _axis_taps(img.width, target)
    out = rows[:, lo] * (1.0 - w)[None, :, None] + rows[:, hi] * w[None, :, None]
    return Image(out)


def flip(img, axis):
    """Mirror an image left-right (horizontal) or top-bottom (vertical)."""
    if axis == 'horizontal':
        return Image(img.pixels[:, ::-1])
    if axis == 'vertical':
        return Image(img.pixels[::-1])
    raise ConfigError('Flip axis must be one of {}. Got "{}".'.format(AXES, axis))


def _sample(img, ys, xs):
    coords = np.stack([ys, xs])
    channels = [ndimage.map_coordinates(img.pixels[:, :, c], coords, order=1,
                                        mode=BORDER_MODE)
                for c in range(img.channels)]
    return Image(np.stack(channels, axis=-1))


def shift_scale_rotate(img, shift, scale, angle_deg):
    """Warp an image by one affine map about its center.

    A pixel at p moves to s * R(angle) * (p - c) + c + t, where c is the image
    center, positive angles turn the image counter-clockwise and t is the shift
    expressed in pixels. Output pixels are sampled bilinearly from the inverse
    map with mirrored borders.

    Args:
        img: An Image.
        shift: (dx, dy) translation as fractions of the width and height.
        scale: Positive zoom factor.
        angle_deg: Rotation angle in degrees.
    """
    if not scale > 0:
        raise InvalidScale('Scale must be positive. Got {}.'.format(scale))
    h, w = img.height, img.width
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ty, tx = shift[1] * h, shift[0] * w
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing='ij')
    yr = (yy - cy - ty) / scale
    xr = (xx - cx - tx) / scale
    xs = xr * cos_t - yr * sin_t + cx
    ys = xr * sin_t + yr * cos_t + cy
    return _sample(img, ys, xs)


def filter3x3(img, kind):
    """Apply the fixed emboss, sharpen or blur kernel to every channel.

    Borders are mirrored and the result is clamped to [0, 1]. Emboss output is
    lifted by a 0.5 gray offset before clamping.
    """
    try:
        kernel = KERNELS[kind]
    except KeyError:
        raise ConfigError('Filter must be one of {}. Got "{}".'.format(FILTER_KINDS, kind))
    out = np.stack([ndimage.correlate(img.pixels[:, :, c], kernel, mode=BORDER_MODE)
                    for c in range(img.channels)], axis=-1)
    if kind == 'emboss':
        out = out + EMBOSS_OFFSET
    return Image(np.clip(out, 0.0, 1.0))


def choose_filter(rng):
    """Pick one of FILTER_KINDS uniformly."""
    return FILTER_KINDS[int(rng.integers(len(FILTER_KINDS)))]


def one_of(img, rng):
    """Apply exactly one uniformly chosen filter from FILTER_KINDS."""
    return filter3x3(img, choose_filter(rng))


def _control_points(size, grid):
    return np.linspace(0.0, size - 1.0, grid)


def _cell_coords(values, points):
    grid = len(points)
    step = points[1] - points[0]
    if step <= 0:
        return np.zeros(values.shape, dtype=np.intp), np.zeros(values.shape)
    cell = np.minimum(np.floor(values / step).astype(np.intp), grid - 2)
    return cell, (values - points[cell]) / step


def displacement_at(height, width, jitters, ys, xs):
    """Interpolate control point jitters at arbitrary pixel coordinates.

    Each grid cell is split along its anti-diagonal into two triangles and the
    displacement is affine inside each triangle.

    Args:
        height: Image height.
        width: Image width.
        jitters: A grid x grid x 2 array of (dy, dx) control point offsets.
        ys: Array of row coordinates.
        xs: Array of column coordinates, same shape as ys.

    Returns:
        An array of shape ys.shape + (2,) with the (dy, dx) displacement.
    """
    jitters = np.asarray(jitters, dtype=np.float64)
    grid = jitters.shape[0]
    if grid < 2 or jitters.shape != (grid, grid, 2):
        raise InvalidGrid('Jitters must have shape G x G x 2 with G >= 2. Got {}.'.format(
            jitters.shape))
    i, u = _cell_coords(np.asarray(ys, dtype=np.float64), _control_points(height, grid))
    j, v = _cell_coords(np.asarray(xs, dtype=np.float64), _control_points(width, grid))
    p00, p10 = jitters[i, j], jitters[i + 1, j]
    p01, p11 = jitters[i, j + 1], jitters[i + 1, j + 1]
    u, v = u[..., None], v[..., None]
    lower = p00 + u * (p10 - p00) + v * (p01 - p00)
    upper = p11 + (1.0 - u) * (p01 - p11) + (1.0 - v) * (p10 - p11)
    return np.where(u + v <= 1.0, lower, upper)


def piecewise_displacement_field(height, width, jitters):
    """Get the 2 x H x W (dy, dx) displacement of every pixel."""
    yy, xx = np.meshgrid(np.arange(height, dtype=np.float64),
                         np.arange(width, dtype=np.float64), indexing='ij')
    return np.moveaxis(displacement_at(height, width, jitters, yy, xx), -1, 0)


def draw_jitters(grid, sigma, height, width, rng):
    """Draw independent Gaussian control point offsets.

    sigma is a fraction of the image size. Row offsets scale with the height
    and column offsets with the width.
    """
    if grid < 2:
        raise InvalidGrid('Piecewise affine grid must be >= 2. Got {}.'.format(grid))
    if sigma < 0:
        raise ConfigError('Piecewise affine sigma must be >= 0. Got {}.'.format(sigma))
    unit = rng.normal(0.0, 1.0, size=(grid, grid, 2))
    return unit * (sigma * np.array([height, width], dtype=np.float64))


def warp_piecewise(img, jitters):
    """Warp an image with the displacement field of a set of jitters."""
    field = piecewise_displacement_field(img.height, img.width, jitters)
    yy, xx = np.meshgrid(np.arange(img.height, dtype=np.float64),
                         np.arange(img.width, dtype=np.float64), indexing='ij')
    return _sample(img, yy + field[0], xx + field[1])


def piecewise_affine(img, grid, sigma, rng):
    """Jitter a grid x grid lattice of control points and warp the image with it.

    Args:
        img: An Image.
        grid: Number of control points per side (>= 2).
        sigma: Standard deviation of the jitter as a fraction of the image size.
        rng: A numpy Generator.
    """
    return warp_piecewise(img, draw_jitters(grid, sigma, img.height, img.width, rng))


def normalize(img, mean, std):
    """Subtract a per-channel mean and divide by a per-channel std. No clamping."""
    mean, std = _channel_stats(img, mean, std)
    return Image((img.pixels - mean) / std)


def denormalize(img, mean, std):
    """Undo normalize."""
    mean, std = _channel_stats(img, mean, std)
    return Image(img.pixels * std + mean)


def _channel_stats(img, mean, std):
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if mean.shape != (img.channels,) or std.shape != (img.channels,):
        raise ConfigError('Expected {} channel statistics. Got mean {} and std {}.'.format(
            img.channels, mean.shape, std.shape))
    if np.any(std <= 0):
        raise ZeroStd('Channel std must be positive. Got {}.'.format(std.tolist()))
    return mean, std


def sample_augment_plan(cfg, rng, size=None):
    """Draw every random decision of the training pipeline for one image.

    Args:
        cfg: An AugmentConfig.
        rng: A numpy Generator.
        size: Side of the resized image, used to scale the piecewise jitter.
            (Default: cfg.target_size).
    """
    size = cfg.target_size if size is None else size
    hflip = bool(rng.random() < cfg.p_hflip)
    vflip = bool(rng.random() < cfg.p_vflip)
    ssr = None
    if rng.random() < cfg.p_ssr:
        dx, dy = rng.uniform(-cfg.shift_limit, cfg.shift_limit, size=2)
        scale = 1.0 + rng.uniform(-cfg.scale_limit, cfg.scale_limit)
        angle = rng.uniform(-cfg.rotation_limit_deg, cfg.rotation_limit_deg)
        ssr = (float(dx), float(dy), float(scale), float(angle))
    filter_kind = choose_filter(rng) if rng.random() < cfg.p_oneof_filter else None
    jitters = None
    if rng.random() < cfg.p_piecewise:
        jitters = draw_jitters(cfg.piecewise_grid, cfg.piecewise_sigma, size, size, rng)
    return AugmentPlan(hflip, vflip, ssr, filter_kind, jitters)


def apply_plan(img, plan, cfg):
    """Run the training pipeline with decisions fixed by an AugmentPlan."""
    out = resize(img, cfg.target_size)
    if plan.hflip:
        out = flip(out, 'horizontal')
    if plan.vflip:
        out = flip(out, 'vertical')
    if plan.ssr is not None:
        dx, dy, scale, angle = plan.ssr
        out = shift_scale_rotate(out, (dx, dy), scale, angle)
    if plan.filter is not None:
        out = filter3x3(out, plan.filter)
    if plan.jitters is not None:
        out = warp_piecewise(out, plan.jitters)
    return normalize(out, cfg.channel_mean, cfg.channel_std)


def apply_train_pipeline(img, cfg, rng):
    """Augment one training image.

    Args:
        img: An Image with values in [0, 1].
        cfg: An AugmentConfig.
        rng: A numpy Generator used only by this image.
    """
    return apply_plan(img, sample_augment_plan(cfg, rng), cfg)


def apply_eval_pipeline(img, cfg):
    """Resize and normalize an image without consuming any randomness."""
    return normalize(resize(img, cfg.target_size), cfg.channel_mean, cfg.channel_std)


def augment_batch(images, cfg, seed, epoch, indices, train=True, workers=None):
    """Preprocess several images, optionally on a thread pool.

    Args:
        images: A list of Images.
        cfg: An AugmentConfig.
        seed: Global seed.
        epoch: Epoch number, mixed into every per-image generator.
        indices: Dataset index of every image, mixed into its generator.
        train: Set to False to apply the evaluation pipeline. (Default: True).
        workers: Optional number of threads. Results do not depend on it.

    Returns:
        A list of Images in the order of the input.
    """
    if train:
        def _one(pair):
            img, index = pair
            return apply_train_pipeline(img, cfg, image_rng(seed, epoch, index))
    else:
        def _one(pair):
            return apply_eval_pipeline(pair[0], cfg)
    pairs = list(zip(images, indices))
    if workers and workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_one, pairs))
    return [_one(p) for p in pairs]
