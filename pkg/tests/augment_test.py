"""Test the augmentation pipeline and its stages."""
import math

import numpy as np
import pytest

from leaf_pathology.augment import image_rng, resize, flip, shift_scale_rotate, \
    filter3x3, choose_filter, one_of, displacement_at, draw_jitters, warp_piecewise, \
    piecewise_affine, normalize, denormalize, sample_augment_plan, apply_plan, \
    apply_train_pipeline, apply_eval_pipeline, augment_batch, FILTER_KINDS
from leaf_pathology.config import AugmentConfig
from leaf_pathology.image import Image
from leaf_pathology.errors import InvalidTarget, InvalidScale, InvalidGrid, ZeroStd, \
    ConfigError


def _random_image(seed=0, size=6):
    return Image(np.random.default_rng(seed).random((size, size, 3)))


def _within_3_sigma(count, draws, p):
    sigma = math.sqrt(p * (1 - p) / draws)
    return abs(count / float(draws) - p) <= 3 * sigma


def test_resize():
    """Test identity, constant and checkerboard resizing."""
    img = _random_image()
    assert resize(img, 6) == img
    assert np.allclose(resize(Image.constant(5, 7, 0.3), 3).pixels, 0.3)
    board = Image(np.array([[0.0, 1.0], [1.0, 0.0]]))
    expected = np.array([[0.0, 0.5, 1.0], [0.5, 0.5, 0.5], [1.0, 0.5, 0.0]])
    assert np.allclose(resize(board, 3).pixels[:, :, 0], expected)
    with pytest.raises(InvalidTarget):
        resize(img, 0)


def test_flip():
    """Test that flips mirror the right axis and are involutions."""
    img = _random_image()
    for axis in ('horizontal', 'vertical'):
        assert flip(flip(img, axis), axis) == img
    pair = Image(np.array([[0.2, 0.8]]))
    assert np.array_equal(flip(pair, 'horizontal').pixels[0, :, 0], [0.8, 0.2])
    assert flip(pair, 'vertical') == pair
    with pytest.raises(ConfigError):
        flip(img, 'diagonal')


def test_shift_scale_rotate():
    """Test identity, constant invariance and a quarter turn."""
    img = _random_image()
    assert np.allclose(shift_scale_rotate(img, (0, 0), 1.0, 0.0).pixels, img.pixels,
                       atol=1e-9)
    const = Image.constant(5, 5, 0.4)
    assert np.allclose(shift_scale_rotate(const, (0.1, -0.1), 1.1, 360.0).pixels, 0.4)

    bright = np.zeros((3, 3))
    bright[0, 1] = 1.0
    turned = shift_scale_rotate(Image(bright), (0, 0), 1.0, 90.0).pixels[:, :, 0]
    expected = np.zeros((3, 3))
    expected[1, 0] = 1.0
    assert np.allclose(turned, expected, atol=1e-9)
    with pytest.raises(InvalidScale):
        shift_scale_rotate(img, (0, 0), 0.0, 0.0)


def test_filters():
    """Test the fixed kernels on constant and impulse images."""
    const = Image.constant(4, 4, 0.3)
    for kind in ('blur', 'sharpen'):
        assert np.allclose(filter3x3(const, kind).pixels, 0.3)
    assert np.allclose(filter3x3(const, 'emboss').pixels, 0.8)
    impulse = np.zeros((3, 3))
    impulse[1, 1] = 1.0
    assert filter3x3(Image(impulse), 'blur').pixels[1, 1, 0] == pytest.approx(1.0 / 9)
    sharp = filter3x3(Image(np.random.default_rng(1).random((5, 5, 3))), 'sharpen')
    assert sharp.pixels.min() >= 0 and sharp.pixels.max() <= 1
    with pytest.raises(ConfigError):
        filter3x3(const, 'median')


def test_one_of():
    """Test the uniform choice among the filters."""
    rng = np.random.default_rng(2)
    draws = 30000
    counts = {k: 0 for k in FILTER_KINDS}
    for _ in range(draws):
        counts[choose_filter(rng)] += 1
    for kind in FILTER_KINDS:
        assert abs(counts[kind] / float(draws) - 1.0 / 3) < 0.01
    const = Image.constant(4, 4, 0.3)
    out = one_of(const, image_rng(0, 0, 0))
    assert out == one_of(const, image_rng(0, 0, 0))
    assert np.allclose(out.pixels, out.pixels[0, 0, 0])


def test_piecewise_displacement():
    """Test interpolation of control point jitters."""
    rng = np.random.default_rng(3)
    jitters = rng.normal(size=(4, 4, 2))
    points = np.linspace(0.0, 6.0, 4)
    ys, xs = np.meshgrid(points, points, indexing='ij')
    assert np.allclose(displacement_at(7, 7, jitters, ys, xs), jitters, atol=1e-12)

    mid = displacement_at(7, 7, jitters, np.array([1.0]), np.array([0.0]))
    assert np.allclose(mid[0], (jitters[0, 0] + jitters[1, 0]) / 2)
    with pytest.raises(InvalidGrid):
        displacement_at(7, 7, np.zeros((1, 1, 2)), ys, xs)
    with pytest.raises(InvalidGrid):
        draw_jitters(1, 0.1, 7, 7, rng)


def test_piecewise_affine():
    """Test that zero jitter and constant images are left unchanged."""
    img = _random_image(size=7)
    assert np.allclose(piecewise_affine(img, 4, 0.0, np.random.default_rng(0)).pixels,
                       img.pixels, atol=1e-9)
    const = Image.constant(7, 7, 0.6)
    jitters = np.random.default_rng(4).normal(scale=2.0, size=(4, 4, 2))
    assert np.allclose(warp_piecewise(const, jitters).pixels, 0.6)


def test_normalize():
    """Test normalization identities and errors."""
    img = _random_image()
    assert np.allclose(normalize(img, (0, 0, 0), (1, 1, 1)).pixels, img.pixels)
    mean, std = (0.485, 0.456, 0.406), (0.229, 0.224, 0.225)
    flat = Image(np.broadcast_to(np.array(mean), (3, 3, 3)))
    assert np.allclose(normalize(flat, mean, std).pixels, 0.0)
    back = denormalize(normalize(img, mean, std), mean, std)
    assert np.allclose(back.pixels, img.pixels, atol=1e-12)
    with pytest.raises(ZeroStd):
        normalize(img, mean, (0.2, 0.0, 0.2))
    with pytest.raises(ConfigError):
        normalize(img, (0.5,), (0.2,))


def test_stage_frequencies():
    """Test how often every stage fires over many seeds."""
    cfg = AugmentConfig(target_size=8)
    draws = 10000
    hflips = vflips = ssrs = filters = warps = 0
    for seed in range(draws):
        plan = sample_augment_plan(cfg, image_rng(seed, 0, 0))
        hflips += plan.hflip
        vflips += plan.vflip
        filters += plan.filter is not None
        warps += plan.jitters is not None
        if plan.ssr is not None:
            ssrs += 1
            dx, dy, scale, angle = plan.ssr
            assert abs(angle) <= cfg.rotation_limit_deg
            assert abs(dx) <= cfg.shift_limit and abs(dy) <= cfg.shift_limit
            assert abs(scale - 1) <= cfg.scale_limit
    assert _within_3_sigma(hflips, draws, cfg.p_hflip)
    assert _within_3_sigma(vflips, draws, cfg.p_vflip)
    assert _within_3_sigma(ssrs, draws, cfg.p_ssr)
    assert _within_3_sigma(filters, draws, cfg.p_oneof_filter)
    assert _within_3_sigma(warps, draws, cfg.p_piecewise)


def test_train_pipeline():
    """Test determinism and the degenerate configuration of the train pipeline."""
    cfg = AugmentConfig(target_size=8)
    img = _random_image(size=10)
    a = apply_train_pipeline(img, cfg, image_rng(5, 1, 2))
    b = apply_train_pipeline(img, cfg, image_rng(5, 1, 2))
    assert a == b
    assert a.height == 8

    plain = AugmentConfig.no_augmentation(target_size=8)
    out = apply_train_pipeline(img, plain, image_rng(5, 1, 2))
    assert out == apply_eval_pipeline(img, plain)

    plan = sample_augment_plan(cfg, image_rng(5, 1, 2))
    assert apply_plan(img, plan, cfg) == a


def test_eval_pipeline():
    """Test the deterministic evaluation pipeline."""
    cfg = AugmentConfig(target_size=4)
    flat = Image(np.broadcast_to(np.array(cfg.channel_mean), (4, 4, 3)))
    assert np.allclose(apply_eval_pipeline(flat, cfg).pixels, 0.0)
    img = _random_image()
    assert apply_eval_pipeline(img, cfg) == apply_eval_pipeline(img, cfg)


def test_augment_batch():
    """Test that threaded batch augmentation matches the serial result."""
    cfg = AugmentConfig(target_size=6)
    images = [_random_image(seed) for seed in range(5)]
    serial = augment_batch(images, cfg, 3, 1, range(5))
    threaded = augment_batch(images, cfg, 3, 1, range(5), workers=3)
    assert serial == threaded
    assert serial[0] == apply_train_pipeline(images[0], cfg, image_rng(3, 1, 0))
    evals = augment_batch(images, cfg, 3, 1, range(5), train=False)
    assert evals[2] == apply_eval_pipeline(images[2], cfg)
