"""Test float images and their file conversion."""
import numpy as np
import pytest
from PIL import Image as PILImage

from leaf_pathology.image import Image, images_to_batch
from leaf_pathology.errors import DataError, UnsupportedImageFormat


def test_image_init():
    """Test the Image constructor and its properties."""
    img = Image(np.zeros((4, 5, 3)))
    assert (img.height, img.width, img.channels) == (4, 5, 3)
    assert Image(np.zeros((2, 2))).channels == 1
    assert Image.constant(2, 3, 0.5) == Image(np.full((2, 3, 3), 0.5))
    with pytest.raises(ValueError):
        img.pixels[0, 0, 0] = 1.0
    with pytest.raises(DataError):
        Image(np.zeros((0, 2, 3)))
    with pytest.raises(DataError):
        Image(np.full((2, 2, 3), np.nan))


def test_image_files(tmp_path):
    """Test writing and reading PNG and PPM files."""
    rng = np.random.default_rng(0)
    img = Image(np.round(rng.random((6, 7, 3)) * 255) / 255)
    for ext in ('png', 'ppm'):
        path = str(tmp_path / 'sub' / 'leaf.{}'.format(ext))
        img.to_file(path)
        back = Image.from_file(path)
        assert np.allclose(back.pixels, img.pixels, atol=1e-12)

    clipped = Image(np.full((2, 2, 3), 1.7))
    path = clipped.to_file(str(tmp_path / 'clip.png'))
    assert np.all(Image.from_file(path).pixels == 1.0)


def test_unsupported_files(tmp_path):
    """Test that other formats and garbage bytes are rejected."""
    gif = str(tmp_path / 'leaf.gif')
    PILImage.new('RGB', (3, 3)).save(gif)
    with pytest.raises(UnsupportedImageFormat):
        Image.from_file(gif)
    junk = tmp_path / 'junk.png'
    junk.write_bytes(b'not an image')
    with pytest.raises(UnsupportedImageFormat):
        Image.from_file(str(junk))


def test_only_binary_pixmaps(tmp_path):
    """Test that plain text pixmaps and graymaps are rejected and P6 is read."""
    plain = tmp_path / 'plain.ppm'
    plain.write_bytes(b'P3\n2 1\n255\n255 0 0 0 0 255\n')
    with pytest.raises(UnsupportedImageFormat):
        Image.from_file(str(plain))
    gray = str(tmp_path / 'gray.pgm')
    PILImage.new('L', (2, 2), 128).save(gray)
    with pytest.raises(UnsupportedImageFormat):
        Image.from_file(gray)
    binary = tmp_path / 'binary.ppm'
    binary.write_bytes(b'P6\n2 1\n255\n' + bytes([255, 0, 0, 0, 0, 255]))
    img = Image.from_file(str(binary))
    assert img.pixels[0, 0].tolist() == [1.0, 0.0, 0.0]
    assert img.pixels[0, 1].tolist() == [0.0, 0.0, 1.0]


def test_images_to_batch():
    """Test stacking images into a channel-first batch."""
    a = Image(np.zeros((2, 3, 3)))
    b = Image(np.ones((2, 3, 3)))
    batch = images_to_batch([a, b])
    assert batch.shape == (2, 3, 2, 3)
    assert np.all(batch[1] == 1)
