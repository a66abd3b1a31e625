# coding=utf-8
"""Float images and their conversion to and from image files."""
import os

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from .errors import DataError, UnsupportedImageFormat

SUPPORTED_FORMATS = ('PPM', 'PNG')
PIXMAP_MAGIC = b'P6'


def _check_pixmap_magic(file_path):
    """Reject portable maps other than binary RGB pixmaps (P3, PGM, PBM)."""
    with open(file_path, 'rb') as fp:
        magic = fp.read(2)
    if magic != PIXMAP_MAGIC:
        raise UnsupportedImageFormat(
            '{} is a {!r} portable map. Only binary {!r} pixmaps are supported.'.format(
                file_path, magic, PIXMAP_MAGIC))


class Image(object):
    """An H x W x C image of float64 values, row-major and channel-last.

    Args:
        pixels: An array-like of shape H x W x C (or H x W for a single
            channel). Values are expected in [0, 1] before normalization.

    Properties:
        * pixels
        * height
        * width
        * channels
    """
    __slots__ = ('_pixels',)

    def __init__(self, pixels):
        arr = np.array(pixels, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or 0 in arr.shape:
            raise DataError('Image pixels must have shape H x W x C. Got {}.'.format(
                arr.shape))
        if not np.all(np.isfinite(arr)):
            raise DataError('Image pixels must be finite.')
        arr.setflags(write=False)
        self._pixels = arr

    @classmethod
    def constant(cls, height, width, value, channels=3):
        """Create an image where every pixel has the same value."""
        return cls(np.full((height, width, channels), float(value)))

    @classmethod
    def from_file(cls, file_path):
        """Decode a binary portable pixmap (P6) or PNG file into an RGB Image.

        Args:
            file_path: Path to a .ppm or .png file.
        """
        try:
            with PILImage.open(file_path) as pil_img:
                if pil_img.format not in SUPPORTED_FORMATS:
                    raise UnsupportedImageFormat(
                        '{} is a {} file. Supported formats are {}.'.format(
                            file_path, pil_img.format, SUPPORTED_FORMATS))
                if pil_img.format == 'PPM':
                    _check_pixmap_magic(file_path)
                arr = np.asarray(pil_img.convert('RGB'), dtype=np.float64)
        except UnidentifiedImageError:
            raise UnsupportedImageFormat(
                'Unable to decode {} as one of {}.'.format(file_path, SUPPORTED_FORMATS))
        return cls(arr / 255.0)

    @property
    def pixels(self):
        """Get the read-only H x W x C numpy array of pixels."""
        return self._pixels

    @property
    def height(self):
        return self._pixels.shape[0]

    @property
    def width(self):
        return self._pixels.shape[1]

    @property
    def channels(self):
        return self._pixels.shape[2]

    def to_file(self, file_path):
        """Write the image as PNG or PPM (chosen by extension), clamped to [0, 1].

        Args:
            file_path: Path of the file to write.
        """
        dir_name = os.path.dirname(os.path.abspath(file_path))
        if not os.path.isdir(dir_name):
            os.makedirs(dir_name)
        arr = np.clip(self._pixels, 0.0, 1.0)
        if arr.shape[2] == 1:
            arr = np.repeat(arr, 3, axis=2)
        data = np.round(arr * 255.0).astype(np.uint8)
        fmt = 'PPM' if file_path.lower().endswith('.ppm') else 'PNG'
        PILImage.fromarray(data, 'RGB').save(file_path, format=fmt)
        return file_path

    def __eq__(self, other):
        return isinstance(other, Image) and self._pixels.shape == other._pixels.shape \
            and np.array_equal(self._pixels, other._pixels)

    def __ne__(self, other):
        return not self.__eq__(other)

    def ToString(self):
        return self.__repr__()

    def __repr__(self):
        return 'Image: [{}x{}x{}]'.format(self.height, self.width, self.channels)


def images_to_batch(images):
    """Stack Images of equal size into an N x C x H x W numpy array."""
    return np.stack([img.pixels for img in images]).transpose(0, 3, 1, 2).copy()
