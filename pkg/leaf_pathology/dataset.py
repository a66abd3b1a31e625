# coding=utf-8
"""Labeled, unlabeled and pseudo-labeled image sets and how they are loaded.

Label files are CSV with the header ``image_id,healthy,multiple_diseases,rust,scab``
and one row per image. Images are looked up in an image folder as
``<image_id>.png`` or ``<image_id>.ppm``.
"""
import os
import csv
import math
import logging
from collections import namedtuple, Counter

import numpy as np

from .image import Image
from .metrics import CLASS_COLUMNS
from .errors import DataError, EmptyDataset, MissingImage, MalformedCsv, \
    ColumnOrderMismatch

_logger = logging.getLogger(__name__)

CSV_HEADER = ('image_id',) + CLASS_COLUMNS
IMAGE_EXTENSIONS = ('.png', '.ppm')
ORIGINS = ('real', 'pseudo')
ROW_TOLERANCE = 1e-9


def _label_matrix(labels, count, columns):
    labels = np.array(labels, dtype=np.float64)
    if count == 0 and labels.size == 0:
        return labels.reshape(0, len(columns))
    if labels.shape != (count, len(columns)):
        raise DataError('Expected a {} x {} label matrix. Got {}.'.format(
            count, len(columns), labels.shape))
    if not np.all(np.isfinite(labels)) or labels.min() < 0 or labels.max() > 1:
        raise DataError('Label values must lie in [0, 1].')
    sums = labels.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > ROW_TOLERANCE)[0]
    if bad.size:
        raise DataError('Label row {} sums to {} instead of 1.'.format(
            int(bad[0]), sums[bad[0]]))
    labels.setflags(write=False)
    return labels


def _default_ids(prefix, count):
    return ['{}_{}'.format(prefix, i) for i in range(count)]


class LabeledSet(object):
    """Images with one probability row per image.

    Args:
        images: A list of Images.
        labels: An N x C matrix of target probabilities, every row summing to 1.
        ids: Optional list of image identifiers. (Default: Train_<index>).
        origins: Optional list with 'real' or 'pseudo' for every example.
            (Default: all 'real').
        columns: Names of the label columns. (Default: CLASS_COLUMNS).

    Properties:
        * images
        * labels
        * ids
        * origins
        * columns
        * class_indices
    """
    __slots__ = ('_images', '_labels', '_ids', '_origins', '_columns')

    def __init__(self, images, labels, ids=None, origins=None, columns=CLASS_COLUMNS):
        self._images = tuple(images)
        self._columns = tuple(columns)
        self._labels = _label_matrix(labels, len(self._images), self._columns)
        self._ids = tuple(ids) if ids is not None else \
            tuple(_default_ids('Train', len(self._images)))
        self._origins = tuple(origins) if origins is not None else \
            ('real',) * len(self._images)
        assert len(self._ids) == len(self._images), \
            'Got {} ids for {} images.'.format(len(self._ids), len(self._images))
        assert len(self._origins) == len(self._images), \
            'Got {} origins for {} images.'.format(len(self._origins), len(self._images))
        for origin in self._origins:
            assert origin in ORIGINS, 'Unknown origin "{}".'.format(origin)

    @property
    def images(self):
        return self._images

    @property
    def labels(self):
        """Get the read-only N x C label matrix."""
        return self._labels

    @property
    def ids(self):
        return self._ids

    @property
    def origins(self):
        return self._origins

    @property
    def columns(self):
        return self._columns

    @property
    def class_indices(self):
        """Get the argmax class of every row, ties going to the lowest column."""
        return self._labels.argmax(axis=1) if len(self) else np.zeros(0, dtype=np.intp)

    def origin_counts(self):
        """Get a dictionary with the number of real and pseudo examples."""
        counts = Counter(self._origins)
        return {origin: counts.get(origin, 0) for origin in ORIGINS}

    def subset(self, indices):
        """Get a new LabeledSet with the rows at the given indices, in that order."""
        indices = [int(i) for i in indices]
        return LabeledSet([self._images[i] for i in indices],
                          self._labels[indices] if indices else np.zeros((0, len(self._columns))),
                          [self._ids[i] for i in indices],
                          [self._origins[i] for i in indices], self._columns)

    def __len__(self):
        return len(self._images)

    def ToString(self):
        return self.__repr__()

    def __repr__(self):
        return 'LabeledSet: [{} images]'.format(len(self))


class UnlabeledSet(object):
    """Images without labels.

    Args:
        images: A list of Images.
        ids: Optional list of image identifiers. (Default: Test_<index>).
    """
    __slots__ = ('_images', '_ids')

    def __init__(self, images, ids=None):
        self._images = tuple(images)
        self._ids = tuple(ids) if ids is not None else \
            tuple(_default_ids('Test', len(self._images)))
        assert len(self._ids) == len(self._images), \
            'Got {} ids for {} images.'.format(len(self._ids), len(self._images))

    @property
    def images(self):
        return self._images

    @property
    def ids(self):
        return self._ids

    def __len__(self):
        return len(self._images)

    def __repr__(self):
        return 'UnlabeledSet: [{} images]'.format(len(self))


class PseudoLabeledSet(object):
    """Unlabeled images with the label distributions a teacher model assigned.

    Args:
        images: A list of Images.
        soft_labels: An N x C matrix of rows summing to 1.
        ids: Optional list of image identifiers.
        columns: Names of the label columns. (Default: CLASS_COLUMNS).
        confidences: Optional confidence of every row. (Default: the row maxima).

    Properties:
        * images
        * soft_labels
        * confidences
        * ids
        * columns
    """
    __slots__ = ('_images', '_soft_labels', '_confidences', '_ids', '_columns')

    def __init__(self, images, soft_labels, ids=None, columns=CLASS_COLUMNS,
                 confidences=None):
        self._images = tuple(images)
        self._columns = tuple(columns)
        self._soft_labels = _label_matrix(soft_labels, len(self._images), self._columns)
        if confidences is not None:
            conf = np.array(confidences, dtype=np.float64).reshape(len(self._images))
        elif len(self._images):
            conf = self._soft_labels.max(axis=1)
        else:
            conf = np.zeros(0)
        conf.setflags(write=False)
        self._confidences = conf
        self._ids = tuple(ids) if ids is not None else \
            tuple(_default_ids('Pseudo', len(self._images)))

    @property
    def images(self):
        return self._images

    @property
    def soft_labels(self):
        return self._soft_labels

    @property
    def confidences(self):
        """Get the teacher confidence of every row."""
        return self._confidences

    @property
    def ids(self):
        return self._ids

    @property
    def columns(self):
        return self._columns

    def subset(self, indices):
        indices = [int(i) for i in indices]
        labels = self._soft_labels[indices] if indices else \
            np.zeros((0, len(self._columns)))
        return PseudoLabeledSet([self._images[i] for i in indices], labels,
                                [self._ids[i] for i in indices], self._columns,
                                self._confidences[indices] if indices else None)

    def __len__(self):
        return len(self._images)

    def __repr__(self):
        return 'PseudoLabeledSet: [{} images]'.format(len(self))


class DatasetManifest(object):
    """Where a labeled dataset lives and how it is split.

    Args:
        labels_csv: Path to the label CSV file.
        images_dir: Folder holding the labeled images.
        train_fraction: Share of every class kept for training. (Default: 0.8).
        seed: Seed of the stratified split. (Default: 0).
        unlabeled_dir: Optional folder of unlabeled images.
    """
    __slots__ = ('labels_csv', 'images_dir', 'train_fraction', 'seed', 'unlabeled_dir')

    def __init__(self, labels_csv, images_dir, train_fraction=0.8, seed=0,
                 unlabeled_dir=None):
        self.labels_csv = labels_csv
        self.images_dir = images_dir
        self.train_fraction = train_fraction
        self.seed = seed
        self.unlabeled_dir = unlabeled_dir

    @classmethod
    def from_config(cls, data_cfg):
        """Create a manifest from the data section of a RunConfig."""
        if not data_cfg.labels_csv or not data_cfg.images_dir:
            raise DataError('The data section needs both labels_csv and images_dir.')
        return cls(data_cfg.labels_csv, data_cfg.images_dir, data_cfg.train_fraction,
                   data_cfg.split_seed, data_cfg.unlabeled_dir)

    @property
    def columns(self):
        return CSV_HEADER

    def __repr__(self):
        return 'DatasetManifest: [{}]'.format(self.labels_csv)


LoadedDataset = namedtuple('LoadedDataset', ('train', 'validation', 'unlabeled'))


def find_image_file(images_dir, image_id):
    """Get the path of an image by id, trying every supported extension."""
    for ext in IMAGE_EXTENSIONS:
        path = os.path.join(images_dir, image_id + ext)
        if os.path.isfile(path):
            return path
    raise MissingImage(image_id, os.path.join(images_dir, image_id))


def read_labels_csv(file_path, soft=False):
    """Parse a label CSV file.

    Args:
        file_path: Path to a CSV file with the fixed header.
        soft: Set to True to accept any probability rows (pseudo-label files).
            Otherwise every value must be 0 or 1 with exactly one 1 per row.

    Returns:
        A tuple of (ids, N x 4 label matrix).
    """
    if not os.path.isfile(file_path):
        raise DataError('Label file not found: {}'.format(file_path))
    ids, rows = [], []
    with open(file_path, newline='') as fp:
        reader = csv.reader(fp)
        header = next(reader, None)
        if header is None:
            raise MalformedCsv(1, 'the file is empty')
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ColumnOrderMismatch('Expected header {}. Got {}.'.format(
                ','.join(CSV_HEADER), ','.join(header)))
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise MalformedCsv(line, 'expected {} fields, got {}'.format(
                    len(CSV_HEADER), len(row)))
            try:
                values = [float(v) for v in row[1:]]
            except ValueError:
                raise MalformedCsv(line, 'label values must be numbers')
            if not all(0.0 <= v <= 1.0 for v in values):
                raise MalformedCsv(line, 'label values must lie in [0, 1]')
            if not soft and not all(v in (0.0, 1.0) for v in values):
                raise MalformedCsv(line, 'label values must be 0 or 1')
            total = math.fsum(values)
            if total == 0:
                raise MalformedCsv(line, 'no class assigned')
            if abs(total - 1.0) > ROW_TOLERANCE:
                raise MalformedCsv(line, 'labels sum to {} instead of 1'.format(total))
            ids.append(row[0].strip())
            rows.append(values)
    labels = np.array(rows, dtype=np.float64).reshape(len(rows), len(CLASS_COLUMNS))
    return ids, labels


def list_image_files(folder):
    """Get the sorted image files of a folder with supported extensions."""
    if not os.path.isdir(folder):
        raise DataError('Image folder not found: {}'.format(folder))
    return sorted(os.path.join(folder, f) for f in os.listdir(folder)
                  if os.path.splitext(f)[1].lower() in IMAGE_EXTENSIONS)


def load_unlabeled(folder):
    """Read every supported image of a folder into an UnlabeledSet."""
    files = list_image_files(folder)
    ids = [os.path.splitext(os.path.basename(f))[0] for f in files]
    return UnlabeledSet([Image.from_file(f) for f in files], ids)


def load_labeled(labels_csv, images_dir):
    """Read a label CSV file and its images into a LabeledSet in CSV order."""
    ids, labels = read_labels_csv(labels_csv)
    images = [Image.from_file(find_image_file(images_dir, i)) for i in ids]
    return LabeledSet(images, labels, ids)


def load_dataset(manifest):
    """Load, validate and split the dataset described by a DatasetManifest.

    Returns:
        A LoadedDataset of (train, validation, unlabeled). validation is None
        when the train fraction is 1 and unlabeled is None when the manifest
        has no unlabeled folder.
    """
    labeled = load_labeled(manifest.labels_csv, manifest.images_dir)
    if len(labeled) == 0:
        raise EmptyDataset('{} has no labeled rows.'.format(manifest.labels_csv))
    if manifest.train_fraction >= 1.0:
        train, validation = labeled, None
    else:
        train_idx, val_idx = stratified_split(
            labeled.class_indices, manifest.train_fraction, manifest.seed)
        train, validation = labeled.subset(train_idx), labeled.subset(val_idx)
    unlabeled = load_unlabeled(manifest.unlabeled_dir) \
        if manifest.unlabeled_dir else None
    _logger.info('Loaded %d labeled images (%d train, %d validation)%s.', len(labeled),
                 len(train), 0 if validation is None else len(validation),
                 '' if unlabeled is None else ' and {} unlabeled'.format(len(unlabeled)))
    return LoadedDataset(train, validation, unlabeled)


def stratified_split(classes, train_fraction, seed):
    """Split example indices so every class keeps the same train share.

    Each class with at least two examples keeps at least one example on both
    sides of the split.

    Args:
        classes: Class index of every example.
        train_fraction: Share of every class put in the first part.
        seed: Seed of the per-class shuffles.

    Returns:
        A tuple of two sorted index arrays (train, held out).
    """
    classes = np.asarray(classes)
    rng = np.random.default_rng(seed)
    first, second = [], []
    for cls in np.unique(classes):
        members = rng.permutation(np.nonzero(classes == cls)[0])
        n_first = int(math.floor(len(members) * train_fraction + 0.5))
        if len(members) > 1:
            n_first = min(max(n_first, 1), len(members) - 1)
        first.extend(members[:n_first])
        second.extend(members[n_first:])
    return np.sort(np.array(first, dtype=np.intp)), np.sort(np.array(second, dtype=np.intp))


def hide_labels(labeled, fraction, seed):
    """Turn a stratified share of a labeled set into unlabeled images.

    Args:
        labeled: A LabeledSet.
        fraction: Share of every class whose labels are hidden, in [0, 1).
        seed: Seed of the split.

    Returns:
        A tuple of (LabeledSet still labeled, UnlabeledSet with hidden labels).
    """
    if not 0 <= fraction < 1:
        raise DataError('Hidden label fraction must be in [0, 1). Got {}.'.format(fraction))
    if fraction == 0:
        return labeled, UnlabeledSet([], [])
    keep, hidden = stratified_split(labeled.class_indices, 1.0 - fraction, seed)
    return labeled.subset(keep), UnlabeledSet(
        [labeled.images[i] for i in hidden], [labeled.ids[i] for i in hidden])


# synthetic leaves: a green ellipse on soil with class-dependent lesions
_SOIL = np.array([0.25, 0.18, 0.10])
_LEAF = np.array([0.20, 0.60, 0.20])
_RUST = np.array([0.90, 0.50, 0.10])
_SCAB = np.array([0.30, 0.22, 0.12])


def _synthetic_leaf(class_index, size, noise, rng):
    yy, xx = np.mgrid[0:size, 0:size] / float(size - 1)
    cy, cx = rng.uniform(0.4, 0.6, size=2)
    ry, rx = rng.uniform(0.3, 0.45, size=2)
    leaf = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    pixels = np.broadcast_to(_SOIL, (size, size, 3)).copy()
    pixels[leaf] = _LEAF * rng.uniform(0.9, 1.1)

    name = CLASS_COLUMNS[class_index]
    if name in ('rust', 'multiple_diseases'):
        # round orange spots
        for _ in range(int(rng.integers(3, 7))):
            angle, dist = rng.uniform(0, 2 * np.pi), rng.uniform(0, 0.7)
            sy, sx = cy + dist * ry * np.sin(angle), cx + dist * rx * np.cos(angle)
            radius = rng.uniform(0.05, 0.09)
            spot = ((yy - sy) ** 2 + (xx - sx) ** 2 <= radius ** 2) & leaf
            pixels[spot] = _RUST
    if name in ('scab', 'multiple_diseases'):
        # dark parallel streaks
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(3.0, 5.0)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
        pixels[(wave > 0.6) & leaf] = _SCAB
    if noise > 0:
        pixels = pixels + rng.normal(0.0, noise, pixels.shape)
    return Image(np.clip(pixels, 0.0, 1.0))


def make_synthetic(count, size=32, noise=0.05, seed=0):
    """Generate a balanced four-class dataset of synthetic leaf images.

    Healthy leaves are plain, rust leaves carry orange spots, scab leaves carry
    dark streaks and leaves with multiple diseases carry both. Every image is
    drawn from its own generator seeded with (seed, index).

    Args:
        count: Number of images.
        size: Height and width of every image. (Default: 32).
        noise: Standard deviation of additive Gaussian pixel noise. (Default: 0.05).
        seed: Seed of the dataset. (Default: 0).
    """
    if count < 1:
        raise EmptyDataset('Synthetic dataset needs at least one image.')
    classes = np.random.default_rng(seed).permutation(
        np.arange(count) % len(CLASS_COLUMNS))
    images = [_synthetic_leaf(int(c), size, noise, np.random.default_rng([seed, i]))
              for i, c in enumerate(classes)]
    labels = np.eye(len(CLASS_COLUMNS))[classes]
    return LabeledSet(images, labels, _default_ids('Train', count))


def write_dataset(labeled, folder, image_format='png'):
    """Write a LabeledSet as a label CSV file plus an images folder.

    Args:
        labeled: A LabeledSet.
        folder: Output folder. It receives labels.csv and images/.
        image_format: png or ppm. (Default: png).

    Returns:
        Path to the written labels.csv.
    """
    images_dir = os.path.join(folder, 'images')
    if not os.path.isdir(images_dir):
        os.makedirs(images_dir)
    csv_path = os.path.join(folder, 'labels.csv')
    with open(csv_path, 'w', newline='') as fp:
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        for image_id, img, row in zip(labeled.ids, labeled.images, labeled.labels):
            img.to_file(os.path.join(images_dir, '{}.{}'.format(image_id, image_format)))
            writer.writerow([image_id] + ['{:g}'.format(v) for v in row])
    return csv_path
