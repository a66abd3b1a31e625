"""Test loading, splitting and generating datasets."""
import os

import numpy as np
import pytest

from leaf_pathology.dataset import LabeledSet, UnlabeledSet, PseudoLabeledSet, \
    DatasetManifest, find_image_file, read_labels_csv, load_labeled, load_unlabeled, \
    load_dataset, stratified_split, hide_labels, make_synthetic, write_dataset, \
    CSV_HEADER
from leaf_pathology.image import Image
from leaf_pathology.errors import DataError, EmptyDataset, MissingImage, MalformedCsv, \
    ColumnOrderMismatch


def _write_csv(folder, rows, header=','.join(CSV_HEADER)):
    path = os.path.join(str(folder), 'labels.csv')
    with open(path, 'w') as fp:
        fp.write('\n'.join([header] + rows) + '\n')
    return path


def test_labeled_set():
    """Test LabeledSet validation, subsets and origin counts."""
    images = [Image.constant(2, 2, v) for v in (0.1, 0.2, 0.3)]
    labels = np.eye(4)[[0, 2, 2]]
    labeled = LabeledSet(images, labels, origins=['real', 'pseudo', 'real'])
    assert labeled.ids == ('Train_0', 'Train_1', 'Train_2')
    assert labeled.class_indices.tolist() == [0, 2, 2]
    assert labeled.origin_counts() == {'real': 2, 'pseudo': 1}
    part = labeled.subset([2, 0])
    assert part.ids == ('Train_2', 'Train_0')
    assert part.images[0] == images[2]
    with pytest.raises(DataError):
        LabeledSet(images, [[0.5, 0.4, 0, 0]] * 3)
    with pytest.raises(DataError):
        LabeledSet(images, np.eye(4)[:2])


def test_pseudo_labeled_set():
    """Test confidences and subsets of pseudo-labeled sets."""
    images = [Image.constant(2, 2, 0.5)] * 2
    soft = [[0.7, 0.1, 0.1, 0.1], [0.25] * 4]
    pseudo = PseudoLabeledSet(images, soft)
    assert pseudo.confidences.tolist() == [0.7, 0.25]
    assert pseudo.ids == ('Pseudo_0', 'Pseudo_1')
    assert len(pseudo.subset([])) == 0
    assert pseudo.subset([1]).confidences.tolist() == [0.25]
    assert UnlabeledSet(images).ids == ('Test_0', 'Test_1')


def test_read_labels_csv(tmp_path):
    """Test parsing of a valid label file."""
    path = _write_csv(tmp_path, ['Train_0,0,0,1,0', 'Train_1,1,0,0,0', ''])
    ids, labels = read_labels_csv(path)
    assert ids == ['Train_0', 'Train_1']
    assert labels.tolist() == [[0, 0, 1, 0], [1, 0, 0, 0]]
    soft = _write_csv(tmp_path, ['Test_0,0.25,0.25,0.25,0.25'])
    assert read_labels_csv(soft, soft=True)[1].tolist() == [[0.25] * 4]


@pytest.mark.parametrize('row,reason', [
    ('Train_0,0,0,0,0', 'no class assigned'),
    ('Train_0,0,1,1,0', 'sum'),
    ('Train_0,0,0.5,0.5,0', '0 or 1'),
    ('Train_0,x,0,1,0', 'numbers'),
    ('Train_0,0,1,0', 'fields'),
])
def test_malformed_csv(tmp_path, row, reason):
    """Test that malformed rows report their line and reason."""
    path = _write_csv(tmp_path, ['Train_1,1,0,0,0', row])
    with pytest.raises(MalformedCsv) as info:
        read_labels_csv(path)
    assert info.value.line == 3
    assert reason in info.value.reason


def test_csv_header_errors(tmp_path):
    """Test header order, empty files and missing files."""
    path = _write_csv(tmp_path, ['Train_0,0,0,1,0'],
                      header='image_id,healthy,rust,multiple_diseases,scab')
    with pytest.raises(ColumnOrderMismatch):
        read_labels_csv(path)
    empty = tmp_path / 'empty.csv'
    empty.write_text('')
    with pytest.raises(MalformedCsv):
        read_labels_csv(str(empty))
    with pytest.raises(DataError):
        read_labels_csv(str(tmp_path / 'nothing.csv'))


def test_load_labeled(tmp_path):
    """Test loading images in CSV order and reporting missing images."""
    images_dir = tmp_path / 'images'
    Image.constant(3, 3, 0.2).to_file(str(images_dir / 'Train_0.png'))
    Image.constant(3, 3, 0.6).to_file(str(images_dir / 'Train_1.ppm'))
    path = _write_csv(tmp_path, ['Train_1,0,1,0,0', 'Train_0,1,0,0,0'])
    labeled = load_labeled(path, str(images_dir))
    assert labeled.ids == ('Train_1', 'Train_0')
    assert np.allclose(labeled.images[0].pixels, round(0.6 * 255) / 255.0)
    assert find_image_file(str(images_dir), 'Train_1').endswith('.ppm')

    missing = _write_csv(tmp_path, ['Train_0,1,0,0,0', 'Train_7,1,0,0,0'])
    with pytest.raises(MissingImage) as info:
        load_labeled(missing, str(images_dir))
    assert info.value.image_id == 'Train_7'


def test_load_unlabeled(tmp_path):
    """Test reading a folder of unlabeled images in sorted order."""
    folder = tmp_path / 'unlabeled'
    for name in ('b.png', 'a.ppm'):
        Image.constant(2, 2, 0.5).to_file(str(folder / name))
    (folder / 'notes.txt').write_text('skip me')
    unlabeled = load_unlabeled(str(folder))
    assert unlabeled.ids == ('a', 'b')
    with pytest.raises(DataError):
        load_unlabeled(str(tmp_path / 'nowhere'))


def test_stratified_split():
    """Test per-class proportions and determinism of the split."""
    classes = np.repeat([0, 1, 2, 3], [10, 5, 2, 1])
    train, held = stratified_split(classes, 0.8, 4)
    assert len(set(train) | set(held)) == len(classes)
    assert not set(train) & set(held)
    assert list(np.bincount(classes[train], minlength=4)) == [8, 4, 1, 1]
    again = stratified_split(classes, 0.8, 4)
    assert np.array_equal(again[0], train) and np.array_equal(again[1], held)


def test_hide_labels():
    """Test moving a stratified share of labeled images into an unlabeled set."""
    labeled = make_synthetic(20, size=6)
    kept, hidden = hide_labels(labeled, 0.25, 1)
    assert len(kept) + len(hidden) == 20
    assert not set(kept.ids) & set(hidden.ids)
    assert len(hidden) == 4
    same, none = hide_labels(labeled, 0.0, 1)
    assert same is labeled and len(none) == 0
    with pytest.raises(DataError):
        hide_labels(labeled, 1.0, 1)


def test_make_synthetic():
    """Test the balance and determinism of the synthetic generator."""
    a = make_synthetic(10, size=8, seed=2)
    b = make_synthetic(10, size=8, seed=2)
    assert len(a) == 10
    assert sorted(np.bincount(a.class_indices, minlength=4)) == [2, 2, 3, 3]
    assert all(x == y for x, y in zip(a.images, b.images))
    assert np.array_equal(a.labels, b.labels)
    assert a.images[0].height == 8
    with pytest.raises(EmptyDataset):
        make_synthetic(0)


def test_write_and_load_dataset(tmp_path):
    """Test writing a dataset and loading it back through a manifest."""
    labeled = make_synthetic(12, size=6, seed=1)
    csv_path = write_dataset(labeled, str(tmp_path))
    manifest = DatasetManifest(csv_path, str(tmp_path / 'images'), 0.75, seed=0)
    loaded = load_dataset(manifest)
    assert len(loaded.train) == 8 and len(loaded.validation) == 4
    assert loaded.unlabeled is None
    assert sorted(loaded.train.ids + loaded.validation.ids) == sorted(labeled.ids)
    whole = load_dataset(DatasetManifest(csv_path, str(tmp_path / 'images'), 1.0))
    assert whole.validation is None
    assert np.array_equal(whole.train.labels, labeled.labels)
