"""Dataset containers and the on-disk directory layout."""

import numpy as np
import pytest

from selfseg.data import (
    Dataset,
    Sample,
    load_dataset,
    save_dataset,
    validate_dataset,
    with_pseudo_masks,
)
from selfseg.raster import RasterError


def build_world(seed=0, h=8, w=8, num_classes=3):
    rng = np.random.default_rng(seed)

    def img():
        return rng.random((h, w, 3)).astype(np.float32)

    def mask():
        return rng.integers(0, num_classes, (h, w)).astype(np.uint8)

    labeled = [Sample(0, img(), mask(), difficulty=0.125)]
    unlabeled = [Sample(i, img(), mask(), difficulty=0.1 * i) for i in (1, 2, 3)]
    val = [Sample(10, img(), mask(), difficulty=0.9876543212345)]
    return Dataset(labeled=labeled, unlabeled=unlabeled, num_classes=num_classes), val


def test_duplicate_ids_rejected():
    rng = np.random.default_rng(1)
    img = rng.random((4, 4, 3)).astype(np.float32)
    mask = np.zeros((4, 4), dtype=np.uint8)
    with pytest.raises(ValueError):
        Dataset(labeled=[Sample(0, img, mask)], unlabeled=[Sample(0, img)], num_classes=2)


def test_unlabeled_lookups():
    ds, _ = build_world()
    assert ds.unlabeled_ids() == [1, 2, 3]
    assert ds.unlabeled_by_id()[2].id == 2


def test_validate_accepts_well_formed():
    ds, _ = build_world()
    validate_dataset(ds)


def test_validate_rejects_labeled_without_mask():
    ds, _ = build_world()
    ds.labeled[0].mask = None
    with pytest.raises(ValueError, match="lacks"):
        validate_dataset(ds)


def test_validate_rejects_out_of_range_labels():
    ds, _ = build_world()
    ds.labeled[0].mask[0, 0] = 3  # num_classes is 3
    with pytest.raises(ValueError, match="classes"):
        validate_dataset(ds)


def test_validate_rejects_bad_pseudo_mask():
    ds, _ = build_world()
    ds.unlabeled[0].pseudo_mask = np.full((8, 8), 200, dtype=np.uint8)
    with pytest.raises(RasterError):
        validate_dataset(ds)


def test_with_pseudo_masks_attaches_copies():
    ds, _ = build_world()
    new_mask = np.ones((8, 8), dtype=np.uint8)
    out = with_pseudo_masks(ds, {2: new_mask})
    assert out.unlabeled_by_id()[2].pseudo_mask is new_mask
    assert out.unlabeled_by_id()[1].pseudo_mask is None
    assert ds.unlabeled_by_id()[2].pseudo_mask is None  # original untouched


def test_with_pseudo_masks_rejects_unknown_id():
    ds, _ = build_world()
    with pytest.raises(KeyError):
        with_pseudo_masks(ds, {77: np.zeros((8, 8), dtype=np.uint8)})


def test_save_load_roundtrip(tmp_path):
    ds, val = build_world()
    save_dataset(tmp_path, ds, val)
    loaded, loaded_val = load_dataset(tmp_path)

    assert loaded.num_classes == ds.num_classes
    assert [s.id for s in loaded.labeled] == [0]
    assert [s.id for s in loaded.unlabeled] == [1, 2, 3]
    assert [s.id for s in loaded_val] == [10]
    for before, after in zip(ds.labeled + ds.unlabeled + val, loaded.labeled + loaded.unlabeled + loaded_val):
        assert np.array_equal(before.image, after.image)
        assert np.array_equal(before.mask, after.mask)
        assert after.difficulty == pytest.approx(before.difficulty, abs=1e-9)


def test_save_writes_expected_files(tmp_path):
    ds, val = build_world()
    save_dataset(tmp_path, ds, val)
    assert (tmp_path / "manifest.csv").exists()
    assert (tmp_path / "num_classes.txt").read_text().strip() == "3"
    assert sorted(p.name for p in (tmp_path / "images").iterdir()) == [
        "0.img",
        "1.img",
        "10.img",
        "2.img",
        "3.img",
    ]


def test_load_without_manifest_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nowhere")


def test_truly_unlabeled_samples_survive_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    ds = Dataset(
        labeled=[Sample(0, rng.random((4, 4, 3)).astype(np.float32), np.zeros((4, 4), dtype=np.uint8))],
        unlabeled=[Sample(1, rng.random((4, 4, 3)).astype(np.float32))],  # no mask at all
        num_classes=2,
    )
    save_dataset(tmp_path, ds, [])
    loaded, _ = load_dataset(tmp_path)
    assert loaded.unlabeled[0].mask is None
