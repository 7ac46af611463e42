"""Sample/Dataset containers and their on-disk layout.

A dataset directory holds one image file per sample, one mask file per
ground-truth or pseudo mask, and a manifest.csv tying ids to splits and
paths.  Ground-truth masks of unlabeled samples are kept (generation is
synthetic, so they exist) purely for quality reports; training code only
ever reads the pseudo mask of an unlabeled sample.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .raster import (
    check_image,
    check_mask,
    load_image_bytes,
    load_mask_bytes,
    save_image_bytes,
    save_mask_bytes,
)


@dataclass
class Sample:
    id: int
    image: np.ndarray
    mask: np.ndarray | None = None  # ground truth (None only for truly unlabeled data)
    pseudo_mask: np.ndarray | None = None
    difficulty: float = 0.0


@dataclass
class Dataset:
    labeled: list[Sample]
    unlabeled: list[Sample]
    num_classes: int

    def __post_init__(self) -> None:
        ids = [s.id for s in self.labeled] + [s.id for s in self.unlabeled]
        if len(ids) != len(set(ids)):
            raise ValueError("sample ids must be unique across the dataset")

    def unlabeled_ids(self) -> list[int]:
        return [s.id for s in self.unlabeled]

    def unlabeled_by_id(self) -> dict[int, Sample]:
        return {s.id: s for s in self.unlabeled}


def validate_dataset(ds: Dataset) -> None:
    for s in ds.labeled:
        check_image(s.image)
        if s.mask is None:
            raise ValueError(f"labeled sample {s.id} lacks a ground-truth mask")
        if np.any(s.mask >= ds.num_classes):
            # ground-truth labels are dense: no IGNORE, no out-of-range ids
            raise ValueError(f"labeled mask {s.id} has classes >= {ds.num_classes}")
    for s in ds.unlabeled:
        check_image(s.image)
        if s.pseudo_mask is not None:
            check_mask(s.pseudo_mask, ds.num_classes)


def with_pseudo_masks(ds: Dataset, masks: dict[int, np.ndarray]) -> Dataset:
    """Copy of the dataset with pseudo masks attached on the given ids."""
    known = set(ds.unlabeled_ids())
    unknown = set(masks) - known
    if unknown:
        raise KeyError(f"unknown unlabeled ids: {sorted(unknown)}")
    new_unlabeled = [
        replace(s, pseudo_mask=masks[s.id]) if s.id in masks else s for s in ds.unlabeled
    ]
    return Dataset(labeled=list(ds.labeled), unlabeled=new_unlabeled, num_classes=ds.num_classes)


def save_dataset(root: Path, ds: Dataset, validation: list[Sample]) -> None:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    rows = []
    for split, samples in [
        ("labeled", ds.labeled),
        ("unlabeled", ds.unlabeled),
        ("val", validation),
    ]:
        for s in samples:
            img_path = f"images/{s.id}.img"
            (root / img_path).write_bytes(save_image_bytes(s.image))
            mask_path = ""
            if s.mask is not None:
                mask_path = f"masks/{s.id}.msk"
                (root / mask_path).write_bytes(save_mask_bytes(s.mask, ds.num_classes))
            rows.append(
                {
                    "id": s.id,
                    "split": split,
                    "image": img_path,
                    "mask": mask_path,
                    "difficulty": f"{s.difficulty:.10g}",
                }
            )
    with open(root / "manifest.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["id", "split", "image", "mask", "difficulty"])
        writer.writeheader()
        writer.writerows(rows)
    (root / "num_classes.txt").write_text(f"{ds.num_classes}\n")


def load_dataset(root: Path) -> tuple[Dataset, list[Sample]]:
    root = Path(root)
    manifest = root / "manifest.csv"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest.csv under {root}")
    num_classes = int((root / "num_classes.txt").read_text().strip())
    splits: dict[str, list[Sample]] = {"labeled": [], "unlabeled": [], "val": []}
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            img = load_image_bytes((root / row["image"]).read_bytes())
            mask = None
            if row["mask"]:
                mask, _ = load_mask_bytes((root / row["mask"]).read_bytes())
            splits[row["split"]].append(
                Sample(
                    id=int(row["id"]),
                    image=img,
                    mask=mask,
                    difficulty=float(row["difficulty"]),
                )
            )
    ds = Dataset(
        labeled=splits["labeled"], unlabeled=splits["unlabeled"], num_classes=num_classes
    )
    return ds, splits["val"]
