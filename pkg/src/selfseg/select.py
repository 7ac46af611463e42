"""Stability scoring and reliable/unreliable image selection.

During supervised training the teacher is snapshotted several times.  An
unlabeled image whose hard predictions barely move between snapshots is
likely predicted well; one whose predictions churn is likely predicted
poorly.  The stability score of an image is the sum over the earlier
snapshots of the mean IoU between their mask and the final snapshot's
mask — between 0 and K-1 for K snapshots, higher meaning more stable.

Images are then ranked by score and the top fraction becomes the
"reliable" bucket that the first re-training phase consumes.  A
pixel-level alternative (confidence thresholding) is provided as a
comparison baseline.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .metrics import mean_iou
from .model import Checkpoint, forward_features, pixel_features, pixel_features_batch
from .raster import IGNORE


@dataclass(frozen=True)
class StabilityRecord:
    sample_id: int
    score: float


@dataclass(frozen=True)
class SplitPlan:
    reliable: tuple[int, ...]  # ordered by descending score
    unreliable: tuple[int, ...]
    proportion: float


def stability_score(masks: list[np.ndarray], num_classes: int) -> float:
    """Sum over earlier masks of mean IoU against the final mask."""
    if len(masks) < 2:
        raise ValueError(f"need >= 2 masks, got {len(masks)}")
    final = masks[-1]
    return float(sum(mean_iou(m, final, num_classes) for m in masks[:-1]))


def score_unlabeled(checkpoints: list[Checkpoint], dataset: Dataset) -> list[StabilityRecord]:
    """One stability record per unlabeled image.

    Masks come from plain single-scale inference of each checkpoint (the
    cheap path; full test-time augmentation is reserved for the actual
    pseudo-labeling pass).
    """
    if len(checkpoints) < 2:
        raise ValueError(f"need >= 2 checkpoints, got {len(checkpoints)}")
    records = []
    samples = dataset.unlabeled
    shapes = {s.image.shape for s in samples}
    if len(shapes) == 1:
        # Features are checkpoint-independent: extract once per block, then
        # run every checkpoint's head over the same block.
        for start in range(0, len(samples), 32):
            block = samples[start : start + 32]
            feats = pixel_features_batch(np.stack([s.image for s in block]))
            preds = [
                np.argmax(forward_features(ck.params, feats), axis=-1).astype(np.uint8)
                for ck in checkpoints
            ]
            for i, sample in enumerate(block):
                masks = [p[i] for p in preds]
                records.append(
                    StabilityRecord(sample.id, stability_score(masks, dataset.num_classes))
                )
        return records
    for sample in samples:
        feats = pixel_features(sample.image)
        masks = [
            np.argmax(forward_features(ck.params, feats), axis=-1).astype(np.uint8)
            for ck in checkpoints
        ]
        records.append(StabilityRecord(sample.id, stability_score(masks, dataset.num_classes)))
    return records


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def rank_and_split(records: list[StabilityRecord], proportion: float) -> SplitPlan:
    """Top round(R*N) ids by score (ties to the smaller id) become reliable."""
    if not records:
        raise ValueError("no stability records to split")
    if not 0.0 < proportion <= 1.0:
        raise ValueError(f"proportion must be in (0, 1], got {proportion}")
    order = sorted(records, key=lambda r: (-r.score, r.sample_id))
    n_reliable = min(len(order), round_half_up(proportion * len(order)))
    reliable = tuple(r.sample_id for r in order[:n_reliable])
    unreliable = tuple(r.sample_id for r in order[n_reliable:])
    return SplitPlan(reliable, unreliable, proportion)


def random_split(ids: list[int], proportion: float, rng: np.random.Generator) -> SplitPlan:
    """Uniform random split with the same bucket sizes as rank_and_split."""
    if not ids:
        raise ValueError("no ids to split")
    if not 0.0 < proportion <= 1.0:
        raise ValueError(f"proportion must be in (0, 1], got {proportion}")
    perm = [ids[i] for i in rng.permutation(len(ids))]
    n_first = min(len(ids), round_half_up(proportion * len(ids)))
    return SplitPlan(tuple(perm[:n_first]), tuple(perm[n_first:]), proportion)


def pixel_confidence_filter(prob_map: np.ndarray, threshold: float) -> np.ndarray:
    """Argmax label where max probability >= threshold, IGNORE elsewhere."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    label = np.argmax(prob_map, axis=-1).astype(np.uint8)
    confident = prob_map.max(axis=-1) >= threshold
    return np.where(confident, label, np.uint8(IGNORE))


def write_score_table(
    path: Path, records: list[StabilityRecord], plan: SplitPlan
) -> None:
    reliable = set(plan.reliable)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "score", "bucket"])
        for rec in sorted(records, key=lambda r: (-r.score, r.sample_id)):
            bucket = "reliable" if rec.sample_id in reliable else "unreliable"
            writer.writerow([rec.sample_id, f"{rec.score:.10g}", bucket])


def read_score_table(path: Path) -> list[tuple[int, float, str]]:
    with open(path, newline="") as fh:
        return [
            (int(row["id"]), float(row["score"]), row["bucket"])
            for row in csv.DictReader(fh)
        ]
