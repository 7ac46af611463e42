"""Confusion-matrix IoU metrics with IGNORE handling.

Per-class IoU is intersection / union counted over pixels whose reference
label is valid (not IGNORE).  Classes with zero union are skipped so that
scores stay comparable between images containing few classes; when every
class is skipped (no valid pixels at all) the mean defaults to 1.0, i.e.
two empty masks count as a perfect match.

A predicted IGNORE pixel (possible after confidence filtering) never
matches any class: it inflates the union of its reference class without
contributing intersection anywhere.
"""

from __future__ import annotations

import numpy as np

from .raster import IGNORE, check_same_shape


def confusion_matrix(pred: np.ndarray, ref: np.ndarray, num_classes: int) -> np.ndarray:
    """C x C count matrix; entry (a, b) counts pixels with ref a, pred b.

    Pixels whose reference is IGNORE are excluded.  Predicted-IGNORE
    pixels occupy no column (they count as a miss for every class).
    """
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    check_same_shape(pred, ref)
    return _joint_counts(pred, ref, num_classes)[:, :num_classes]


def _joint_counts(pred: np.ndarray, ref: np.ndarray, num_classes: int) -> np.ndarray:
    """C x (C+1) counts; the extra column collects predicted-IGNORE pixels."""
    valid = ref != IGNORE
    r = ref[valid].astype(np.int64)
    p = pred[valid].astype(np.int64)
    p = np.where(p == IGNORE, num_classes, p)
    idx = r * (num_classes + 1) + p
    counts = np.bincount(idx, minlength=num_classes * (num_classes + 1))
    return counts.reshape(num_classes, num_classes + 1)


def per_class_iou(
    pred: np.ndarray, ref: np.ndarray, num_classes: int
) -> list[tuple[int, float | None]]:
    """Unreduced IoU per class; None marks classes with zero union."""
    check_same_shape(pred, ref)
    joint = _joint_counts(pred, ref, num_classes)
    return iou_from_joint(joint)


def iou_from_joint(joint: np.ndarray) -> list[tuple[int, float | None]]:
    num_classes = joint.shape[0]
    conf = joint[:, :num_classes]
    inter = np.diag(conf).astype(np.float64)
    union = joint.sum(axis=1) + conf.sum(axis=0) - inter
    out: list[tuple[int, float | None]] = []
    for c in range(num_classes):
        if union[c] == 0:
            out.append((c, None))
        else:
            out.append((c, float(inter[c] / union[c])))
    return out


def mean_iou(pred: np.ndarray, ref: np.ndarray, num_classes: int) -> float:
    """Unweighted mean of per-class IoU over classes with nonzero union."""
    return mean_of_ious(per_class_iou(pred, ref, num_classes))


def mean_of_ious(ious: list[tuple[int, float | None]]) -> float:
    present = [v for _, v in ious if v is not None]
    if not present:
        return 1.0
    return float(np.mean(present))
