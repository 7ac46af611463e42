"""Hard pseudo-label generation with multi-scale + flip test-time augmentation.

For every scale (and optionally its horizontal flip) the image is resized,
pushed through the model, softmaxed, and the probability map is resized
back to the native resolution (un-flipping where needed).  All maps are
averaged in probability space; the hard label is the per-pixel argmax
with ties broken toward the smallest class id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, with_pseudo_masks
from .model import (
    ModelParams,
    forward,
    forward_features,
    pixel_features_batch,
    softmax,
)
from .raster import flip_image, resize_image, resize_image_batch


@dataclass(frozen=True)
class TtaConfig:
    scales: tuple[float, ...] = (0.5, 0.75, 1.0, 1.5, 2.0)
    use_flip: bool = True

    def validate(self) -> None:
        if not self.scales:
            raise ValueError("tta scales must be non-empty")
        if any(s <= 0 for s in self.scales):
            raise ValueError(f"tta scales must be positive, got {self.scales}")


SINGLE_SCALE = TtaConfig(scales=(1.0,), use_flip=False)


def predict_proba_tta(params: ModelParams, img: np.ndarray, tta: TtaConfig) -> np.ndarray:
    """Averaged per-pixel class distribution (H, W, C); rows sum to ~1."""
    tta.validate()
    h, w = img.shape[:2]
    acc: np.ndarray | None = None
    n = 0
    for scale in tta.scales:
        sh = max(1, round(h * scale))
        sw = max(1, round(w * scale))
        scaled = img if (sh, sw) == (h, w) else resize_image(img, sh, sw)
        variants = [scaled]
        if tta.use_flip:
            variants.append(flip_image(scaled))
        for k, variant in enumerate(variants):
            probs = softmax(forward(params, variant))
            if k == 1:
                probs = probs[:, ::-1]
            if probs.shape[:2] != (h, w):
                probs = resize_image(probs, h, w)
            acc = probs if acc is None else acc + probs
            n += 1
    assert acc is not None
    return acc / n


def pseudo_label(params: ModelParams, img: np.ndarray, tta: TtaConfig) -> np.ndarray:
    """Hard (argmax) mask from TTA-averaged probabilities; never IGNORE."""
    probs = predict_proba_tta(params, img, tta)
    return np.argmax(probs, axis=-1).astype(np.uint8)


_CHUNK = 16  # images per stacked inference block (bounds peak memory)


def predict_proba_tta_batch(
    params: ModelParams, imgs: np.ndarray, tta: TtaConfig
) -> np.ndarray:
    """predict_proba_tta over a (B, H, W, 3) stack, vectorized per scale."""
    tta.validate()
    b, h, w = imgs.shape[:3]
    out = np.empty((b, h, w, params.num_classes), dtype=np.float64)
    for start in range(0, b, _CHUNK):
        block = imgs[start : start + _CHUNK]
        acc: np.ndarray | None = None
        n = 0
        for scale in tta.scales:
            sh = max(1, round(h * scale))
            sw = max(1, round(w * scale))
            scaled = block if (sh, sw) == (h, w) else resize_image_batch(block, sh, sw)
            variants = [scaled]
            if tta.use_flip:
                variants.append(scaled[:, :, ::-1])
            for k, variant in enumerate(variants):
                logits = forward_features(params, pixel_features_batch(variant))
                probs = softmax(logits)
                if k == 1:
                    probs = probs[:, :, ::-1]
                if probs.shape[1:3] != (h, w):
                    probs = resize_image_batch(probs, h, w)
                acc = probs if acc is None else acc + probs
                n += 1
        assert acc is not None
        out[start : start + _CHUNK] = acc / n
    return out


def pseudo_label_many(
    params: ModelParams,
    images: dict[int, np.ndarray],
    tta: TtaConfig,
) -> dict[int, np.ndarray]:
    """Hard masks for several images at once, keyed like the input.

    Falls back to one-at-a-time inference when shapes disagree.
    """
    ids = sorted(images)
    if not ids:
        return {}
    shapes = {images[i].shape for i in ids}
    if len(shapes) > 1:
        return {i: pseudo_label(params, images[i], tta) for i in ids}
    probs = predict_proba_tta_batch(params, np.stack([images[i] for i in ids]), tta)
    labels = np.argmax(probs, axis=-1).astype(np.uint8)
    return {i: labels[k] for k, i in enumerate(ids)}


def label_dataset(
    params: ModelParams, dataset: Dataset, tta: TtaConfig, subset: list[int]
) -> Dataset:
    """Attach pseudo masks to exactly the listed unlabeled ids."""
    by_id = dataset.unlabeled_by_id()
    unknown = [i for i in subset if i not in by_id]
    if unknown:
        raise KeyError(f"unknown unlabeled ids: {unknown}")
    masks = pseudo_label_many(params, {i: by_id[i].image for i in subset}, tta)
    return with_pseudo_masks(dataset, masks)
