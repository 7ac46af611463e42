"""Deterministic synthetic segmentation data: colored shapes on texture.

Each image holds 1..max_shapes shapes (rectangle -> class 1, ellipse ->
class 2, triangle -> class 3) over a textured background (class 0), with
per-pixel labels exact by construction.  Class identity is carried mostly
by color; per-instance color jitter, a global per-image tint, and pixel
noise scale with a per-image difficulty draw, so a single dataset spans
easy, clean images and genuinely hard ones.  That spread is what gives
checkpoint-stability ranking something to rank.

Everything derives from (seed, sample id): regenerating a config is
bit-identical, and sweeps that only move the difficulty knobs keep the
same shape layouts per id so cross-level comparisons align.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, Sample
from .errors import ConfigError
from .rng import RngStream
from .select import round_half_up

_GRAY = 0.5
_BASE_COLORS = {
    0: np.array([0.42, 0.55, 0.42]),  # background: muted green-gray
    1: np.array([0.80, 0.22, 0.20]),  # rectangles: red
    2: np.array([0.20, 0.35, 0.85]),  # ellipses: blue
    3: np.array([0.85, 0.78, 0.25]),  # triangles: yellow
}
_MIN_HALF = 3
_BORDER = 1  # background ring kept around every shape


@dataclass(frozen=True)
class GenConfig:
    image_size: int = 64
    num_classes: int = 4
    pool_size: int = 256
    val_size: int = 64
    labeled_fraction: float = 1 / 16
    noise_sigma: float = 0.06
    color_margin: float = 0.7
    tint: float = 0.1
    class_skew: float = 1.0
    pool_difficulty: float = 1.0
    max_shapes: int = 3
    seed: int = 0

    def validate(self) -> None:
        if self.num_classes < 2 or self.num_classes > 4:
            raise ConfigError(f"num_classes must be in [2, 4], got {self.num_classes}")
        if self.pool_size < 1 or self.val_size < 1:
            raise ConfigError("pool_size and val_size must be >= 1")
        if self.labeled_fraction * self.pool_size < 1:
            raise ConfigError(
                f"labeled_fraction {self.labeled_fraction} yields no labeled images"
            )
        if self.max_shapes < 1:
            raise ConfigError(f"max_shapes must be >= 1, got {self.max_shapes}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.tint < 0:
            raise ConfigError(f"tint must be >= 0, got {self.tint}")
        if not 0.0 < self.class_skew <= 1.0:
            raise ConfigError(f"class_skew must be in (0, 1], got {self.class_skew}")
        if not 0.0 < self.pool_difficulty <= 1.0:
            raise ConfigError(
                f"pool_difficulty must be in (0, 1], got {self.pool_difficulty}"
            )
        if not 0.0 < self.color_margin <= 1.0:
            raise ConfigError(f"color_margin must be in (0, 1], got {self.color_margin}")
        if self.image_size < 2 * (_MIN_HALF + _BORDER) + 1:
            raise ConfigError(
                f"image_size {self.image_size} cannot fit the minimum shape"
            )


def _class_color(cls: int, margin: float) -> np.ndarray:
    return _GRAY + margin * (_BASE_COLORS[cls] - _GRAY)


def _smooth_field(rng: np.random.Generator, size: int, cells: int = 8) -> np.ndarray:
    """Low-frequency scalar texture in [-1, 1], bilinearly upsampled."""
    coarse = rng.uniform(-1.0, 1.0, size=(cells, cells))
    pos = np.linspace(0, cells - 1, size)
    i0 = np.floor(pos).astype(np.int64)
    i1 = np.minimum(i0 + 1, cells - 1)
    f = pos - i0
    rows = coarse[i0][:, i0] * np.outer(1 - f, 1 - f)
    rows += coarse[i0][:, i1] * np.outer(1 - f, f)
    rows += coarse[i1][:, i0] * np.outer(f, 1 - f)
    rows += coarse[i1][:, i1] * np.outer(f, f)
    return rows


def _shape_mask(kind: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Boolean raster of one shape placed fully inside the border ring."""
    max_half = max(_MIN_HALF, int(size * 0.22))
    while True:
        a = int(rng.integers(_MIN_HALF, max_half + 1))
        b = int(rng.integers(_MIN_HALF, max_half + 1))
        cy = int(rng.integers(a + _BORDER, size - _BORDER - a))
        cx = int(rng.integers(b + _BORDER, size - _BORDER - b))
        yy, xx = np.mgrid[0:size, 0:size]
        if kind == 0:
            mask = (np.abs(yy - cy) <= a) & (np.abs(xx - cx) <= b)
        elif kind == 1:
            mask = ((yy - cy) / a) ** 2 + ((xx - cx) / b) ** 2 <= 1.0
        else:
            apex = (cy - a, cx + (rng.uniform(-0.6, 0.6)) * b)
            left = (cy + a, cx - b)
            right = (cy + a, cx + b)
            mask = _triangle_mask(yy, xx, apex, left, right)
        if mask.any():
            return mask


def _triangle_mask(yy, xx, v0, v1, v2) -> np.ndarray:
    def half_plane(py, px, ay, ax, by, bx):
        return (px - ax) * (by - ay) - (py - ay) * (bx - ax)

    d1 = half_plane(yy, xx, v0[0], v0[1], v1[0], v1[1])
    d2 = half_plane(yy, xx, v1[0], v1[1], v2[0], v2[1])
    d3 = half_plane(yy, xx, v2[0], v2[1], v0[0], v0[1])
    neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
    pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
    return ~(neg & pos)


def _render_image(
    cfg: GenConfig, rng: np.random.Generator, difficulty_cap: float = 1.0
) -> tuple[np.ndarray, np.ndarray, float]:
    """One (image, mask, difficulty) triple."""
    size = cfg.image_size
    difficulty = difficulty_cap * float(rng.uniform(0.0, 1.0))
    # Difficulty drives pixel noise almost entirely: multi-scale ensembling
    # averages independent per-pixel noise away, so predictions on hard images
    # can be sharpened by aggregation while easy images are already saturated.
    sigma = cfg.noise_sigma * (0.25 + 2.25 * difficulty)
    jitter = 0.04 + 0.22 * difficulty
    # Global color cast, independent of difficulty: a small constant nuisance
    # the labeled subset undersamples but the full pool covers.
    tint_mag = cfg.tint

    bg_color = _class_color(0, cfg.color_margin) + rng.uniform(-0.04, 0.04, size=3)
    img = np.empty((size, size, 3), dtype=np.float64)
    img[:] = bg_color
    texture = _smooth_field(rng, size)
    img += 0.05 * texture[..., None]
    mask = np.zeros((size, size), dtype=np.uint8)

    # Foreground classes are drawn with geometrically decaying frequency so the
    # tail class is scarce in any small labeled subset while the full pool
    # still carries plenty of examples of it.
    fg_weights = cfg.class_skew ** np.arange(cfg.num_classes - 1)
    fg_probs = fg_weights / fg_weights.sum()

    n_shapes = int(rng.integers(1, cfg.max_shapes + 1))
    for _ in range(n_shapes):
        cls = 1 + int(rng.choice(cfg.num_classes - 1, p=fg_probs))
        region = _shape_mask(cls - 1, size, rng)
        color = _class_color(cls, cfg.color_margin) + rng.uniform(-jitter, jitter, size=3)
        shade = _smooth_field(rng, size, cells=4)
        fill = color[None, :] + 0.05 * shade[region][:, None]
        img[region] = fill
        mask[region] = cls

    img += rng.uniform(-tint_mag, tint_mag, size=3)[None, None, :]
    if sigma > 0:
        img += rng.normal(0.0, sigma, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32), mask, difficulty


def generate(cfg: GenConfig) -> tuple[Dataset, list[Sample]]:
    """Labeled/unlabeled training pool plus a disjoint validation set."""
    cfg.validate()
    stream = RngStream(cfg.seed)
    pool: list[Sample] = []
    for i in range(cfg.pool_size):
        # The training pool spans only the lower `pool_difficulty` part of the
        # ramp (a curated pool); validation spans the full ramp, so models are
        # probed past the regime the pool covers.
        img, mask, d = _render_image(cfg, stream.derive("datagen", i), cfg.pool_difficulty)
        pool.append(Sample(id=i, image=img, mask=mask, difficulty=d))
    val: list[Sample] = []
    for i in range(cfg.pool_size, cfg.pool_size + cfg.val_size):
        img, mask, d = _render_image(cfg, stream.derive("datagen", i))
        val.append(Sample(id=i, image=img, mask=mask, difficulty=d))

    n_labeled = max(1, round_half_up(cfg.labeled_fraction * cfg.pool_size))
    split_rng = stream.derive("labeled-split")
    labeled_ids = set(
        int(i) for i in split_rng.choice(cfg.pool_size, size=n_labeled, replace=False)
    )
    labeled = [s for s in pool if s.id in labeled_ids]
    unlabeled = [s for s in pool if s.id not in labeled_ids]
    return Dataset(labeled=labeled, unlabeled=unlabeled, num_classes=cfg.num_classes), val


def difficulty_sweep(cfg: GenConfig, levels: list[float]) -> list[tuple[Dataset, list[Sample]]]:
    """Datasets at increasing difficulty; level 0 is the base config.

    Level L scales pixel noise by (1 + L) and shrinks the color margin by
    1 / (1 + L).  Sample ids and shape layouts are shared across levels.
    """
    if not levels:
        raise ConfigError("levels must be non-empty")
    out = []
    for level in levels:
        if level < 0:
            raise ConfigError(f"difficulty level must be >= 0, got {level}")
        scaled = replace(
            cfg,
            noise_sigma=cfg.noise_sigma * (1.0 + level),
            color_margin=cfg.color_margin / (1.0 + level),
        )
        out.append(generate(scaled))
    return out
