"""Weak and strong augmentation applied jointly to (image, mask) pairs.

Weak augmentation is the supervised-training baseline: random horizontal
flip, random rescale, random crop (padding images with their channel mean
and masks with IGNORE when the rescaled raster is smaller than the crop).

Strong augmentation is photometric (colorjitter, grayscale, Gaussian
blur) plus Cutout.  Photometric ops touch only the image; Cutout
overwrites a random rectangle of the image with uniform random values and
sets the same rectangle of the mask to IGNORE so those pixels drop out of
the loss.

All ops consume an explicit numpy Generator (see rng.RngStream) and are
pure: same generator state in, same pair out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .raster import (
    IGNORE,
    flip_image,
    flip_mask,
    pad_image,
    pad_mask,
    resize_image,
    resize_mask,
)


@dataclass(frozen=True)
class WeakAugConfig:
    flip_prob: float = 0.5
    scale_range: tuple[float, float] = (0.5, 2.0)
    crop_size: int = 64

    def validate(self) -> None:
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            raise ValueError(f"scale_range must satisfy 0 < low <= high, got {self.scale_range}")
        if self.crop_size < 1:
            raise ValueError(f"crop_size must be >= 1, got {self.crop_size}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob must be in [0, 1], got {self.flip_prob}")


@dataclass(frozen=True)
class ColorJitterConfig:
    brightness: float = 0.5
    contrast: float = 0.5
    saturation: float = 0.5
    hue: float = 0.25
    apply_prob: float = 0.8


@dataclass(frozen=True)
class BlurConfig:
    apply_prob: float = 0.5
    sigma_range: tuple[float, float] = (0.1, 2.0)


@dataclass(frozen=True)
class CutoutConfig:
    apply_prob: float = 1.0
    area_fraction_range: tuple[float, float] = (0.02, 0.2)
    aspect_range: tuple[float, float] = (0.3, 3.3)


@dataclass(frozen=True)
class StrongAugConfig:
    colorjitter: ColorJitterConfig = field(default_factory=ColorJitterConfig)
    grayscale_prob: float = 0.2
    blur: BlurConfig = field(default_factory=BlurConfig)
    cutout: CutoutConfig = field(default_factory=CutoutConfig)

    def validate(self) -> None:
        for name, p in [
            ("colorjitter.apply_prob", self.colorjitter.apply_prob),
            ("grayscale_prob", self.grayscale_prob),
            ("blur.apply_prob", self.blur.apply_prob),
            ("cutout.apply_prob", self.cutout.apply_prob),
        ]:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.blur.sigma_range[0] <= 0:
            raise ValueError(f"blur sigma_range must be positive, got {self.blur.sigma_range}")

    def only(self, op: str) -> "StrongAugConfig":
        """Variant keeping a single op active (per-augmentation ablations)."""
        if op not in ("colorjitter", "grayscale", "blur", "cutout"):
            raise ValueError(f"unknown strong augmentation {op!r}")
        return StrongAugConfig(
            colorjitter=ColorJitterConfig(
                brightness=self.colorjitter.brightness,
                contrast=self.colorjitter.contrast,
                saturation=self.colorjitter.saturation,
                hue=self.colorjitter.hue,
                apply_prob=self.colorjitter.apply_prob if op == "colorjitter" else 0.0,
            ),
            grayscale_prob=self.grayscale_prob if op == "grayscale" else 0.0,
            blur=BlurConfig(
                apply_prob=self.blur.apply_prob if op == "blur" else 0.0,
                sigma_range=self.blur.sigma_range,
            ),
            cutout=CutoutConfig(
                apply_prob=self.cutout.apply_prob if op == "cutout" else 0.0,
                area_fraction_range=self.cutout.area_fraction_range,
                aspect_range=self.cutout.aspect_range,
            ),
        )


@dataclass(frozen=True)
class WeakTransform:
    """Record of one sampled weak augmentation, replayable on either raster."""

    flip: bool
    out_h: int
    out_w: int
    crop_size: int
    crop_r: int
    crop_c: int

    def apply_to_image(self, img: np.ndarray) -> np.ndarray:
        if self.flip:
            img = flip_image(img)
        img = resize_image(img, self.out_h, self.out_w)
        img = pad_image(img, self.crop_size, self.crop_size)
        r, c, s = self.crop_r, self.crop_c, self.crop_size
        return np.clip(img[r : r + s, c : c + s], 0.0, 1.0)

    def apply_to_mask(self, mask: np.ndarray) -> np.ndarray:
        if self.flip:
            mask = flip_mask(mask)
        mask = resize_mask(mask, self.out_h, self.out_w)
        mask = pad_mask(mask, self.crop_size, self.crop_size)
        r, c, s = self.crop_r, self.crop_c, self.crop_size
        return mask[r : r + s, c : c + s].copy()


def sample_weak_transform(
    in_h: int, in_w: int, cfg: WeakAugConfig, rng: np.random.Generator
) -> WeakTransform:
    flip = bool(rng.random() < cfg.flip_prob)
    scale = float(rng.uniform(cfg.scale_range[0], cfg.scale_range[1]))
    out_h = max(1, round(in_h * scale))
    out_w = max(1, round(in_w * scale))
    pad_h = max(out_h, cfg.crop_size)
    pad_w = max(out_w, cfg.crop_size)
    crop_r = int(rng.integers(0, pad_h - cfg.crop_size + 1))
    crop_c = int(rng.integers(0, pad_w - cfg.crop_size + 1))
    return WeakTransform(flip, out_h, out_w, cfg.crop_size, crop_r, crop_c)


def weak_augment(
    img: np.ndarray,
    mask: np.ndarray,
    cfg: WeakAugConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, WeakTransform]:
    """Flip / rescale / crop image and mask identically; returns the record."""
    if img.shape[:2] != mask.shape:
        raise ValueError(f"image {img.shape} and mask {mask.shape} disagree")
    t = sample_weak_transform(img.shape[0], img.shape[1], cfg, rng)
    return t.apply_to_image(img), t.apply_to_mask(mask), t


def grayscale(img: np.ndarray) -> np.ndarray:
    """Replace every channel by the luma combination of R, G, B."""
    if img.shape[2] != 3:
        raise ValueError(f"grayscale needs 3 channels, got {img.shape[2]}")
    luma = 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
    return np.repeat(luma[..., None], 3, axis=2).astype(img.dtype)


def blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel radius ceil(3*sigma), edge-replicated."""
    radius = max(1, int(np.ceil(3.0 * sigma)))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / max(sigma, 1e-12)) ** 2)
    kernel /= kernel.sum()
    kernel = kernel.astype(img.dtype)
    out = _conv_axis(img, kernel, radius, axis=0)
    out = _conv_axis(out, kernel, radius, axis=1)
    return out


def _conv_axis(img: np.ndarray, kernel: np.ndarray, radius: int, axis: int) -> np.ndarray:
    pad = [(0, 0)] * img.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(img, pad, mode="edge")
    out = np.zeros_like(img)
    n = img.shape[axis]
    sl = [slice(None)] * img.ndim
    for k, wk in enumerate(kernel):
        sl[axis] = slice(k, k + n)
        out += wk * padded[tuple(sl)]
    return out


@dataclass(frozen=True)
class ColorJitterDraws:
    brightness: float
    contrast: float
    saturation: float
    hue: float
    order: tuple[int, ...]  # permutation of (0=brightness, 1=contrast, 2=saturation, 3=hue)


def sample_colorjitter(cfg: ColorJitterConfig, rng: np.random.Generator) -> ColorJitterDraws:
    return ColorJitterDraws(
        brightness=float(rng.uniform(1 - cfg.brightness, 1 + cfg.brightness)),
        contrast=float(rng.uniform(1 - cfg.contrast, 1 + cfg.contrast)),
        saturation=float(rng.uniform(1 - cfg.saturation, 1 + cfg.saturation)),
        hue=float(rng.uniform(-cfg.hue, cfg.hue)),
        order=tuple(int(i) for i in rng.permutation(4)),
    )


def colorjitter(img: np.ndarray, draws: ColorJitterDraws) -> np.ndarray:
    """Brightness/contrast/saturation factors and hue rotation, random order."""
    if img.shape[2] != 3:
        raise ValueError(f"colorjitter needs 3 channels, got {img.shape[2]}")
    out = img.astype(np.float32)
    for op in draws.order:
        if op == 0:
            out = out * draws.brightness
        elif op == 1:
            luma = 0.299 * out[..., 0] + 0.587 * out[..., 1] + 0.114 * out[..., 2]
            out = (out - luma.mean()) * draws.contrast + luma.mean()
        elif op == 2:
            luma = 0.299 * out[..., 0] + 0.587 * out[..., 1] + 0.114 * out[..., 2]
            out = (out - luma[..., None]) * draws.saturation + luma[..., None]
        else:
            out = _rotate_hue(out, draws.hue)
        out = np.clip(out, 0.0, 1.0)
    return out.astype(img.dtype)


def _rotate_hue(img: np.ndarray, shift: float) -> np.ndarray:
    hsv = rgb_to_hsv(img)
    hsv[..., 0] = np.mod(hsv[..., 0] + shift, 1.0)
    return hsv_to_rgb(hsv)


def rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    maxc = np.max(img, axis=-1)
    minc = np.min(img, axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1).astype(np.float32)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    idx = (i.astype(np.int64) % 6)[..., None, None]
    # One gather over the sextant axis; elementwise identical to choosing
    # per channel from [v q p p t v] / [t v v q p p] / [p p t v v q].
    table = np.stack(
        [
            np.stack([v, t, p], axis=-1),
            np.stack([q, v, p], axis=-1),
            np.stack([p, v, t], axis=-1),
            np.stack([p, q, v], axis=-1),
            np.stack([t, p, v], axis=-1),
            np.stack([v, p, q], axis=-1),
        ],
        axis=-2,
    )
    rgb = np.take_along_axis(table, idx, axis=-2)[..., 0, :]
    return rgb.astype(np.float32)


@dataclass(frozen=True)
class CutoutBox:
    r0: int
    c0: int
    h: int
    w: int


def sample_cutout_box(
    in_h: int, in_w: int, cfg: CutoutConfig, rng: np.random.Generator
) -> CutoutBox:
    frac = float(rng.uniform(*cfg.area_fraction_range))
    log_aspect = rng.uniform(np.log(cfg.aspect_range[0]), np.log(cfg.aspect_range[1]))
    aspect = float(np.exp(log_aspect))
    area = frac * in_h * in_w
    h = int(np.clip(round(np.sqrt(area * aspect)), 1, in_h))
    w = int(np.clip(round(np.sqrt(area / aspect)), 1, in_w))
    r0 = int(rng.integers(0, in_h - h + 1))
    c0 = int(rng.integers(0, in_w - w + 1))
    return CutoutBox(r0, c0, h, w)


def apply_cutout(
    img: np.ndarray,
    mask: np.ndarray,
    box: CutoutBox,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    img = img.copy()
    mask = mask.copy()
    sl = (slice(box.r0, box.r0 + box.h), slice(box.c0, box.c0 + box.w))
    img[sl] = rng.uniform(0.0, 1.0, size=(box.h, box.w, img.shape[2])).astype(img.dtype)
    mask[sl] = IGNORE
    return img, mask


def strong_augment(
    img: np.ndarray,
    mask: np.ndarray,
    cfg: StrongAugConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Photometric jitter + Cutout.  Only Cutout ever touches the mask.

    Expects weak-augmented inputs (this runs after weak_augment in the
    re-training stream).  Draw order is fixed so a given generator state
    always yields the same augmentation.
    """
    out = img
    if rng.random() < cfg.colorjitter.apply_prob:
        out = colorjitter(out, sample_colorjitter(cfg.colorjitter, rng))
    if rng.random() < cfg.grayscale_prob:
        out = grayscale(out)
    if rng.random() < cfg.blur.apply_prob:
        sigma = float(rng.uniform(*cfg.blur.sigma_range))
        out = blur(out, sigma)
    if rng.random() < cfg.cutout.apply_prob:
        box = sample_cutout_box(out.shape[0], out.shape[1], cfg.cutout, rng)
        out, mask = apply_cutout(out, mask, box, rng)
    return np.clip(out, 0.0, 1.0), mask
