"""Raster conventions shared by every module.

Images are float32 arrays of shape (H, W, C) with values in [0, 1].
Segmentation masks are uint8 arrays of shape (H, W) holding class ids in
{0..num_classes-1} plus the reserved IGNORE sentinel (255).  Pixels marked
IGNORE are excluded from losses and metrics.

Both rasters serialize to a small binary format (magic, version, H, W, C
header followed by the raw payload); see docs/formats.md for the exact
byte layout.
"""

from __future__ import annotations

import functools
import struct

import numpy as np

IGNORE = 255

MASK_MAGIC = b"SSMK"
IMAGE_MAGIC = b"SSIM"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIIII")  # magic, version, H, W, C


class RasterError(ValueError):
    """Malformed raster data or incompatible shapes."""


def check_image(img: np.ndarray) -> np.ndarray:
    if img.ndim != 3:
        raise RasterError(f"image must be (H, W, C), got shape {img.shape}")
    h, w, _ = img.shape
    if h < 1 or w < 1:
        raise RasterError(f"image must have height, width >= 1, got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise RasterError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise RasterError("image values must lie in [0, 1]")
    return img


def check_mask(mask: np.ndarray, num_classes: int) -> np.ndarray:
    if mask.ndim != 2:
        raise RasterError(f"mask must be (H, W), got shape {mask.shape}")
    bad = (mask >= num_classes) & (mask != IGNORE)
    if np.any(bad):
        raise RasterError(
            f"mask contains ids >= {num_classes} that are not IGNORE ({IGNORE})"
        )
    return mask


def check_same_shape(pred: np.ndarray, ref: np.ndarray) -> None:
    if pred.shape != ref.shape:
        raise RasterError(f"shape mismatch: {pred.shape} vs {ref.shape}")


def flip_image(img: np.ndarray) -> np.ndarray:
    """Horizontal (left-right) flip."""
    return img[:, ::-1].copy()


def flip_mask(mask: np.ndarray) -> np.ndarray:
    return mask[:, ::-1].copy()


@functools.lru_cache(maxsize=256)
def _bilinear_geometry(
    h: int, w: int, out_h: int, out_w: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Clipped corner indices and float64 lerp fractions for one resize shape."""
    r = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    c = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    r0 = np.floor(r).astype(np.int64)
    c0 = np.floor(c).astype(np.int64)
    geo = (
        np.clip(r0, 0, h - 1),
        np.clip(r0 + 1, 0, h - 1),
        np.clip(c0, 0, w - 1),
        np.clip(c0 + 1, 0, w - 1),
        r - r0,
        c - c0,
    )
    for a in geo:
        a.setflags(write=False)
    return geo


def resize_image(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W, C) array (half-pixel-center convention)."""
    h, w = img.shape[:2]
    if (out_h, out_w) == (h, w):
        return img.copy()
    r0c, r1c, c0c, c1c, fr64, fc64 = _bilinear_geometry(h, w, out_h, out_w)
    fr = fr64.astype(img.dtype)[:, None, None]
    fc = fc64.astype(img.dtype)[None, :, None]
    a0 = img[r0c]
    a1 = img[r1c]
    top = a0[:, c0c] * (1 - fc) + a0[:, c1c] * fc
    bot = a1[:, c0c] * (1 - fc) + a1[:, c1c] * fc
    return top * (1 - fr) + bot * fr


def resize_image_batch(imgs: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a (B, H, W, C) stack; same math as resize_image
    applied per image (the interpolation weights depend only on geometry)."""
    h, w = imgs.shape[1:3]
    if (out_h, out_w) == (h, w):
        return imgs.copy()
    r0c, r1c, c0c, c1c, fr64, fc64 = _bilinear_geometry(h, w, out_h, out_w)
    fr = fr64.astype(imgs.dtype)[None, :, None, None]
    fc = fc64.astype(imgs.dtype)[None, None, :, None]
    a0 = imgs[:, r0c]
    a1 = imgs[:, r1c]
    top = a0[:, :, c0c] * (1 - fc) + a0[:, :, c1c] * fc
    bot = a1[:, :, c0c] * (1 - fc) + a1[:, :, c1c] * fc
    return top * (1 - fr) + bot * fr


def resize_mask(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbour resize of an (H, W) label array.

    Uses the same half-pixel-center mapping as resize_image so geometry
    stays aligned between an image and its mask.
    """
    h, w = mask.shape
    if (out_h, out_w) == (h, w):
        return mask.copy()
    r = np.minimum(
        np.floor((np.arange(out_h) + 0.5) * (h / out_h)).astype(np.int64), h - 1
    )
    c = np.minimum(
        np.floor((np.arange(out_w) + 0.5) * (w / out_w)).astype(np.int64), w - 1
    )
    return mask[r][:, c]


def pad_image(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pad bottom/right with the per-channel mean of the image."""
    h, w, ch = img.shape
    if h >= out_h and w >= out_w:
        return img
    out = np.empty((max(h, out_h), max(w, out_w), ch), dtype=img.dtype)
    out[:] = img.reshape(-1, ch).mean(axis=0)
    out[:h, :w] = img
    return out


def pad_mask(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pad bottom/right with IGNORE so padded pixels never reach the loss."""
    h, w = mask.shape
    if h >= out_h and w >= out_w:
        return mask
    out = np.full((max(h, out_h), max(w, out_w)), IGNORE, dtype=mask.dtype)
    out[:h, :w] = mask
    return out


def save_mask_bytes(mask: np.ndarray, num_classes: int) -> bytes:
    check_mask(mask, num_classes)
    h, w = mask.shape
    header = _HEADER.pack(MASK_MAGIC, FORMAT_VERSION, h, w, num_classes)
    return header + np.ascontiguousarray(mask, dtype=np.uint8).tobytes()


def load_mask_bytes(data: bytes) -> tuple[np.ndarray, int]:
    """Returns (mask, num_classes)."""
    magic, version, h, w, c = _read_header(data, MASK_MAGIC, "mask")
    payload = data[_HEADER.size :]
    if len(payload) != h * w:
        raise RasterError(f"mask payload truncated: want {h * w} bytes, got {len(payload)}")
    mask = np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()
    return check_mask(mask, c), c


def save_image_bytes(img: np.ndarray) -> bytes:
    check_image(img)
    h, w, c = img.shape
    header = _HEADER.pack(IMAGE_MAGIC, FORMAT_VERSION, h, w, c)
    return header + np.ascontiguousarray(img, dtype="<f4").tobytes()


def load_image_bytes(data: bytes) -> np.ndarray:
    magic, version, h, w, c = _read_header(data, IMAGE_MAGIC, "image")
    payload = data[_HEADER.size :]
    if len(payload) != h * w * c * 4:
        raise RasterError(
            f"image payload truncated: want {h * w * c * 4} bytes, got {len(payload)}"
        )
    img = np.frombuffer(payload, dtype="<f4").reshape(h, w, c).astype(np.float32)
    return check_image(img)


def _read_header(data: bytes, want_magic: bytes, kind: str):
    if len(data) < _HEADER.size:
        raise RasterError(f"{kind} file too short for header")
    magic, version, h, w, c = _HEADER.unpack_from(data)
    if magic != want_magic:
        raise RasterError(f"bad {kind} magic {magic!r}")
    if version != FORMAT_VERSION:
        raise RasterError(f"unsupported {kind} format version {version}")
    if h < 1 or w < 1 or c < 1:
        raise RasterError(f"bad {kind} dimensions {(h, w, c)}")
    return magic, version, h, w, c
