"""Per-pixel linear segmentation model trained with SGD.

The model is a multinomial softmax regressor over 17 hand-built pixel
features: the 3 raw channels, local window mean and standard deviation at
radii 1 and 3 per channel (12), and the normalized (row, col) position
(2).  It is deliberately small so whole experiment grids run on one core,
and the interface (features -> logits -> loss/grad) is pluggable if a
richer model is ever needed.

Training is SGD with momentum, L2 weight decay on the weight matrix, and
polynomial learning-rate decay; the bias (the "head") trains at 10x the
base rate.  Cross-entropy ignores IGNORE pixels exactly: they contribute
zero loss and bitwise-zero gradient.
"""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass, field

import numpy as np

from .raster import IGNORE

NUM_FEATURES = 17
_WINDOW_RADII = (1, 3)

CHECKPOINT_MAGIC = b"SSCK"
CHECKPOINT_VERSION = 1
CHECKPOINT_TAGS = ("1/3", "2/3", "3/3")


class LabelError(ValueError):
    """Target mask holds a class id outside {0..C-1} u {IGNORE}."""


class NumericError(RuntimeError):
    """Training hit non-finite numbers and was aborted."""


class CheckpointError(ValueError):
    """Corrupt or incompatible checkpoint bytes."""


@dataclass
class ModelParams:
    weights: np.ndarray  # (C, F) float64
    bias: np.ndarray  # (C,) float64
    step: int = 0
    seed: int = 0

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(self.weights.copy(), self.bias.copy(), self.step, self.seed)


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 8
    epochs: int = 30
    poly_power: float = 0.9
    head_lr_multiplier: float = 10.0
    unlabeled_loss_weight: float = 1.0
    # Passes over the mixed roster during re-training stages.  The labeled
    # set is tiny next to the pseudo-labeled pool, so one epoch count
    # cannot serve both; None means "same as epochs".
    retrain_epochs: int | None = None

    def validate(self) -> None:
        if self.base_lr <= 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.retrain_epochs is not None and self.retrain_epochs < 1:
            raise ValueError(f"retrain_epochs must be >= 1, got {self.retrain_epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.unlabeled_loss_weight < 0:
            raise ValueError(
                f"unlabeled_loss_weight must be >= 0, got {self.unlabeled_loss_weight}"
            )


@dataclass(frozen=True)
class Checkpoint:
    params: ModelParams
    tag: str  # one of CHECKPOINT_TAGS
    config_hash: str = ""


def init_params(num_classes: int, seed: int) -> ModelParams:
    """Small random weights, zero bias; fully determined by the seed."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    weights = rng.normal(0.0, 0.01, size=(num_classes, NUM_FEATURES))
    bias = np.zeros(num_classes, dtype=np.float64)
    return ModelParams(weights, bias, step=0, seed=int(seed))


def _window_from_cumsum(cs: np.ndarray, radius: int, axis: int) -> np.ndarray:
    """Clipped-window sums [i-radius, i+radius] given cs = cumsum along axis.

    windowsum[i] = cs[min(i+r, n-1)] - cs[i-r-1], with the second term
    dropped when the window starts at the edge; pure slicing, no gathers.
    The cumsum is taken once by the caller so several radii can share it.
    """
    n = cs.shape[axis]
    if radius >= n:
        radius = n - 1

    def sl(a: int, b: int):
        return tuple(
            slice(a, b) if d == axis else slice(None) for d in range(cs.ndim)
        )

    out = np.empty_like(cs)
    out[sl(0, n - radius)] = cs[sl(radius, n)]
    out[sl(n - radius, n)] = cs[sl(n - 1, n)]
    out[sl(radius + 1, n)] -= cs[sl(0, n - radius - 1)]
    return out


def _sliding_sum(x: np.ndarray, radius: int, axis: int) -> np.ndarray:
    """Sum over a clipped window [i-radius, i+radius] along one axis."""
    return _window_from_cumsum(np.cumsum(x, axis=axis), radius, axis)


@functools.lru_cache(maxsize=64)
def _window_counts(h: int, w: int, radius: int) -> np.ndarray:
    rows = np.minimum(np.arange(h) + radius, h - 1) - np.maximum(np.arange(h) - radius, 0) + 1
    cols = np.minimum(np.arange(w) + radius, w - 1) - np.maximum(np.arange(w) - radius, 0) + 1
    counts = rows[:, None].astype(np.float32) * cols[None, :].astype(np.float32)
    counts.setflags(write=False)
    return counts


def pixel_features_batch(imgs: np.ndarray) -> np.ndarray:
    """(B, H, W, 17) float32 features for a stack of (B, H, W, 3) images.

    Windows never cross image boundaries, so this equals stacking
    pixel_features of each image (bitwise — same operations, same order).
    float32 is plenty for inputs; everything downstream of the weight
    matmul runs in float64.
    """
    x = np.asarray(imgs, dtype=np.float32)
    b, h, w, _ = x.shape
    out = np.empty((b, h, w, NUM_FEATURES), dtype=np.float32)
    out[..., 0:3] = x
    x2 = x * x
    cs1 = np.cumsum(x, axis=1)
    cs1_sq = np.cumsum(x2, axis=1)
    col = 3
    for radius in _WINDOW_RADII:
        s1 = _sliding_sum(_window_from_cumsum(cs1, radius, 1), radius, 2)
        s2 = _sliding_sum(_window_from_cumsum(cs1_sq, radius, 1), radius, 2)
        n = _window_counts(h, w, radius)[None, ..., None]
        mean = s1 / n
        var = np.maximum(s2 / n - mean * mean, 0.0)
        out[..., col : col + 3] = mean
        out[..., col + 3 : col + 6] = np.sqrt(var)
        col += 6
    out[..., col] = (((np.arange(h) + 0.5) / h).astype(np.float32))[None, :, None]
    out[..., col + 1] = (((np.arange(w) + 0.5) / w).astype(np.float32))[None, None, :]
    return out


def pixel_features(img: np.ndarray) -> np.ndarray:
    """(H, W, 17) float32 feature map for a (H, W, 3) image."""
    return pixel_features_batch(np.asarray(img)[None])[0]


def forward(params: ModelParams, img: np.ndarray) -> np.ndarray:
    """Per-pixel logits (H, W, C)."""
    return forward_features(params, pixel_features(img))


def forward_features(params: ModelParams, feats: np.ndarray) -> np.ndarray:
    """Logits in the dtype of `feats` (float32 training path stays float32)."""
    if not (np.all(np.isfinite(params.weights)) and np.all(np.isfinite(params.bias))):
        raise NumericError("model parameters are not finite")
    w = params.weights.T.astype(feats.dtype, copy=False)
    b = params.bias.astype(feats.dtype, copy=False)
    return feats @ w + b


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_ignore(
    logits: np.ndarray,
    target: np.ndarray,
    pixel_weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood over valid pixels and its logit gradient.

    Pixels with target == IGNORE contribute zero loss and an exactly-zero
    gradient row.  Optional per-pixel weights (e.g. a labeled/unlabeled
    tradeoff) rescale each pixel's contribution to the weighted mean.
    """
    if logits.shape[:-1] != target.shape:
        raise ValueError(f"logits {logits.shape} incompatible with target {target.shape}")
    num_classes = logits.shape[-1]
    dt = logits.dtype if logits.dtype in (np.float32, np.float64) else np.float64
    flat_logits = logits.reshape(-1, num_classes)
    flat_target = target.reshape(-1)
    valid = flat_target != IGNORE
    all_valid = bool(valid.all())
    if not all_valid and not np.any(valid):
        return 0.0, np.zeros(logits.shape, dtype=dt)
    t = (flat_target if all_valid else flat_target[valid]).astype(np.int64)
    if t.max() >= num_classes:
        raise LabelError(f"target class {t.max()} >= num_classes {num_classes}")
    z = flat_logits if all_valid else flat_logits[valid]
    zmax = z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)) + zmax
    logp = z - logsumexp
    if pixel_weights is None:
        w = np.ones(t.shape[0], dtype=dt)
    else:
        flat_w = pixel_weights.reshape(-1)
        w = (flat_w if all_valid else flat_w[valid]).astype(dt)
    # Scalar reductions stay float64 regardless of the working dtype.
    wsum = float(w.sum(dtype=np.float64))
    if wsum <= 0:
        return 0.0, np.zeros(logits.shape, dtype=dt)
    rows = np.arange(t.shape[0])
    loss = float(-(w * logp[rows, t]).sum(dtype=np.float64) / wsum)
    p = np.exp(logp)
    p[rows, t] -= 1.0
    p *= np.asarray(w / wsum, dtype=dt)[:, None]
    if all_valid:
        return loss, p.reshape(logits.shape)
    grad = np.zeros_like(flat_logits, dtype=dt)
    grad[valid] = p
    return loss, grad.reshape(logits.shape)


def poly_lr(base_lr: float, iteration: int, total_iter: int, power: float) -> float:
    """base_lr * (1 - iteration/total_iter) ** power."""
    if not 0 <= iteration <= total_iter:
        raise ValueError(f"iteration {iteration} outside [0, {total_iter}]")
    return float(base_lr * (1.0 - iteration / total_iter) ** power)


def loss_and_grads(
    params: ModelParams,
    feats: np.ndarray,
    target: np.ndarray,
    weight_decay: float,
    pixel_weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Full training objective: CE over valid pixels + (wd/2)*||W||^2.

    Returns (loss, dL/dW, dL/db); feats is (..., F), target (...) labels.
    """
    logits = forward_features(params, feats)
    ce, grad_logits = cross_entropy_ignore(logits, target, pixel_weights)
    flat_g = grad_logits.reshape(-1, params.num_classes)
    flat_f = feats.reshape(-1, NUM_FEATURES)
    grad_w = flat_g.T @ flat_f + weight_decay * params.weights
    grad_b = flat_g.sum(axis=0)
    loss = ce + 0.5 * weight_decay * float(np.sum(params.weights**2))
    return loss, grad_w, grad_b


@dataclass
class SgdState:
    """Momentum buffers; created fresh at the start of every training run."""

    vel_w: np.ndarray
    vel_b: np.ndarray

    @classmethod
    def zeros(cls, params: ModelParams) -> "SgdState":
        return cls(np.zeros_like(params.weights), np.zeros_like(params.bias))


def train_step(
    params: ModelParams,
    batch: list[tuple[np.ndarray, np.ndarray]],
    cfg: TrainConfig,
    iteration: int,
    total_iter: int,
    state: SgdState | None = None,
    sample_weights: list[float] | None = None,
) -> tuple[ModelParams, float]:
    """One SGD step on a batch of (image, mask) pairs; returns pre-update loss.

    The bias acts as the segmentation head and trains at
    head_lr_multiplier times the decayed base rate.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    shapes = {img.shape for img, _ in batch}
    if len(shapes) == 1:
        feats = pixel_features_batch(np.stack([img for img, _ in batch])).reshape(
            -1, NUM_FEATURES
        )
    else:
        feats = np.concatenate(
            [pixel_features(img).reshape(-1, NUM_FEATURES) for img, _ in batch]
        )
    target = np.concatenate([mask.reshape(-1) for _, mask in batch])
    if sample_weights is None:
        pw = None
    else:
        pw = np.concatenate(
            [np.full(img.shape[0] * img.shape[1], sw) for (img, _), sw in zip(batch, sample_weights)]
        )
    loss, grad_w, grad_b = loss_and_grads(params, feats, target, cfg.weight_decay, pw)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss} at iteration {iteration}")
    lr = poly_lr(cfg.base_lr, iteration, total_iter, cfg.poly_power)
    if state is None:
        state = SgdState.zeros(params)
    state.vel_w = cfg.momentum * state.vel_w + grad_w
    state.vel_b = cfg.momentum * state.vel_b + grad_b
    new = params.copy()
    new.weights -= lr * state.vel_w
    new.bias -= cfg.head_lr_multiplier * lr * state.vel_b
    new.step = params.step + 1
    if not (np.all(np.isfinite(new.weights)) and np.all(np.isfinite(new.bias))):
        raise NumericError(f"parameters overflowed at iteration {iteration}")
    return new, loss


def save_checkpoint(params: ModelParams, tag: str, config_hash: str = "") -> bytes:
    """Binary snapshot; see docs/formats.md for the layout."""
    if tag not in CHECKPOINT_TAGS:
        raise CheckpointError(f"tag must be one of {CHECKPOINT_TAGS}, got {tag!r}")
    c, f = params.weights.shape
    thirds = CHECKPOINT_TAGS.index(tag) + 1
    hash_bytes = config_hash.encode("ascii")
    head = struct.pack("<4sIIIQ", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, c, f, params.step)
    body = (
        np.ascontiguousarray(params.weights, dtype="<f8").tobytes()
        + np.ascontiguousarray(params.bias, dtype="<f8").tobytes()
        + struct.pack("<qI", params.seed, thirds)
        + struct.pack("<I", len(hash_bytes))
        + hash_bytes
    )
    return head + body


def load_checkpoint(data: bytes) -> Checkpoint:
    head_size = struct.calcsize("<4sIIIQ")
    if len(data) < head_size:
        raise CheckpointError("checkpoint truncated: header incomplete")
    magic, version, c, f, step = struct.unpack_from("<4sIIIQ", data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = head_size
    need = c * f * 8 + c * 8 + struct.calcsize("<qI") + 4
    if len(data) < off + need:
        raise CheckpointError("checkpoint truncated: payload incomplete")
    weights = np.frombuffer(data, dtype="<f8", count=c * f, offset=off).reshape(c, f).copy()
    off += c * f * 8
    bias = np.frombuffer(data, dtype="<f8", count=c, offset=off).copy()
    off += c * 8
    seed, thirds = struct.unpack_from("<qI", data, off)
    off += struct.calcsize("<qI")
    (hash_len,) = struct.unpack_from("<I", data, off)
    off += 4
    if len(data) < off + hash_len:
        raise CheckpointError("checkpoint truncated: hash incomplete")
    config_hash = data[off : off + hash_len].decode("ascii")
    if not 1 <= thirds <= 3:
        raise CheckpointError(f"bad checkpoint tag index {thirds}")
    params = ModelParams(weights, bias, step=int(step), seed=int(seed))
    return Checkpoint(params, CHECKPOINT_TAGS[thirds - 1], config_hash)
