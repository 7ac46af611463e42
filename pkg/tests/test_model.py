"""Tests for the linear per-pixel model: features, losses, SGD, checkpoints.

Gradient tests compare against central finite differences; the window
features are checked against a direct per-pixel loop.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfseg.model import (
    CHECKPOINT_TAGS,
    NUM_FEATURES,
    CheckpointError,
    LabelError,
    ModelParams,
    NumericError,
    SgdState,
    TrainConfig,
    cross_entropy_ignore,
    forward_features,
    init_params,
    load_checkpoint,
    loss_and_grads,
    pixel_features,
    pixel_features_batch,
    poly_lr,
    save_checkpoint,
    softmax,
    train_step,
)
from selfseg.raster import IGNORE


def rand_image(rng, h=6, w=7):
    return rng.random((h, w, 3)).astype(np.float32)


# ---------------------------------------------------------------------------
# features


def window_stats_reference(img, radius):
    """Per-pixel clipped-window mean/std the slow, obvious way (float64)."""
    h, w, _ = img.shape
    mean = np.zeros((h, w, 3))
    std = np.zeros((h, w, 3))
    for i in range(h):
        for j in range(w):
            r0, r1 = max(i - radius, 0), min(i + radius, h - 1) + 1
            c0, c1 = max(j - radius, 0), min(j + radius, w - 1) + 1
            patch = img[r0:r1, c0:c1].reshape(-1, 3).astype(np.float64)
            mean[i, j] = patch.mean(axis=0)
            std[i, j] = patch.std(axis=0)
    return mean, std


def test_feature_shape_and_raw_channels():
    img = rand_image(np.random.default_rng(0))
    feats = pixel_features(img)
    assert feats.shape == (6, 7, NUM_FEATURES)
    assert feats.dtype == np.float32
    assert np.array_equal(feats[..., 0:3], img)


def test_window_features_match_bruteforce():
    img = rand_image(np.random.default_rng(1), h=7, w=9)
    feats = pixel_features(img)
    col = 3
    for radius in (1, 3):
        mean, std = window_stats_reference(img, radius)
        np.testing.assert_allclose(feats[..., col : col + 3], mean, atol=1e-5)
        np.testing.assert_allclose(feats[..., col + 3 : col + 6], std, atol=1e-4)
        col += 6


def test_coordinate_channels():
    feats = pixel_features(rand_image(np.random.default_rng(2), h=5, w=8))
    rows = ((np.arange(5) + 0.5) / 5).astype(np.float32)
    cols = ((np.arange(8) + 0.5) / 8).astype(np.float32)
    assert np.array_equal(feats[:, 0, 15], rows)
    assert np.array_equal(feats[0, :, 16], cols)


def test_constant_image_has_zero_window_std():
    img = np.full((5, 5, 3), 0.25, dtype=np.float32)
    feats = pixel_features(img)
    np.testing.assert_allclose(feats[..., 3:6], 0.25, atol=1e-7)
    np.testing.assert_allclose(feats[..., 6:9], 0.0, atol=1e-7)


@settings(max_examples=25)
@given(
    b=st.integers(1, 4),
    h=st.integers(1, 9),
    w=st.integers(1, 9),
    seed=st.integers(0, 1000),
)
def test_batch_features_equal_stacked_single(b, h, w, seed):
    imgs = np.random.default_rng(seed).random((b, h, w, 3)).astype(np.float32)
    batched = pixel_features_batch(imgs)
    singles = np.stack([pixel_features(im) for im in imgs])
    assert np.array_equal(batched, singles)


# ---------------------------------------------------------------------------
# softmax / cross entropy


def test_softmax_rows_sum_to_one_and_survive_large_logits():
    logits = np.array([[1e4, 1e4 + 1.0], [-1e4, 0.0]])
    p = softmax(logits)
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(p[0], [1 / (1 + np.e), np.e / (1 + np.e)], atol=1e-12)


def test_cross_entropy_uniform_logits_is_log_num_classes():
    logits = np.zeros((2, 2, 4))
    target = np.array([[0, 1], [2, 3]], dtype=np.uint8)
    loss, grad = cross_entropy_ignore(logits, target)
    assert loss == pytest.approx(np.log(4.0), abs=1e-12)
    # grad = (p - onehot) / N with p uniform
    onehot = np.eye(4)[target]
    np.testing.assert_allclose(grad, (0.25 - onehot) / 4, atol=1e-12)


def test_cross_entropy_ignore_rows_are_exact_zeros():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(4, 5, 3))
    target = rng.integers(0, 3, size=(4, 5)).astype(np.uint8)
    target[1, 2] = IGNORE
    target[3, 0] = IGNORE
    loss, grad = cross_entropy_ignore(logits, target)
    assert np.all(grad[1, 2] == 0.0)
    assert np.all(grad[3, 0] == 0.0)
    # loss matches the mean over the valid subset computed by hand
    valid = target != IGNORE
    z = logits[valid]
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    expect = -logp[np.arange(valid.sum()), target[valid]].mean()
    assert loss == pytest.approx(expect, rel=1e-12)


def test_cross_entropy_all_ignored_is_zero():
    logits = np.random.default_rng(4).normal(size=(3, 3, 2))
    target = np.full((3, 3), IGNORE, dtype=np.uint8)
    loss, grad = cross_entropy_ignore(logits, target)
    assert loss == 0.0
    assert np.all(grad == 0.0)


def test_cross_entropy_rejects_out_of_range_class():
    logits = np.zeros((2, 2, 3))
    target = np.array([[0, 1], [2, 3]], dtype=np.uint8)
    with pytest.raises(LabelError):
        cross_entropy_ignore(logits, target)


def test_cross_entropy_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        cross_entropy_ignore(np.zeros((2, 3, 2)), np.zeros((3, 2), dtype=np.uint8))


def test_cross_entropy_follows_logits_dtype():
    logits = np.random.default_rng(5).normal(size=(2, 2, 3))
    target = np.zeros((2, 2), dtype=np.uint8)
    _, g32 = cross_entropy_ignore(logits.astype(np.float32), target)
    _, g64 = cross_entropy_ignore(logits, target)
    assert g32.dtype == np.float32
    assert g64.dtype == np.float64


def test_zero_pixel_weight_equals_dropping_the_pixel():
    rng = np.random.default_rng(6)
    logits = rng.normal(size=(1, 6, 3))
    target = rng.integers(0, 3, size=(1, 6)).astype(np.uint8)
    weights = np.array([[1.0, 1.0, 0.0, 1.0, 0.0, 1.0]])
    loss_w, grad_w = cross_entropy_ignore(logits, target, weights)
    kept = weights[0] > 0
    loss_d, grad_d = cross_entropy_ignore(logits[:, kept], target[:, kept])
    assert loss_w == pytest.approx(loss_d, rel=1e-12)
    np.testing.assert_allclose(grad_w[:, kept], grad_d, atol=1e-15)
    assert np.all(grad_w[:, ~kept] == 0.0)


def test_pixel_weights_are_scale_invariant():
    rng = np.random.default_rng(7)
    logits = rng.normal(size=(3, 3, 2))
    target = rng.integers(0, 2, size=(3, 3)).astype(np.uint8)
    w = rng.random((3, 3))
    loss1, grad1 = cross_entropy_ignore(logits, target, w)
    loss2, grad2 = cross_entropy_ignore(logits, target, 2.0 * w)
    assert loss1 == pytest.approx(loss2, rel=1e-12)
    np.testing.assert_allclose(grad1, grad2, atol=1e-15)


def test_zero_total_weight_gives_zero_loss_and_grad():
    logits = np.ones((2, 2, 2))
    target = np.zeros((2, 2), dtype=np.uint8)
    loss, grad = cross_entropy_ignore(logits, target, np.zeros((2, 2)))
    assert loss == 0.0
    assert np.all(grad == 0.0)


# ---------------------------------------------------------------------------
# full objective gradients vs finite differences


def fd_grads(params, feats, target, wd, pw, h=1e-6):
    """Central-difference gradients of the full objective."""

    def f(p):
        return loss_and_grads(p, feats, target, wd, pw)[0]

    gw = np.zeros_like(params.weights)
    for idx in np.ndindex(*params.weights.shape):
        p = params.copy()
        p.weights[idx] += h
        up = f(p)
        p.weights[idx] -= 2 * h
        down = f(p)
        gw[idx] = (up - down) / (2 * h)
    gb = np.zeros_like(params.bias)
    for i in range(params.bias.shape[0]):
        p = params.copy()
        p.bias[i] += h
        up = f(p)
        p.bias[i] -= 2 * h
        down = f(p)
        gb[i] = (up - down) / (2 * h)
    return gw, gb


@pytest.mark.parametrize("use_weights", [False, True])
def test_analytic_gradients_match_finite_differences(use_weights):
    rng = np.random.default_rng(8 + use_weights)
    params = init_params(3, seed=11)
    feats = rng.normal(size=(10, NUM_FEATURES))  # float64 path
    target = rng.integers(0, 3, size=10).astype(np.uint8)
    target[4] = IGNORE
    pw = rng.random(10) if use_weights else None
    loss, gw, gb = loss_and_grads(params, feats, target, 0.01, pw)
    fw, fb = fd_grads(params, feats, target, 0.01, pw)
    scale = max(np.abs(fw).max(), np.abs(fb).max())
    assert np.abs(gw - fw).max() / scale < 1e-6
    assert np.abs(gb - fb).max() / scale < 1e-6


def test_weight_decay_adds_exactly_its_term():
    rng = np.random.default_rng(10)
    params = init_params(2, seed=3)
    feats = rng.normal(size=(6, NUM_FEATURES))
    target = rng.integers(0, 2, size=6).astype(np.uint8)
    loss0, gw0, gb0 = loss_and_grads(params, feats, target, 0.0)
    loss1, gw1, gb1 = loss_and_grads(params, feats, target, 0.5)
    np.testing.assert_allclose(gw1 - gw0, 0.5 * params.weights, atol=1e-15)
    np.testing.assert_array_equal(gb1, gb0)
    assert loss1 - loss0 == pytest.approx(0.25 * np.sum(params.weights**2), rel=1e-12)


# ---------------------------------------------------------------------------
# learning-rate schedule


def test_poly_lr_endpoints_and_linear_case():
    assert poly_lr(0.05, 0, 100, 0.9) == 0.05
    assert poly_lr(0.05, 100, 100, 0.9) == 0.0
    assert poly_lr(1.0, 25, 100, 1.0) == pytest.approx(0.75, abs=1e-15)


def test_poly_lr_strictly_decreasing():
    vals = [poly_lr(0.1, i, 57, 0.9) for i in range(58)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("it", [-1, 101])
def test_poly_lr_rejects_out_of_range_iteration(it):
    with pytest.raises(ValueError):
        poly_lr(0.1, it, 100, 0.9)


# ---------------------------------------------------------------------------
# SGD steps


def small_batch(rng, n=2, h=4, w=4, num_classes=3):
    batch = []
    for _ in range(n):
        img = rng.random((h, w, 3)).astype(np.float32)
        mask = rng.integers(0, num_classes, size=(h, w)).astype(np.uint8)
        batch.append((img, mask))
    return batch


def test_train_step_matches_update_equation():
    rng = np.random.default_rng(11)
    cfg = TrainConfig(base_lr=0.1, momentum=0.9, weight_decay=1e-3)
    params = init_params(3, seed=1)
    batch = small_batch(rng)
    state = SgdState.zeros(params)

    feats = pixel_features_batch(np.stack([im for im, _ in batch])).reshape(-1, NUM_FEATURES)
    target = np.concatenate([m.reshape(-1) for _, m in batch])
    exp_loss, gw, gb = loss_and_grads(params, feats, target, cfg.weight_decay)
    lr = poly_lr(cfg.base_lr, 0, 10, cfg.poly_power)

    new, loss = train_step(params, batch, cfg, 0, 10, state)
    assert loss == exp_loss  # pre-update loss
    np.testing.assert_array_equal(new.weights, params.weights - lr * gw)
    np.testing.assert_array_equal(new.bias, params.bias - cfg.head_lr_multiplier * lr * gb)
    assert new.step == params.step + 1

    # second step folds the first gradient into the momentum buffer
    feats2 = feats
    exp2, gw2, gb2 = loss_and_grads(new, feats2, target, cfg.weight_decay)
    vel_w = cfg.momentum * gw + gw2
    vel_b = cfg.momentum * gb + gb2
    lr2 = poly_lr(cfg.base_lr, 1, 10, cfg.poly_power)
    new2, loss2 = train_step(new, batch, cfg, 1, 10, state)
    assert loss2 == exp2
    np.testing.assert_allclose(new2.weights, new.weights - lr2 * vel_w, atol=1e-15)
    np.testing.assert_allclose(new2.bias, new.bias - cfg.head_lr_multiplier * lr2 * vel_b, atol=1e-15)


def test_train_step_zero_sample_weight_drops_the_sample():
    rng = np.random.default_rng(12)
    cfg = TrainConfig(base_lr=0.05)
    params = init_params(3, seed=2)
    batch = small_batch(rng, n=3)
    full, _ = train_step(params, batch, cfg, 0, 5, SgdState.zeros(params), [1.0, 0.0, 1.0])
    sub, _ = train_step(params, [batch[0], batch[2]], cfg, 0, 5, SgdState.zeros(params))
    np.testing.assert_allclose(full.weights, sub.weights, atol=1e-12)
    np.testing.assert_allclose(full.bias, sub.bias, atol=1e-12)


def test_train_step_handles_mixed_shapes():
    rng = np.random.default_rng(13)
    cfg = TrainConfig()
    params = init_params(2, seed=4)
    img_a = rng.random((4, 4, 3)).astype(np.float32)
    img_b = rng.random((3, 5, 3)).astype(np.float32)
    mask_a = rng.integers(0, 2, size=(4, 4)).astype(np.uint8)
    mask_b = rng.integers(0, 2, size=(3, 5)).astype(np.uint8)
    new, loss = train_step(params, [(img_a, mask_a), (img_b, mask_b)], cfg, 0, 5)
    assert np.isfinite(loss)

    feats = np.concatenate(
        [pixel_features(img_a).reshape(-1, NUM_FEATURES), pixel_features(img_b).reshape(-1, NUM_FEATURES)]
    )
    target = np.concatenate([mask_a.reshape(-1), mask_b.reshape(-1)])
    exp_loss, _, _ = loss_and_grads(params, feats, target, cfg.weight_decay)
    assert loss == exp_loss


def test_train_step_rejects_empty_batch():
    with pytest.raises(ValueError):
        train_step(init_params(2, 0), [], TrainConfig(), 0, 5)


def test_train_step_flags_parameter_overflow():
    rng = np.random.default_rng(14)
    cfg = TrainConfig(base_lr=1e308, momentum=0.0)
    params = init_params(2, seed=5)
    batch = small_batch(rng, n=1, num_classes=2)
    with pytest.raises(NumericError):
        train_step(params, batch, cfg, 0, 5)


def test_forward_rejects_non_finite_params():
    params = init_params(2, seed=6)
    params.weights[0, 0] = np.nan
    with pytest.raises(NumericError):
        forward_features(params, np.zeros((4, NUM_FEATURES)))


# ---------------------------------------------------------------------------
# init / checkpoints


def test_init_params_deterministic_per_seed():
    a = init_params(4, seed=9)
    b = init_params(4, seed=9)
    c = init_params(4, seed=10)
    assert np.array_equal(a.weights, b.weights)
    assert not np.array_equal(a.weights, c.weights)
    assert np.all(a.bias == 0.0)
    assert a.weights.shape == (4, NUM_FEATURES)
    assert abs(a.weights.std() - 0.01) < 0.01


@pytest.mark.parametrize("tag", CHECKPOINT_TAGS)
def test_checkpoint_roundtrip(tag):
    params = init_params(3, seed=21)
    params.step = 137
    blob = save_checkpoint(params, tag, config_hash="abc123")
    ck = load_checkpoint(blob)
    assert np.array_equal(ck.params.weights, params.weights)
    assert np.array_equal(ck.params.bias, params.bias)
    assert ck.params.step == 137
    assert ck.params.seed == 21
    assert ck.tag == tag
    assert ck.config_hash == "abc123"


def test_checkpoint_rejects_unknown_tag():
    with pytest.raises(CheckpointError):
        save_checkpoint(init_params(2, 0), "4/3")


@pytest.mark.parametrize("cut", [0, 3, 12, 40, -1])
def test_checkpoint_truncation_detected(cut):
    blob = save_checkpoint(init_params(2, 0), "1/3", "deadbeef")
    with pytest.raises(CheckpointError):
        load_checkpoint(blob[:cut])


def test_checkpoint_bad_magic_and_version():
    blob = bytearray(save_checkpoint(init_params(2, 0), "2/3"))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(b"XXXX" + bytes(blob[4:]))
    bad_version = bytes(blob[:4]) + b"\xff\x00\x00\x00" + bytes(blob[8:])
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(bad_version)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"base_lr": 0.0},
        {"epochs": 0},
        {"retrain_epochs": 0},
        {"batch_size": 0},
        {"unlabeled_loss_weight": -0.5},
    ],
)
def test_train_config_validate_rejects(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs).validate()
