import math

import numpy as np
import pytest

from sim2real_radar.classifier import (
    ClassifierParams,
    _forward,
    LabeledDataset,
    TrainConfig,
    fit_standardization,
    forward,
    init_params,
    load_params,
    loss_and_grads,
    predict,
    save_params,
    softmax,
    train,
)
from sim2real_radar.experiment import render_maps, task_indices
from sim2real_radar.metrics import balanced_accuracy, confusion_matrix
from sim2real_radar.rd import estimate_clip_range, images_from_maps


def direct_conv(x, w, b):
    """Loop-based 3x3, stride 2, pad 1 cross-correlation on one HWC image."""
    h, wd, c = x.shape
    xp = np.zeros((h + 2, wd + 2, c))
    xp[1:-1, 1:-1] = x
    ho, wo = (h - 1) // 2 + 1, (wd - 1) // 2 + 1
    out = np.zeros((ho, wo, w.shape[3]))
    for i in range(ho):
        for j in range(wo):
            patch = xp[2 * i : 2 * i + 3, 2 * j : 2 * j + 3, :]
            for o in range(w.shape[3]):
                out[i, j, o] = np.sum(patch * w[:, :, :, o]) + b[o]
    return out


def oracle_logits(p, img):
    a1 = np.maximum(direct_conv(img, p.conv1_w, p.conv1_b), 0)
    a2 = np.maximum(direct_conv(a1, p.conv2_w, p.conv2_b), 0)
    return a2.mean(axis=(0, 1)) @ p.head_w + p.head_b


def random_params(k, seed=0):
    rng = np.random.default_rng(seed)
    p = init_params(k, rng)
    return p.map(lambda a: a + 0.05 * rng.standard_normal(a.shape))


def test_zero_params_give_uniform_softmax_and_class_zero():
    p = ClassifierParams.zeros(3)
    img = np.random.default_rng(0).uniform(size=(64, 64, 3))
    assert np.all(forward(p, img) == 0)
    assert np.allclose(softmax(forward(p, img)), 1 / 3)
    assert predict(p, img) == 0


def test_forward_matches_direct_convolution_oracle():
    p = random_params(3, seed=1)
    img = np.random.default_rng(2).uniform(size=(64, 64, 3))
    got = forward(p, img)
    want = oracle_logits(p, img)
    assert np.allclose(got, want, rtol=1e-6, atol=1e-6 * np.abs(want).max())


def test_forward_is_pure():
    p = random_params(2)
    img = np.random.default_rng(3).uniform(size=(64, 64, 3))
    assert np.array_equal(forward(p, img), forward(p, img.copy()))


def test_forward_rejects_bad_shapes():
    with pytest.raises(ValueError):
        forward(ClassifierParams.zeros(2), np.zeros((32, 32, 3)))


def test_uniform_logits_loss_is_ln2():
    loss, _ = loss_and_grads(ClassifierParams.zeros(2), np.zeros((3, 64, 64, 3)), [0, 1, 1])
    assert loss == pytest.approx(math.log(2))


def _loss_and_masks(p, x, y):
    logits, cache = _forward(p, x, None)
    z = logits - logits.max(axis=1, keepdims=True)
    lp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-lp[np.arange(len(y)), y].mean()), (cache[1] > 0, cache[4] > 0)


def gradient_check(p, x, y, steps=(1e-4, 1e-5, 1e-6, 1e-7)):
    """Central differences for every parameter; returns (worst rel. error, checked, total).

    The first step is 1e-4. Where a ReLU flips inside [-h, h] the quotient
    straddles a kink, so the step is shrunk until the activation pattern is
    stable; coordinates sitting exactly on a kink stay unchecked.
    """
    _, grads = loss_and_grads(p, x, y)
    worst, checked, total = 0.0, 0, 0
    for name, g in grads.items():
        arr = getattr(p, name)
        for idx in np.ndindex(arr.shape):
            total += 1
            old = arr[idx]
            for h in steps:
                arr[idx] = old + h
                lp, mp = _loss_and_masks(p, x, y)
                arr[idx] = old - h
                lm, mm = _loss_and_masks(p, x, y)
                arr[idx] = old
                if all(np.array_equal(a, b) for a, b in zip(mp, mm)):
                    num = (lp - lm) / (2 * h)
                    worst = max(worst, abs(num - g[idx]) / max(abs(num), abs(g[idx]), 1e-7))
                    checked += 1
                    break
    return worst, checked, total


def gradient_case(standardized, seed=4):
    rng = np.random.default_rng(seed)
    p = random_params(3, seed=seed + 1)
    if standardized:
        p = ClassifierParams(**dict(p.items()), input_mean=np.array([0.4, 0.5, 0.6]),
                             input_std=np.array([0.2, 0.3, 0.25]))
    return p, rng.uniform(size=(4, 64, 64, 3)), np.array([0, 2, 1, 2])


@pytest.mark.parametrize("standardized", [False, True])
def test_gradients_match_central_differences(standardized):
    worst, checked, total = gradient_check(*gradient_case(standardized))
    assert worst <= 1e-4
    assert checked >= 0.99 * total


def test_duplicated_batch_has_same_loss_and_grads():
    p = random_params(2, seed=6)
    x = np.random.default_rng(7).uniform(size=(3, 64, 64, 3))
    y = np.array([0, 1, 1])
    l1, g1 = loss_and_grads(p, x, y)
    l2, g2 = loss_and_grads(p, np.concatenate([x, x]), np.concatenate([y, y]))
    assert l1 == pytest.approx(l2, rel=1e-12)
    for (n, a), (_, b) in zip(g1.items(), g2.items()):
        assert np.allclose(a, b, rtol=1e-10, atol=1e-14), n


def test_predict_tie_break_and_logits():
    p = ClassifierParams.zeros(2)
    p.head_b[:] = [0.1, 0.9]
    assert predict(p, np.zeros((64, 64, 3))) == 1


def test_batch_predict_equals_per_item():
    p = random_params(3, seed=8)
    x = np.random.default_rng(9).uniform(size=(7, 64, 64, 3))
    assert predict(p, x).tolist() == [predict(p, img) for img in x]


def blob_dataset(n=120, seed=0):
    """Two classes of Gaussian blobs at random positions, told apart by colour."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:64, 0:64]
    colours = np.array([[0.99, 0.91, 0.14], [0.13, 0.57, 0.55]])  # viridis near 0.95 and 0.45
    background = np.array([0.27, 0.0, 0.33])
    imgs, labels = [], []
    for i in range(n):
        lab = i % 2
        cy, cx = rng.uniform(10, 54, size=2)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * rng.uniform(3, 6) ** 2))[..., None]
        img = background * (1 - blob) + colours[lab] * blob + rng.normal(0, 0.02, (64, 64, 3))
        imgs.append(np.clip(img, 0, 1))
        labels.append(lab)
    return LabeledDataset(np.array(imgs), np.array(labels))


def test_separable_toy_reaches_99_percent():
    ds = blob_dataset()
    params, history = train(ds, TrainConfig(epochs=20, seed=3))
    acc = np.mean(predict(params, ds.images) == ds.labels)
    assert acc >= 0.99
    assert history[-1] < history[0]


def test_training_is_deterministic():
    ds = blob_dataset(40)
    cfg = TrainConfig(epochs=3, seed=11)
    p1, h1 = train(ds, cfg)
    p2, h2 = train(ds, cfg)
    assert h1 == h2
    assert all(np.array_equal(a, b) for (_, a), (_, b) in zip(p1.items(), p2.items()))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(task="segmentation")
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"momentum": 0.9})
    assert TrainConfig.from_dict(TrainConfig(seed=4).to_dict()) == TrainConfig(seed=4)


def test_split_domain_invariants():
    imgs = np.zeros((2, 64, 64, 3))
    with pytest.raises(ValueError):
        LabeledDataset(imgs, [0, 1], "train", "pseudo_real")
    with pytest.raises(ValueError):
        LabeledDataset(imgs, [0, 1], "test", "sim")
    with pytest.raises(ValueError):
        train(LabeledDataset(imgs, [0, 2]), TrainConfig(task="occupancy"))


def test_standardization_fit():
    x = np.random.default_rng(0).uniform(size=(10, 64, 64, 3))
    mean, std = fit_standardization(x, batch_size=3)
    assert np.allclose(mean, x.mean(axis=(0, 1, 2)))
    assert np.allclose(std, x.std(axis=(0, 1, 2)))


def test_save_load_roundtrip(tmp_path):
    p = random_params(3, seed=2).map(lambda a: a.astype(np.float32).astype(np.float64))
    p = ClassifierParams(**dict(p.items()), input_mean=np.array([0.1, 0.2, 0.3]), input_std=np.array([1.0, 0.5, 0.25]))
    save_params(p, tmp_path / "m.bin", {"task": "counting"})
    q, meta = load_params(tmp_path / "m.bin")
    assert meta == {"task": "counting"}
    for (_, a), (_, b) in zip(p.items(), q.items()):
        assert np.array_equal(a, b)
    assert np.array_equal(q.input_mean, p.input_mean) and np.array_equal(q.input_std, p.input_std)
    raw = (tmp_path / "m.bin").read_bytes()
    n = int.from_bytes(raw[:8], "little")
    assert raw[8 : 8 + n].startswith(b"{")
    assert len(raw) == 8 + n + 4 * sum(a.size for _, a in p.items())


def test_permuted_labels_drop_to_chance():
    seed = 77
    tr = render_maps((0, 1, 2), 12, 5, "sim", seed)
    te = render_maps((0, 1, 2), 10, 5, "pseudo_real", seed)
    clip = estimate_clip_range(tr.maps)
    x = images_from_maps(tr.maps, clip)
    y = np.random.default_rng(seed).permutation(tr.labels)
    params, _ = train(LabeledDataset(x, y), TrainConfig(task="counting", seed=seed))
    idx, yt = task_indices(te.labels, te.sequence_ids, "counting")
    pred = predict(params, images_from_maps([te.maps[i] for i in idx], clip))
    bacc = balanced_accuracy(confusion_matrix(pred, yt, 3))
    assert abs(bacc - 1 / 3) <= 0.10
