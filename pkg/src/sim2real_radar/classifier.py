"""Two-conv + global-average-pool classifier in plain numpy.

Images are NHWC, 64x64x3 in [0, 1]. Both convolutions are 3x3, stride 2,
zero padding 1 (64 -> 32 -> 16), each followed by ReLU; the 16 pooled
channels feed a dense head with 2 or 3 outputs.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

log = logging.getLogger(__name__)

TASKS = {"occupancy": 2, "counting": 3}
INPUT_SHAPE = (64, 64, 3)


class TrainingDiverged(RuntimeError):
    pass


TRAINABLE = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "head_w", "head_b")


@dataclass
class ClassifierParams:
    """Trainable tensors plus an optional fixed per-channel input standardization.

    ``input_mean``/``input_std`` are fitted on the training images and applied
    to every input before the first convolution; they receive no gradient.
    """

    conv1_w: np.ndarray  # (3, 3, 3, 8)
    conv1_b: np.ndarray  # (8,)
    conv2_w: np.ndarray  # (3, 3, 8, 16)
    conv2_b: np.ndarray  # (16,)
    head_w: np.ndarray  # (16, K)
    head_b: np.ndarray  # (K,)
    input_mean: np.ndarray | None = None  # (3,)
    input_std: np.ndarray | None = None  # (3,)

    def __post_init__(self):
        if (self.input_mean is None) != (self.input_std is None):
            raise ValueError("input_mean and input_std must be given together")
        if self.input_std is not None and np.any(np.asarray(self.input_std) <= 0):
            raise ValueError("input_std must be positive")

    @property
    def n_classes(self) -> int:
        return self.head_w.shape[1]

    def names(self) -> list[str]:
        return list(TRAINABLE)

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in TRAINABLE:
            yield name, getattr(self, name)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ClassifierParams":
        return ClassifierParams(**{k: fn(v) for k, v in self.items()},
                                input_mean=self.input_mean, input_std=self.input_std)

    def copy(self) -> "ClassifierParams":
        return self.map(np.copy)

    def standardize(self, x: np.ndarray) -> np.ndarray:
        if self.input_mean is None:
            return x
        return ((x - self.input_mean) / self.input_std).astype(x.dtype, copy=False)

    @classmethod
    def zeros(cls, n_classes: int) -> "ClassifierParams":
        return cls(
            np.zeros((3, 3, 3, 8)), np.zeros(8), np.zeros((3, 3, 8, 16)), np.zeros(16),
            np.zeros((16, n_classes)), np.zeros(n_classes),
        )


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    task: str = "occupancy"
    standardize: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError("epochs must be an integer >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {sorted(TASKS)}, got {self.task!r}")

    @property
    def n_classes(self) -> int:
        return TASKS[self.task]

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class LabeledDataset:
    images: np.ndarray  # (N, 64, 64, 3)
    labels: np.ndarray  # (N,)
    split_tag: str = "train"
    domain_tag: str = "sim"

    def __post_init__(self):
        self.images = np.asarray(self.images)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or self.images.shape[1:] != INPUT_SHAPE:
            raise ValueError(f"images must be (N, 64, 64, 3), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")
        if self.split_tag == "train" and self.domain_tag != "sim":
            raise ValueError("the training split may only contain simulated images")
        if self.split_tag == "test" and self.domain_tag != "pseudo_real":
            raise ValueError("the test split may only contain pseudo-real images")

    def __len__(self) -> int:
        return len(self.labels)


def init_params(n_classes: int, rng: np.random.Generator) -> ClassifierParams:
    """Glorot-uniform weights, zero biases."""

    def glorot(shape, fan_in, fan_out):
        a = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=shape)

    return ClassifierParams(
        conv1_w=glorot((3, 3, 3, 8), 27, 72),
        conv1_b=np.zeros(8),
        conv2_w=glorot((3, 3, 8, 16), 72, 144),
        conv2_b=np.zeros(16),
        head_w=glorot((16, n_classes), 16, n_classes),
        head_b=np.zeros(n_classes),
    )


def _conv_out(n: int) -> int:
    return (n + 2 - 3) // 2 + 1


def _patches(x: np.ndarray) -> np.ndarray:
    """im2col for 3x3/stride 2/pad 1: (B, H, W, C) -> (B*Ho*Wo, C*9), (c, i, j) order."""
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    v = sliding_window_view(xp, (3, 3), axis=(1, 2))[:, ::2, ::2]  # (B, Ho, Wo, C, 3, 3)
    return v.reshape(-1, x.shape[3] * 9)


def _wmat(w: np.ndarray) -> np.ndarray:
    """(3, 3, C, O) kernel -> (C*9, O) matrix matching :func:`_patches`."""
    return w.transpose(2, 0, 1, 3).reshape(-1, w.shape[3])


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, cols: np.ndarray | None = None) -> np.ndarray:
    """3x3 stride-2 pad-1 convolution (cross-correlation), NHWC."""
    bsz, h, wd, _ = x.shape
    cols = _patches(x) if cols is None else cols
    out = cols @ _wmat(w) + b
    return out.reshape(bsz, _conv_out(h), _conv_out(wd), w.shape[3])


def conv2d_backward(x, w, dout, need_dx=True, cols=None):
    """Gradients of :func:`conv2d` w.r.t. weights, bias and (optionally) input."""
    bsz, h, wd, c = x.shape
    ho, wo, o = dout.shape[1:]
    cols = _patches(x) if cols is None else cols
    d2 = dout.reshape(-1, o)
    dw = (cols.T @ d2).reshape(c, 3, 3, o).transpose(1, 2, 0, 3)
    db = d2.sum(axis=0)
    if not need_dx:
        return dw, db, None
    dcols = (d2 @ _wmat(w).T).reshape(bsz, ho, wo, c, 3, 3)
    dxp = np.zeros((bsz, h + 2, wd + 2, c), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i : i + 2 * ho : 2, j : j + 2 * wo : 2, :] += dcols[..., i, j]
    return dw, db, dxp[:, 1 : 1 + h, 1 : 1 + wd, :]


def _as_batch(images) -> np.ndarray:
    x = np.asarray(images)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != INPUT_SHAPE:
        raise ValueError(f"expected image(s) of shape {INPUT_SHAPE}, got {np.shape(images)}")
    return x


def _forward(params: ClassifierParams, x: np.ndarray, cols1: np.ndarray | None = None):
    # cols1, when given, already holds patches of the standardized input
    if cols1 is None:
        x = params.standardize(x)
        cols1 = _patches(x)
    z1 = conv2d(x, params.conv1_w, params.conv1_b, cols1)
    a1 = np.maximum(z1, 0)
    cols2 = _patches(a1)
    z2 = conv2d(a1, params.conv2_w, params.conv2_b, cols2)
    a2 = np.maximum(z2, 0)
    pooled = a2.mean(axis=(1, 2))
    logits = pooled @ params.head_w + params.head_b
    return logits, (cols1, z1, a1, cols2, z2, a2, pooled)


def forward(params: ClassifierParams, image) -> np.ndarray:
    """Logits for one image (K,) or a batch (B, K)."""
    single = np.ndim(image) == 3
    logits, _ = _forward(params, _as_batch(image))
    return logits[0] if single else logits


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_grads(params: ClassifierParams, images, labels) -> tuple[float, ClassifierParams]:
    """Mean softmax cross-entropy over the batch and its gradient."""
    x = _as_batch(images)
    y = np.asarray(labels, dtype=np.int64)
    if len(y) == 0 or len(y) != len(x):
        raise ValueError("batch must be non-empty with one label per image")
    return _loss_and_grads(params, x, y)


def _loss_and_grads(params, x, y, cols1=None):
    bsz = len(y)
    logits, (cols1, z1, a1, cols2, z2, a2, pooled) = _forward(params, x, cols1)
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(bsz), y].mean())

    dlogits = np.exp(log_probs)
    dlogits[np.arange(bsz), y] -= 1.0
    dlogits /= bsz
    head_w = pooled.T @ dlogits
    head_b = dlogits.sum(axis=0)
    dpooled = dlogits @ params.head_w.T
    ho, wo = a2.shape[1:3]
    dz2 = np.broadcast_to(dpooled[:, None, None, :] / (ho * wo), a2.shape) * (z2 > 0)
    conv2_w, conv2_b, da1 = conv2d_backward(a1, params.conv2_w, dz2, cols=cols2)
    dz1 = da1 * (z1 > 0)
    conv1_w, conv1_b, _ = conv2d_backward(x, params.conv1_w, dz1, need_dx=False, cols=cols1)
    return loss, ClassifierParams(conv1_w, conv1_b, conv2_w, conv2_b, head_w, head_b)


def fit_standardization(images: np.ndarray, batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and population std over a stack of images (float64)."""
    n = len(images)
    s1 = np.zeros(3)
    for i in range(0, n, batch_size):
        s1 += np.asarray(images[i : i + batch_size], dtype=np.float64).sum(axis=(0, 1, 2))
    count = n * images.shape[1] * images.shape[2]
    mean = s1 / count
    s2 = np.zeros(3)
    for i in range(0, n, batch_size):
        s2 += ((np.asarray(images[i : i + batch_size], dtype=np.float64) - mean) ** 2).sum(axis=(0, 1, 2))
    std = np.sqrt(s2 / count)
    return mean, np.where(std > 1e-6, std, 1.0)


def predict(params: ClassifierParams, images, batch_size: int = 256) -> np.ndarray | int:
    """Arg-max class; ties go to the smaller index."""
    if np.ndim(images) == 3:
        return int(np.argmax(forward(params, images)))
    x = np.asarray(images)
    out = [np.argmax(forward(params, x[i : i + batch_size]), axis=1) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def mean_loss(params: ClassifierParams, images, labels, batch_size: int = 256) -> float:
    total = 0.0
    for i in range(0, len(labels), batch_size):
        xb, yb = images[i : i + batch_size], labels[i : i + batch_size]
        logits = forward(params, xb)
        z = logits - logits.max(axis=1, keepdims=True)
        lp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        total += -lp[np.arange(len(yb)), yb].sum()
    return float(total / len(labels))


def train(dataset: LabeledDataset, config: TrainConfig) -> tuple[ClassifierParams, list[float]]:
    """Plain mini-batch SGD with seed-driven init and shuffling.

    With ``config.standardize`` the per-channel input mean/std of the
    training images is fitted first and stored in the returned params.
    Arithmetic runs in float32; first-layer patches are built once.

    History entry 0 is the full-dataset loss at initialization; entry ``e``
    is the mean batch loss during epoch ``e``.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    k = config.n_classes
    if dataset.labels.max() >= k or dataset.labels.min() < 0:
        raise ValueError(f"labels must lie in [0, {k})")
    rng = np.random.default_rng(config.seed)
    params = init_params(k, rng).map(lambda a: a.astype(np.float32))
    if config.standardize:
        mean, std = fit_standardization(dataset.images)
        params = ClassifierParams(**dict(params.items()), input_mean=mean, input_std=std)
    x = params.standardize(np.asarray(dataset.images, dtype=np.float32))
    y = dataset.labels
    n = len(y)
    cols = _patches(x).reshape(n, -1, 27)
    history = [_dataset_loss(params, x, y, cols)]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses, sizes = [], []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = _loss_and_grads(params, x[idx], y[idx], cols[idx].reshape(-1, 27))
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch} batch {start // config.batch_size}")
            for name, g in grads.items():
                getattr(params, name)[...] -= config.learning_rate * g
            losses.append(loss)
            sizes.append(len(idx))
        history.append(float(np.average(losses, weights=sizes)))
        log.debug("epoch %d loss %.4f", epoch + 1, history[-1])
    return params.map(lambda a: a.astype(np.float64)), history


def _dataset_loss(params, x, y, cols, batch_size: int = 256) -> float:
    total = 0.0
    for i in range(0, len(y), batch_size):
        cb = cols[i : i + batch_size]
        logits, _ = _forward(params, x[i : i + batch_size], cb.reshape(-1, 27))
        z = logits - logits.max(axis=1, keepdims=True)
        lp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        yb = y[i : i + batch_size]
        total += -lp[np.arange(len(yb)), yb].sum()
    return float(total / len(y))


_HEADER_LEN = struct.Struct("<Q")


def save_params(params: ClassifierParams, path: str | Path, meta: dict | None = None) -> None:
    """Little-endian float32 tensors preceded by a length-prefixed JSON header."""
    tensors, offset, blobs = [], 0, []
    for name, arr in params.items():
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        offset += len(blob)
        blobs.append(blob)
    head = {"format": "f32le", "tensors": tensors, "meta": meta or {}}
    if params.input_mean is not None:
        # kept in the JSON header at full float64 precision
        head["input_norm"] = {"mean": [float(v) for v in params.input_mean],
                              "std": [float(v) for v in params.input_std]}
    header = json.dumps(head, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_HEADER_LEN.pack(len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_params(path: str | Path) -> tuple[ClassifierParams, dict]:
    raw = Path(path).read_bytes()
    (n,) = _HEADER_LEN.unpack_from(raw, 0)
    header = json.loads(raw[8 : 8 + n])
    data = raw[8 + n :]
    arrays = {}
    for t in header["tensors"]:
        end = t["offset"] + t["nbytes"]
        if end > len(data):
            raise ValueError(f"{path}: tensor {t['name']} truncated")
        arrays[t["name"]] = np.frombuffer(data[t["offset"] : end], dtype="<f4").reshape(t["shape"]).astype(np.float64)
    norm = header.get("input_norm")
    if norm:
        arrays["input_mean"] = np.array(norm["mean"], dtype=float)
        arrays["input_std"] = np.array(norm["std"], dtype=float)
    return ClassifierParams(**arrays), header.get("meta", {})
