"""In-memory three-method sim-to-real comparison.

Used by the acceptance suite and as the reference for the CLI workflow: both
draw sequences with the same seed layout, so the CLI and this module render
the same frames for the same seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from sim2real_radar.classifier import LabeledDataset, TrainConfig, predict, train
from sim2real_radar.fmcw import render_sequence
from sim2real_radar.metrics import ConfusionMatrix, balanced_accuracy, confusion_matrix, overall_accuracy
from sim2real_radar.radar import RadarConfig
from sim2real_radar.randomization import (
    NoiseFloorStats,
    RandomDrRanges,
    apply_cdr,
    apply_random_dr,
    calibrate_noise_floor,
)
from sim2real_radar.rd import ClipRange, RdMap, estimate_clip_range, images_from_maps, range_doppler
from sim2real_radar.scene import ScenarioEnvelope

log = logging.getLogger(__name__)

METHODS = ("baseline", "random_dr", "cdr")
# Stream tags keep train / test / calibration / augmentation draws disjoint.
STREAM = {"sim": 0, "pseudo_real": 1, "calibration": 2, "augment": 3}


@dataclass
class MapSet:
    maps: list[RdMap]
    labels: np.ndarray
    sequence_ids: np.ndarray
    frame_index: np.ndarray
    domain: str

    def __len__(self):
        return len(self.maps)

    def subset(self, idx) -> "MapSet":
        idx = np.asarray(idx, dtype=np.int64)
        return MapSet([self.maps[i] for i in idx], self.labels[idx], self.sequence_ids[idx],
                      self.frame_index[idx], self.domain)


def sequence_seed(seed: int, stream: str, label: int, sequence: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), STREAM[stream], int(label), int(sequence)])


def render_maps(
    labels: Sequence[int],
    n_sequences: int,
    frames_per_sequence: int,
    domain: str,
    seed: int,
    *,
    stream: str | None = None,
    config: RadarConfig | None = None,
    envelope: ScenarioEnvelope | None = None,
) -> MapSet:
    """Render ``n_sequences`` sequences per label and convert every frame to a float32 RD map."""
    config = config or RadarConfig()
    stream = stream or domain
    maps, labs, seqs, frames = [], [], [], []
    for label in labels:
        for s in range(n_sequences):
            cubes, _ = render_sequence(label, frames_per_sequence, domain, config,
                                       sequence_seed(seed, stream, label, s), envelope=envelope)
            for i, cube in enumerate(cubes):
                rd = range_doppler(cube, label=label)
                maps.append(rd.with_cells(rd.cells.astype(np.float32)))
                labs.append(label)
                seqs.append(s)
                frames.append(i)
    return MapSet(maps, np.array(labs, dtype=np.int64), np.array(seqs, dtype=np.int64),
                  np.array(frames, dtype=np.int64), domain)


def augment_maps(maps: Sequence[RdMap], method: str, seed: int, *, stats: NoiseFloorStats | None = None,
                 ranges: RandomDrRanges | None = None) -> list[RdMap]:
    """Apply one training strategy; frame ``i`` uses its own seeded substream."""
    if method in ("baseline", "none"):
        return list(maps)
    children = np.random.SeedSequence([int(seed), STREAM["augment"]]).spawn(len(maps))
    if method == "random_dr":
        ranges = ranges or RandomDrRanges()
        return [apply_random_dr(m, ranges, np.random.default_rng(c)) for m, c in zip(maps, children)]
    if method == "cdr":
        if stats is None:
            raise ValueError("cdr augmentation needs calibration statistics")
        return [apply_cdr(m, stats, np.random.default_rng(c)) for m, c in zip(maps, children)]
    raise ValueError(f"unknown augmentation method {method!r}")


def task_indices(labels: np.ndarray, sequence_ids: np.ndarray, task: str) -> tuple[np.ndarray, np.ndarray]:
    """Frame indices and task labels for a class-balanced task view.

    Counting keeps every frame. Occupancy keeps all empty frames and, as
    occupied examples, the first half of the one-person sequences plus the
    first half of the two-person sequences (whole sequences only).
    """
    labels = np.asarray(labels)
    if task == "counting":
        return np.arange(len(labels)), labels.copy()
    if task != "occupancy":
        raise ValueError(f"unknown task {task!r}")
    keep = labels == 0
    for lab in (1, 2):
        seqs = np.unique(sequence_ids[labels == lab])
        half = seqs[: (len(seqs) + 1) // 2]
        keep |= (labels == lab) & np.isin(sequence_ids, half)
    idx = np.flatnonzero(keep)
    return idx, (labels[idx] > 0).astype(np.int64)


@dataclass
class MethodResult:
    method: str
    task: str
    seed: int
    cm: ConfusionMatrix
    clip: ClipRange
    history: list[float] = field(default_factory=list)

    @property
    def balanced_accuracy(self) -> float:
        return balanced_accuracy(self.cm)

    @property
    def accuracy(self) -> float:
        return overall_accuracy(self.cm)

    def row(self) -> dict:
        return {"method": self.method, "task": self.task, "seed": self.seed,
                "accuracy": self.accuracy, "balanced_accuracy": self.balanced_accuracy}


@dataclass
class ExperimentData:
    train: MapSet
    test: MapSet
    calibration: MapSet
    stats: NoiseFloorStats


def build_data(seed: int, *, train_sequences: int = 60, test_sequences: int = 30, frames_per_sequence: int = 10,
               calibration_frames: int = 100, config: RadarConfig | None = None) -> ExperimentData:
    """Simulated training pool, pseudo-real test pool and calibration capture."""
    config = config or RadarConfig()
    train_set = render_maps((0, 1, 2), train_sequences, frames_per_sequence, "sim", seed, config=config)
    test_set = render_maps((0, 1, 2), test_sequences, frames_per_sequence, "pseudo_real", seed, config=config)
    calib = render_maps((0,), 1, calibration_frames, "pseudo_real", seed, stream="calibration", config=config)
    return ExperimentData(train_set, test_set, calib, calibrate_noise_floor(calib.maps))


def run_method(data: ExperimentData, method: str, task: str, seed: int,
               train_config: TrainConfig | None = None) -> MethodResult:
    cfg = train_config or TrainConfig(seed=seed, task=task)
    if cfg.task != task:
        raise ValueError("train config task mismatch")
    tr_idx, tr_y = task_indices(data.train.labels, data.train.sequence_ids, task)
    te_idx, te_y = task_indices(data.test.labels, data.test.sequence_ids, task)
    train_maps = augment_maps([data.train.maps[i] for i in tr_idx], method, seed, stats=data.stats)
    clip = estimate_clip_range(train_maps)
    x_train = images_from_maps(train_maps, clip)
    params, history = train(LabeledDataset(x_train, tr_y, "train", "sim"), cfg)
    # test path: clip/normalize/colormap only, with the training clip range
    x_test = images_from_maps([data.test.maps[i] for i in te_idx], clip)
    pred = predict(params, x_test)
    cm = confusion_matrix(pred, te_y, cfg.n_classes)
    log.info("%s/%s seed %d: balanced accuracy %.3f", method, task, seed, balanced_accuracy(cm))
    return MethodResult(method, task, seed, cm, clip, history)


def run_comparison(seed: int, tasks=("occupancy", "counting"), methods=METHODS, data: ExperimentData | None = None,
                   **data_kwargs) -> list[MethodResult]:
    data = data or build_data(seed, **data_kwargs)
    return [run_method(data, m, t, seed) for t in tasks for m in methods]
