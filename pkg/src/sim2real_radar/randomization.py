"""Noise-floor clamp with random and calibrated noise maps.

Both schemes raise a map to a sampled floor, ``max(S, N)``, in the dB domain
and before any clipping. They differ only in where the Gaussian parameters of
``N`` come from: fixed heuristic intervals redrawn every frame, or the mean
and spread of unlabeled empty-room maps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from sim2real_radar.rd import RdMap


@dataclass(frozen=True)
class RandomDrRanges:
    mean_range_db: tuple[float, float] = (-130.0, -100.0)
    std_range_db: tuple[float, float] = (1.0, 4.0)

    def __post_init__(self):
        m_lo, m_hi = self.mean_range_db
        s_lo, s_hi = self.std_range_db
        if not m_lo <= m_hi:
            raise ValueError(f"mean range must be ascending, got {self.mean_range_db}")
        if not 0 < s_lo <= s_hi:
            raise ValueError(f"std range must satisfy 0 < lo <= hi, got {self.std_range_db}")

    def to_dict(self):
        return {"mean_range_db": list(self.mean_range_db), "std_range_db": list(self.std_range_db)}


@dataclass(frozen=True)
class NoiseFloorStats:
    mean_db: float
    std_db: float
    n_cells: int

    def __post_init__(self):
        if not np.isfinite(self.mean_db) or not np.isfinite(self.std_db):
            raise ValueError("noise floor statistics must be finite")
        if self.std_db < 0:
            raise ValueError("std_db must be >= 0")
        if self.n_cells < 1:
            raise ValueError("n_cells must be >= 1")

    def to_dict(self) -> dict:
        return {"mean_db": float(self.mean_db), "std_db": float(self.std_db), "n_cells": int(self.n_cells)}

    @classmethod
    def from_dict(cls, d) -> "NoiseFloorStats":
        return cls(float(d["mean_db"]), float(d["std_db"]), int(d["n_cells"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "NoiseFloorStats":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _cells(m):
    return m.cells if isinstance(m, RdMap) else np.asarray(m, dtype=float)


def clamp_noise(rd: RdMap | np.ndarray, noise: np.ndarray):
    """Elementwise ``max(S, N)``."""
    s = _cells(rd)
    n = np.asarray(noise)
    if s.shape != n.shape:
        raise ValueError(f"noise map shape {n.shape} does not match RD map shape {s.shape}")
    out = np.maximum(s, n).astype(s.dtype, copy=False)
    return rd.with_cells(out) if isinstance(rd, RdMap) else out


def sample_random_dr(ranges: RandomDrRanges, shape, rng: np.random.Generator) -> np.ndarray:
    """One frame's noise map: draw (m, s) once, then i.i.d. N(m, s^2) cells."""
    m = rng.uniform(*ranges.mean_range_db)
    s = rng.uniform(*ranges.std_range_db)
    return m + s * rng.standard_normal(shape)


def calibrate_noise_floor(calibration_maps: Iterable[RdMap]) -> NoiseFloorStats:
    """Pooled mean and population std of every cell of the calibration maps.

    Streams over the maps so long calibration captures need not be stacked.
    """
    n = 0
    total = 0.0
    total_sq = 0.0
    shift = None
    for m in calibration_maps:
        c = np.asarray(_cells(m), dtype=np.float64)
        if shift is None:
            shift = float(c.mean())  # centre the sums for numerical stability
        d = c - shift
        n += d.size
        total += d.sum()
        total_sq += np.square(d).sum()
    if n == 0:
        raise ValueError("calibration requires at least one non-empty map")
    mean_d = total / n
    var = max(total_sq / n - mean_d * mean_d, 0.0)
    return NoiseFloorStats(shift + mean_d, float(np.sqrt(var)), n)


def apply_random_dr(rd: RdMap, ranges: RandomDrRanges, rng: np.random.Generator) -> RdMap:
    return clamp_noise(rd, sample_random_dr(ranges, rd.shape, rng))


def apply_cdr(rd: RdMap, stats: NoiseFloorStats, rng: np.random.Generator) -> RdMap:
    """Clamp against a calibrated field N_t ~ N(m_t, s_t^2), i.i.d. per cell."""
    noise = stats.mean_db + stats.std_db * rng.standard_normal(rd.shape)
    return clamp_noise(rd, noise)
