"""Domain-alignment diagnostics: magnitude histograms and static energy ratio."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from sim2real_radar.rd import RdMap

DEFAULT_EDGES = np.linspace(-160.0, -60.0, 101)


@dataclass(frozen=True, eq=False)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if len(self.counts) != len(self.bin_edges) - 1:
            raise ValueError("need len(counts) == len(bin_edges) - 1")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "Histogram") -> "Histogram":
        if not np.array_equal(self.bin_edges, other.bin_edges):
            raise ValueError("histogram edges differ")
        return Histogram(self.bin_edges, self.counts + other.counts)


def magnitude_histogram(maps: Iterable[RdMap | np.ndarray], edges=DEFAULT_EDGES) -> Histogram:
    """Pool every cell; values beyond the outer edges land in the end bins."""
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be strictly ascending with at least two entries")
    counts = np.zeros(len(edges) - 1, dtype=np.int64)
    seen = False
    for m in maps:
        cells = np.asarray(m.cells if isinstance(m, RdMap) else m, dtype=float).ravel()
        if cells.size == 0:
            continue
        seen = True
        idx = np.clip(np.searchsorted(edges, cells, side="right") - 1, 0, len(counts) - 1)
        counts += np.bincount(idx, minlength=len(counts))
    if not seen:
        raise ValueError("no cells to histogram")
    return Histogram(edges, counts)


def wasserstein1(a: Histogram, b: Histogram) -> float:
    """Earth mover's distance (dB) between two normalized histograms on the same edges."""
    if not np.array_equal(a.bin_edges, b.bin_edges):
        raise ValueError("histograms must share bin edges")
    if a.total <= 0 or b.total <= 0:
        raise ValueError("histograms must be non-empty")
    cdf_a = np.cumsum(a.counts) / a.total
    cdf_b = np.cumsum(b.counts) / b.total
    return float(np.sum(np.abs(cdf_a - cdf_b) * np.diff(a.bin_edges)))


def static_energy_ratio(rd: RdMap | np.ndarray, halfwidth_bins: int = 1) -> float:
    """Share of linear RD power within ``halfwidth_bins`` of zero Doppler."""
    cells = np.asarray(rd.cells if isinstance(rd, RdMap) else rd, dtype=float)
    n_c = cells.shape[1]
    if not 0 <= halfwidth_bins < n_c // 2:
        raise ValueError(f"halfwidth must lie in [0, {n_c // 2})")
    # subtracting the max keeps 10**(x/10) finite; the ratio is scale-free
    power = 10 ** ((cells - cells.max()) / 10)
    centre = n_c // 2
    band = power[:, centre - halfwidth_bins : centre + halfwidth_bins + 1].sum()
    return float(band / power.sum())


def energy_ratios(maps: Iterable[RdMap], halfwidth_bins: int = 1) -> np.ndarray:
    return np.array([static_energy_ratio(m, halfwidth_bins) for m in maps])


def write_histograms_csv(hists: dict[str, Histogram], path: str | Path) -> None:
    names = list(hists)
    edges = hists[names[0]].bin_edges
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo_db", "bin_hi_db", *names])
        for i in range(len(edges) - 1):
            w.writerow([f"{edges[i]:.3f}", f"{edges[i + 1]:.3f}", *(int(hists[n].counts[i]) for n in names)])


def write_ratios_csv(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["source", "label", "frame", "static_energy_ratio"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "static_energy_ratio": f"{r['static_energy_ratio']:.8f}"})


def plot_histograms(hists: dict[str, Histogram], path: str | Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for name, h in hists.items():
        centres = 0.5 * (h.bin_edges[1:] + h.bin_edges[:-1])
        ax.step(centres, h.counts / h.total, where="mid", label=name)
    ax.set_xlabel("RD magnitude (dB)")
    ax.set_ylabel("fraction of cells")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_energy_ratios(groups: dict[str, np.ndarray], path: str | Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for i, (name, vals) in enumerate(groups.items()):
        jitter = np.linspace(-0.15, 0.15, len(vals)) if len(vals) > 1 else np.zeros(len(vals))
        ax.scatter(i + jitter, vals, s=6, label=name)
    ax.set_xticks(range(len(groups)), list(groups), rotation=20)
    ax.set_ylabel("static / total energy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
