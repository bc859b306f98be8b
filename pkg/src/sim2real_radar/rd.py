"""Range-Doppler maps, clip/normalize, viridis images and PNG export."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from sim2real_radar.fmcw import DataCube, hann

EPS = 1e-12
SILENCE_DB = 20 * np.log10(EPS)  # -240 dB


@dataclass(frozen=True, eq=False)
class RdMap:
    """dB range-Doppler grid: range rows 0..N_s/2-1, Doppler columns with zero at N_c/2."""

    cells: np.ndarray
    domain_tag: str = "sim"
    label: Optional[int] = None

    def __post_init__(self):
        if self.cells.ndim != 2:
            raise ValueError(f"RdMap must be 2-D, got shape {self.cells.shape}")
        if not np.all(np.isfinite(self.cells)):
            raise ValueError("RdMap contains non-finite cells")

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def with_cells(self, cells: np.ndarray) -> "RdMap":
        return replace(self, cells=cells)


@dataclass(frozen=True)
class ClipRange:
    v_min: float
    v_max: float

    def __post_init__(self):
        if not (np.isfinite(self.v_min) and np.isfinite(self.v_max)):
            raise ValueError("clip range must be finite")
        if not self.v_min < self.v_max:
            raise ValueError(f"clip range needs v_min < v_max, got ({self.v_min}, {self.v_max})")

    def to_dict(self) -> dict:
        return {"v_min": float(self.v_min), "v_max": float(self.v_max)}

    @classmethod
    def from_dict(cls, d) -> "ClipRange":
        return cls(float(d["v_min"]), float(d["v_max"]))


@dataclass(frozen=True, eq=False)
class RdImage:
    pixels: np.ndarray  # (H, W, 3) in [0, 1]

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"RdImage must be H x W x 3, got {self.pixels.shape}")
        if self.pixels.size and (self.pixels.min() < 0 or self.pixels.max() > 1):
            raise ValueError("RdImage channels must lie in [0, 1]")


def rd_spectrum(samples: np.ndarray, *, one_sided: bool = True) -> np.ndarray:
    """Hann-windowed 2-D FFT, Doppler zero shifted to column N_c/2.

    Real input keeps range bins 0..N_s/2-1; complex (analytic) input is
    accepted too. ``one_sided=False`` returns all N_s range bins.
    """
    x = np.asarray(samples)
    n_s, n_c = x.shape
    xw = x * hann(n_s)[:, None] * hann(n_c)[None, :]
    spec = np.fft.fft(xw, axis=0)
    if one_sided:
        spec = spec[: n_s // 2]
    return np.fft.fftshift(np.fft.fft(spec, axis=1), axes=1)


def range_doppler(cube: DataCube | np.ndarray, *, expected_shape: tuple[int, int] | None = None,
                  label: Optional[int] = None) -> RdMap:
    """dB magnitude RD map, ``20*log10(|X| + 1e-12)``."""
    samples = cube.samples if isinstance(cube, DataCube) else np.asarray(cube)
    if samples.ndim != 2:
        raise ValueError(f"cube must be 2-D, got shape {samples.shape}")
    if expected_shape is not None and samples.shape != tuple(expected_shape):
        raise ValueError(f"cube shape {samples.shape} does not match config {tuple(expected_shape)}")
    spec = rd_spectrum(samples)
    tag = cube.domain_tag if isinstance(cube, DataCube) else "sim"
    return RdMap(20 * np.log10(np.abs(spec) + EPS), tag, label)


def _pool(maps: Iterable[RdMap | np.ndarray]) -> np.ndarray:
    arrays = [np.asarray(m.cells if isinstance(m, RdMap) else m, dtype=float).ravel() for m in maps]
    if not arrays:
        raise ValueError("need at least one map")
    return np.concatenate(arrays)


def estimate_clip_range(maps: Iterable[RdMap], lo_pct: float = 1.0, hi_pct: float = 99.9) -> ClipRange:
    if not 0 <= lo_pct < hi_pct <= 100:
        raise ValueError(f"need 0 <= lo_pct < hi_pct <= 100, got ({lo_pct}, {hi_pct})")
    pooled = _pool(maps)
    v_min, v_max = np.percentile(pooled, [lo_pct, hi_pct])
    return ClipRange(float(v_min), float(v_max))


def clip_normalize(rd: RdMap | np.ndarray, clip: ClipRange):
    cells = np.asarray(rd.cells if isinstance(rd, RdMap) else rd, dtype=float)
    out = (np.clip(cells, clip.v_min, clip.v_max) - clip.v_min) / (clip.v_max - clip.v_min)
    out = np.clip(out, 0.0, 1.0)  # guards float rounding at the top edge
    return rd.with_cells(out) if isinstance(rd, RdMap) else out


def viridis_table() -> np.ndarray:
    """The 256-entry reference viridis table, shape (256, 3)."""
    from matplotlib import colormaps

    return np.asarray(colormaps["viridis"].colors, dtype=float)


_VIRIDIS: np.ndarray | None = None


def colormap_viridis(normalized: RdMap | np.ndarray) -> RdImage:
    """Linear interpolation into the 256-entry viridis table."""
    global _VIRIDIS
    if _VIRIDIS is None:
        _VIRIDIS = viridis_table()
    v = normalized.cells if isinstance(normalized, RdMap) else np.asarray(normalized, dtype=float)
    if v.size and (v.min() < 0 or v.max() > 1 or not np.all(np.isfinite(v))):
        raise ValueError("colormap input must lie in [0, 1]")
    pos = v * (len(_VIRIDIS) - 1)
    lo = np.minimum(np.floor(pos).astype(int), len(_VIRIDIS) - 2)
    frac = (pos - lo)[..., None]
    rgb = _VIRIDIS[lo] * (1 - frac) + _VIRIDIS[lo + 1] * frac
    return RdImage(np.clip(rgb, 0.0, 1.0))


def downsample_rows(image: RdImage) -> RdImage:
    """Average adjacent range-row pairs (128x64x3 -> 64x64x3)."""
    p = image.pixels
    if p.shape[0] % 2:
        raise ValueError("row count must be even")
    return RdImage(0.5 * (p[0::2] + p[1::2]))


def to_model_input(rd: RdMap, clip: ClipRange) -> np.ndarray:
    """RD map -> clipped, normalized, colormapped 64x64x3 classifier input."""
    return downsample_rows(colormap_viridis(clip_normalize(rd, clip))).pixels


def images_from_maps(maps: Iterable[RdMap], clip: ClipRange) -> np.ndarray:
    return np.stack([to_model_input(m, clip) for m in maps])


def save_png(image: RdImage, path: str | Path) -> None:
    """8-bit RGB PNG, value = round(255 * channel)."""
    from PIL import Image

    data = np.round(255 * image.pixels).astype(np.uint8)
    Image.fromarray(data).save(path)
