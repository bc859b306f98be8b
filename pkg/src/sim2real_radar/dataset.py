"""On-disk RD-map datasets: one directory, one JSON manifest, one blob per frame.

Blobs are little-endian float32, row-major with range as the leading axis.
Loading re-checks every file against the shape recorded in the manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from sim2real_radar.experiment import MapSet
from sim2real_radar.radar import RadarConfig
from sim2real_radar.randomization import NoiseFloorStats
from sim2real_radar.rd import RdMap
from sim2real_radar.scene import DOMAINS, LABELS

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
AUGMENTATIONS = ("none", "random_dr", "cdr")
MAP_DTYPE = "<f4"
RAW_DTYPE = "<f8"


class DatasetError(Exception):
    category = "dataset_error"


class MissingFileError(DatasetError):
    category = "missing_file"


class ShapeMismatchError(DatasetError):
    category = "shape_mismatch"


class VersionMismatchError(DatasetError):
    category = "version_mismatch"


class ManifestError(DatasetError):
    category = "invalid_manifest"


@dataclass(frozen=True)
class FrameEntry:
    path: str
    label: int
    sequence_id: int
    frame_index: int

    def to_dict(self) -> dict:
        return {"path": self.path, "label": self.label, "sequence_id": self.sequence_id,
                "frame_index": self.frame_index}


@dataclass
class DatasetManifest:
    radar_config: RadarConfig
    domain: str
    frames: list[FrameEntry]
    seed: int
    shape: tuple[int, int]
    augmentation: str = "none"
    augmentation_params: dict = field(default_factory=dict)
    stats: NoiseFloorStats | None = None
    raw_frames: list[str] | None = None
    version: int = MANIFEST_VERSION

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ManifestError(f"unknown domain {self.domain!r}")
        if self.augmentation not in AUGMENTATIONS:
            raise ManifestError(f"unknown augmentation {self.augmentation!r}")
        if self.augmentation == "cdr" and self.stats is None:
            raise ManifestError("cdr dataset must embed its noise-floor stats")
        if self.raw_frames is not None and len(self.raw_frames) != len(self.frames):
            raise ManifestError("raw frame list does not match frame list")

    @property
    def classes(self) -> dict[int, int]:
        counts = {lab: 0 for lab in LABELS}
        for f in self.frames:
            counts[f.label] = counts.get(f.label, 0) + 1
        return {k: v for k, v in counts.items() if v}

    def to_dict(self) -> dict:
        out = {
            "version": self.version,
            "radar_config": self.radar_config.to_dict(),
            "domain": self.domain,
            "classes": {str(k): v for k, v in self.classes.items()},
            "shape": list(self.shape),
            "dtype": MAP_DTYPE,
            "seed": self.seed,
            "augmentation": {"method": self.augmentation, "params": self.augmentation_params,
                             "stats": self.stats.to_dict() if self.stats else None},
            "frames": [f.to_dict() for f in self.frames],
        }
        if self.raw_frames is not None:
            out["raw"] = {"dtype": RAW_DTYPE, "files": self.raw_frames}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        version = d.get("version")
        if version != MANIFEST_VERSION:
            raise VersionMismatchError(f"manifest version {version!r}, expected {MANIFEST_VERSION}")
        try:
            aug = d["augmentation"]
            stats = NoiseFloorStats.from_dict(aug["stats"]) if aug.get("stats") else None
            frames = [FrameEntry(str(f["path"]), int(f["label"]), int(f["sequence_id"]), int(f["frame_index"]))
                      for f in d["frames"]]
            if d.get("dtype", MAP_DTYPE) != MAP_DTYPE:
                raise ManifestError(f"unsupported dtype {d['dtype']!r}")
            m = cls(
                radar_config=RadarConfig.from_dict(d["radar_config"]),
                domain=d["domain"],
                frames=frames,
                seed=int(d["seed"]),
                shape=tuple(int(v) for v in d["shape"]),
                augmentation=aug["method"],
                augmentation_params=dict(aug.get("params") or {}),
                stats=stats,
                raw_frames=list(d["raw"]["files"]) if d.get("raw") else None,
            )
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"malformed manifest: {exc!r}") from exc
        declared = {int(k): int(v) for k, v in d.get("classes", {}).items()}
        if declared and declared != m.classes:
            raise ManifestError(f"class counts {declared} disagree with frame list {m.classes}")
        return m


def _manifest_path(path: str | Path) -> Path:
    p = Path(path)
    return p / MANIFEST_NAME if p.is_dir() else p


def _frame_name(label: int, seq: int, frame: int) -> str:
    return f"l{label}_s{seq:04d}_f{frame:04d}.f32"


def save_dataset(
    directory: str | Path,
    maps: Sequence[RdMap],
    sequence_ids: Sequence[int],
    frame_indices: Sequence[int],
    *,
    radar_config: RadarConfig,
    domain: str,
    seed: int,
    augmentation: str = "none",
    augmentation_params: dict | None = None,
    stats: NoiseFloorStats | None = None,
    raw_cubes: Sequence[np.ndarray] | None = None,
) -> DatasetManifest:
    """Write maps (as float32) plus manifest; returns the manifest written.

    Every map needs a label. ``raw_cubes`` (float64 beat samples) are stored
    alongside when given.
    """
    if not maps:
        raise DatasetError("refusing to save an empty dataset")
    if not len(maps) == len(sequence_ids) == len(frame_indices):
        raise DatasetError("maps, sequence ids and frame indices differ in length")
    if raw_cubes is not None and len(raw_cubes) != len(maps):
        raise DatasetError("raw cube count differs from map count")
    shape = tuple(maps[0].cells.shape)
    expected = (radar_config.range_bins, radar_config.chirps_per_frame)
    if shape != expected:
        raise ShapeMismatchError(f"maps have shape {shape}, radar config implies {expected}")
    root = Path(directory)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    frames, raw_files = [], []
    for i, (m, s, f) in enumerate(zip(maps, sequence_ids, frame_indices)):
        if m.label is None:
            raise DatasetError(f"map {i} has no label")
        if m.cells.shape != shape:
            raise ShapeMismatchError(f"map {i} has shape {m.cells.shape}, expected {shape}")
        rel = f"frames/{_frame_name(int(m.label), int(s), int(f))}"
        (root / rel).write_bytes(np.ascontiguousarray(m.cells, dtype=MAP_DTYPE).tobytes())
        frames.append(FrameEntry(rel, int(m.label), int(s), int(f)))
        if raw_cubes is not None:
            (root / "raw").mkdir(exist_ok=True)
            rel_raw = f"raw/{_frame_name(int(m.label), int(s), int(f))[:-4]}.f64"
            (root / rel_raw).write_bytes(np.ascontiguousarray(raw_cubes[i], dtype=RAW_DTYPE).tobytes())
            raw_files.append(rel_raw)
    if len({f.path for f in frames}) != len(frames):
        raise DatasetError("duplicate (label, sequence, frame) entries")
    manifest = DatasetManifest(radar_config, domain, frames, int(seed), shape, augmentation,
                               augmentation_params or {}, stats, raw_files if raw_cubes is not None else None)
    (root / MANIFEST_NAME).write_text(json.dumps(manifest.to_dict(), indent=1) + "\n")
    return manifest


def read_manifest(path: str | Path) -> DatasetManifest:
    mpath = _manifest_path(path)
    if not mpath.is_file():
        raise MissingFileError(f"missing manifest: {mpath}")
    try:
        d = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{mpath}: not valid JSON ({exc})") from exc
    return DatasetManifest.from_dict(d)


def _read_blob(path: Path, shape: tuple[int, int], dtype: str) -> np.ndarray:
    if not path.is_file():
        raise MissingFileError(f"missing frame file: {path}")
    raw = path.read_bytes()
    want = int(np.prod(shape)) * np.dtype(dtype).itemsize
    if len(raw) != want:
        raise ShapeMismatchError(f"{path}: {len(raw)} bytes, shape {shape} needs {want}")
    return np.frombuffer(raw, dtype=dtype).reshape(shape).astype(np.dtype(dtype).newbyteorder("="))


def load_dataset(path: str | Path) -> tuple[DatasetManifest, MapSet]:
    """Read a dataset directory (or its manifest path) back into memory."""
    mpath = _manifest_path(path)
    manifest = read_manifest(mpath)
    root = mpath.parent
    maps = [RdMap(_read_blob(root / f.path, manifest.shape, MAP_DTYPE), manifest.domain, f.label)
            for f in manifest.frames]
    fr = manifest.frames
    ms = MapSet(maps, np.array([f.label for f in fr], dtype=np.int64),
                np.array([f.sequence_id for f in fr], dtype=np.int64),
                np.array([f.frame_index for f in fr], dtype=np.int64), manifest.domain)
    return manifest, ms


def load_raw_cubes(path: str | Path) -> list[np.ndarray]:
    mpath = _manifest_path(path)
    manifest = read_manifest(mpath)
    if manifest.raw_frames is None:
        raise MissingFileError(f"{mpath}: dataset was saved without raw cubes")
    cfg = manifest.radar_config
    shape = (cfg.samples_per_chirp, cfg.chirps_per_frame)
    return [_read_blob(mpath.parent / p, shape, RAW_DTYPE) for p in manifest.raw_frames]
