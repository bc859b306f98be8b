"""FMCW waveform configuration and the radar quantities derived from it."""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SPEED_OF_LIGHT = 299_792_458.0  # m/s


class ConfigError(ValueError):
    """Raised for malformed or physically inconsistent radar/scenario configuration."""


@dataclass(frozen=True)
class RadarConfig:
    carrier_hz: float = 60e9
    bandwidth_hz: float = 882.35e6
    sample_rate_hz: float = 1e6
    chirp_duration_s: float = 0.256e-3
    samples_per_chirp: int = 256
    chirps_per_frame: int = 64
    frame_period_s: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"{f.name} must be strictly positive, got {value!r}")
        for name in ("samples_per_chirp", "chirps_per_frame"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ConfigError(f"{name} must be an integer")
        expected = round(self.sample_rate_hz * self.chirp_duration_s)
        if expected != self.samples_per_chirp:
            raise ConfigError(
                f"samples_per_chirp={self.samples_per_chirp} inconsistent with "
                f"sample_rate_hz*chirp_duration_s={expected}"
            )
        if self.samples_per_chirp % 2:
            raise ConfigError("samples_per_chirp must be even (one-sided range spectrum)")
        active = self.chirps_per_frame * self.chirp_duration_s
        if active > self.frame_period_s * (1 + 1e-12):
            raise ConfigError(
                f"chirps_per_frame*chirp_duration_s={active:g}s exceeds frame_period_s={self.frame_period_s:g}s"
            )

    @property
    def range_bins(self) -> int:
        return self.samples_per_chirp // 2

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RadarConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown radar config keys: {', '.join(unknown)}")
        kwargs = {}
        for f in fields(cls):
            if f.name in data:
                kwargs[f.name] = int(data[f.name]) if f.type == "int" else float(data[f.name])
        return cls(**kwargs)


@dataclass(frozen=True)
class DerivedParams:
    chirp_slope_hz_per_s: float
    range_resolution_m: float
    max_range_m: float
    range_bin_m: float
    wavelength_m: float
    prf_hz: float
    doppler_bin_hz: float
    max_velocity_m_s: float
    velocity_bin_m_s: float


def derive_params(config: RadarConfig, c: float = SPEED_OF_LIGHT) -> DerivedParams:
    """Compute slope, resolutions and unambiguous limits.

    Chirps are back-to-back inside a frame (PRF = 1/T_c) and the ADC is
    real-valued, so only [0, f_s/2] of the beat spectrum is usable.
    """
    slope = config.bandwidth_hz / config.chirp_duration_s
    max_range = (config.sample_rate_hz / 2) * c / (2 * slope)
    wavelength = c / config.carrier_hz
    prf = 1.0 / config.chirp_duration_s
    doppler_bin = prf / config.chirps_per_frame
    return DerivedParams(
        chirp_slope_hz_per_s=slope,
        range_resolution_m=c / (2 * config.bandwidth_hz),
        max_range_m=max_range,
        range_bin_m=max_range / (config.samples_per_chirp / 2),
        wavelength_m=wavelength,
        prf_hz=prf,
        doppler_bin_hz=doppler_bin,
        max_velocity_m_s=wavelength * prf / 4,
        velocity_bin_m_s=doppler_bin * wavelength / 2,
    )


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse a JSON or TOML key-value file into a plain dict."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        return tomllib.loads(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: neither valid JSON nor TOML ({exc})") from None


def load_radar_config(path: str | Path) -> RadarConfig:
    data = read_config_file(path)
    data = {k: v for k, v in data.items() if k != "scenario"}
    return RadarConfig.from_dict(data)
