"""Point-scatterer scenes: static clutter plus walkers with limb micro-Doppler.

A walker is one torso scatterer and a few limb scatterers that share the
torso's bulk radial velocity but swing around it sinusoidally at the gait
frequency. Everything is radial-only; there is no geometry beyond range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from sim2real_radar.radar import ConfigError, RadarConfig, derive_params

LABELS = (0, 1, 2)
LABEL_NAMES = {0: "empty", 1: "one_person", 2: "two_people"}
DOMAINS = ("sim", "pseudo_real")
CLUTTER_GROUP = -1


@dataclass(frozen=True)
class Scatterer:
    amplitude: float
    base_range_m: float
    radial_velocity_m_s: float = 0.0
    md_amplitude_m_s: float = 0.0
    md_freq_hz: float = 0.0
    md_phase_rad: float = 0.0
    group: int = CLUTTER_GROUP  # walker index, or CLUTTER_GROUP for static clutter

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError(f"scatterer amplitude must be > 0, got {self.amplitude}")
        if not self.base_range_m > 0:
            raise ValueError(f"scatterer base range must be > 0, got {self.base_range_m}")

    @property
    def is_static(self) -> bool:
        return self.radial_velocity_m_s == 0 and self.md_amplitude_m_s == 0

    def range_at(self, t):
        r = self.base_range_m + self.radial_velocity_m_s * np.asarray(t, dtype=float)
        if self.md_freq_hz > 0:
            w = 2 * np.pi * self.md_freq_hz
            r = r - (self.md_amplitude_m_s / w) * np.cos(w * np.asarray(t, dtype=float) + self.md_phase_rad)
        return r

    def velocity_at(self, t):
        v = np.full(np.shape(t), self.radial_velocity_m_s, dtype=float)
        if self.md_freq_hz > 0:
            w = 2 * np.pi * self.md_freq_hz
            v = v + self.md_amplitude_m_s * np.sin(w * np.asarray(t, dtype=float) + self.md_phase_rad)
        return v

    def peak_speed(self) -> float:
        return abs(self.radial_velocity_m_s) + abs(self.md_amplitude_m_s)

    def range_extent(self, duration_s: float) -> tuple[float, float]:
        """Bounds of r(t) over [0, duration_s], md swing included conservatively."""
        ends = (self.base_range_m, self.base_range_m + self.radial_velocity_m_s * duration_s)
        swing = self.md_amplitude_m_s / (2 * np.pi * self.md_freq_hz) if self.md_freq_hz > 0 else 0.0
        return min(ends) - swing, max(ends) + swing


@dataclass(frozen=True)
class Scene:
    scatterers: tuple[Scatterer, ...]
    label: int
    duration_s: float

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"invalid label {self.label!r}; expected one of {LABELS}")
        if self.label == 0 and any(not s.is_static for s in self.scatterers):
            raise ValueError("an empty scene may only contain static scatterers")
        if self.walker_groups != self.label:
            raise ValueError(f"label {self.label} but {self.walker_groups} walker groups present")

    @property
    def walker_groups(self) -> int:
        return len({s.group for s in self.scatterers if s.group != CLUTTER_GROUP})

    @property
    def moving(self) -> list[Scatterer]:
        return [s for s in self.scatterers if not s.is_static]

    @property
    def clutter(self) -> list[Scatterer]:
        return [s for s in self.scatterers if s.group == CLUTTER_GROUP]


@dataclass(frozen=True)
class WalkerParams:
    start_range_m: tuple[float, float] = (2.0, 12.0)
    speed_m_s: tuple[float, float] = (0.3, 2.0)
    gait_freq_hz: tuple[float, float] = (0.8, 2.0)
    limb_count: int = 4
    torso_to_limb_amplitude_ratio: float = 3.0
    torso_amplitude: tuple[float, float] = (0.7, 1.4)

    def __post_init__(self):
        lo, hi = self.speed_m_s
        if not 0.3 <= lo <= hi <= 2.0:
            raise ConfigError(f"walker speed range {self.speed_m_s} must lie within [0.3, 2.0] m/s")
        for name in ("start_range_m", "gait_freq_hz", "torso_amplitude"):
            a, b = getattr(self, name)
            if not 0 < a <= b:
                raise ConfigError(f"{name} must be an ascending positive interval, got {(a, b)}")
        if self.limb_count < 0:
            raise ConfigError("limb_count must be >= 0")
        if self.torso_to_limb_amplitude_ratio <= 0:
            raise ConfigError("torso_to_limb_amplitude_ratio must be > 0")


@dataclass(frozen=True)
class ScenarioEnvelope:
    """Randomization envelope for one domain."""

    walker: WalkerParams = field(default_factory=WalkerParams)
    clutter_count: tuple[int, int] = (3, 8)
    # received clutter level relative to an amplitude-1 scatterer at 1 m (dB);
    # amplitudes are range-compensated so the level holds at any distance
    clutter_level_db: tuple[float, float] = (-78.0, -65.0)
    clutter_range_m: tuple[float, float] = (1.5, 20.0)
    min_walker_separation_m: float = 1.0

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base: "ScenarioEnvelope | None" = None) -> "ScenarioEnvelope":
        base = base or cls()
        data = dict(data)
        walker_keys = {f for f in WalkerParams.__dataclass_fields__}
        env_keys = {f for f in cls.__dataclass_fields__} - {"walker"}
        unknown = set(data) - walker_keys - env_keys - {"walker"}
        if unknown:
            raise ConfigError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
        walker_over = dict(data.pop("walker", {}))
        for k in list(data):
            if k in walker_keys:
                walker_over[k] = data.pop(k)
        walker = replace(base.walker, **{k: _coerce(v) for k, v in walker_over.items()})
        return replace(base, walker=walker, **{k: _coerce(v) for k, v in data.items()})


def _coerce(v):
    return tuple(v) if isinstance(v, list) else v


# Walkers slower than ~0.46 m/s (3 Doppler bins) park the torso mainlobe in
# the zero-Doppler band, so the default envelopes start at 0.5 m/s.
DEFAULT_ENVELOPES: dict[str, ScenarioEnvelope] = {
    "sim": ScenarioEnvelope(walker=WalkerParams(speed_m_s=(0.5, 2.0))),
    # Pseudo-real clutter count is 2-3x the sim count; its amplitude boost is
    # applied at render time through DomainNoiseProfile.clutter_multiplier.
    "pseudo_real": ScenarioEnvelope(
        walker=WalkerParams(start_range_m=(2.5, 13.0), speed_m_s=(0.5, 2.0), gait_freq_hz=(0.9, 1.8)),
        clutter_count=(3, 8),
        clutter_range_m=(1.5, 21.0),
    ),
}
PSEUDO_REAL_CLUTTER_COUNT_FACTOR = (2.0, 3.0)


def envelopes_from_config(data: Mapping[str, Any] | None) -> dict[str, ScenarioEnvelope]:
    """Build per-domain envelopes from a ``scenario`` config table.

    Top-level keys apply to both domains; ``sim`` / ``pseudo_real`` sub-tables
    override per domain.
    """
    if not data:
        return dict(DEFAULT_ENVELOPES)
    data = dict(data)
    per_domain = {d: data.pop(d, {}) for d in DOMAINS}
    out = {}
    for d in DOMAINS:
        env = ScenarioEnvelope.from_dict(data, DEFAULT_ENVELOPES[d])
        out[d] = ScenarioEnvelope.from_dict(per_domain[d], env)
    return out


def make_walker(
    params: WalkerParams,
    rng: np.random.Generator,
    *,
    start_range_m: float | None = None,
    speed_m_s: float | None = None,
    direction: int | None = None,
    group: int = 0,
    config: RadarConfig | None = None,
) -> list[Scatterer]:
    """Sample one walker: a torso plus ``params.limb_count`` limbs.

    ``direction`` is -1 (approaching) or +1 (receding); unspecified values are
    drawn from ``params``/``rng``. All draws happen in a fixed order so a given
    seed always yields the same walker.
    """
    derived = derive_params(config or RadarConfig())
    speed = rng.uniform(*params.speed_m_s) if speed_m_s is None else float(speed_m_s)
    sign = rng.choice((-1, 1)) if direction is None else int(direction)
    r0 = rng.uniform(*params.start_range_m) if start_range_m is None else float(start_range_m)
    gait = rng.uniform(*params.gait_freq_hz)
    torso_amp = rng.uniform(*params.torso_amplitude)
    md_amps = rng.uniform(0.4, 1.2, size=params.limb_count) * speed
    phase0 = rng.uniform(0, 2 * np.pi)

    peak = speed + (md_amps.max() if params.limb_count else 0.0)
    if peak >= derived.max_velocity_m_s:
        raise ValueError(
            f"walker peak radial speed {peak:.2f} m/s exceeds unambiguous limit {derived.max_velocity_m_s:.2f} m/s"
        )
    velocity = sign * speed
    torso = Scatterer(torso_amp, r0, velocity, group=group)
    limb_amp = torso_amp / params.torso_to_limb_amplitude_ratio
    limbs = [
        Scatterer(
            limb_amp,
            r0,
            velocity,
            md_amplitude_m_s=float(md_amps[k]),
            md_freq_hz=gait,
            md_phase_rad=float((phase0 + 2 * np.pi * k / params.limb_count) % (2 * np.pi)),
            group=group,
        )
        for k in range(params.limb_count)
    ]
    return [torso, *limbs]


def _feasible_start(lo, hi, travel, sign, r_min, r_max, swing):
    """Start-range interval that keeps the walker inside (r_min, r_max)."""
    if sign < 0:
        lo = max(lo, r_min + travel + swing)
        hi = min(hi, r_max - swing)
    else:
        lo = max(lo, r_min + swing)
        hi = min(hi, r_max - travel - swing)
    return lo, hi


def sample_scenario(
    label: int,
    domain: str,
    rng: np.random.Generator,
    *,
    duration_s: float = 1.0,
    envelope: ScenarioEnvelope | None = None,
    config: RadarConfig | None = None,
) -> Scene:
    """Draw a random scene with ``label`` walkers in the given domain."""
    if label not in LABELS:
        raise ValueError(f"invalid label {label!r}; expected one of {LABELS}")
    if domain not in DOMAINS:
        raise ValueError(f"invalid domain {domain!r}; expected one of {DOMAINS}")
    config = config or RadarConfig()
    derived = derive_params(config)
    env = envelope or DEFAULT_ENVELOPES[domain]

    n_clutter = int(rng.integers(env.clutter_count[0], env.clutter_count[1] + 1))
    if domain == "pseudo_real":
        n_clutter = int(round(n_clutter * rng.uniform(*PSEUDO_REAL_CLUTTER_COUNT_FACTOR)))
    c_lo, c_hi = env.clutter_range_m
    c_hi = min(c_hi, 0.98 * derived.max_range_m)
    levels = rng.uniform(*env.clutter_level_db, size=n_clutter)
    ranges = rng.uniform(c_lo, c_hi, size=n_clutter)
    scatterers = [Scatterer(float(10 ** (lv / 20) * r**2), float(r)) for lv, r in zip(levels, ranges)]

    # keep r(t) strictly inside (0.5 range bin, max range) with a small guard
    r_min = max(0.5 * derived.range_bin_m, 0.5)
    r_max = derived.max_range_m - 0.5
    starts: list[float] = []
    wp = env.walker
    span = r_max - r_min
    # travel plus limb swing at both ends must fit in the span
    swing_per_speed = 1.2 / (2 * np.pi * wp.gait_freq_hz[0])
    v_cap = min(wp.speed_m_s[1], span / (duration_s + 2 * swing_per_speed))
    if label and v_cap < wp.speed_m_s[0]:
        raise ValueError(f"no walker speed in {wp.speed_m_s} fits {duration_s}s inside the unambiguous range")
    for group in range(label):
        placed = False
        # long sequences leave narrow start intervals; redraw direction and speed if needed
        for _ in range(50):
            sign = int(rng.choice((-1, 1)))
            speed = rng.uniform(wp.speed_m_s[0], v_cap)
            swing = speed * swing_per_speed
            lo, hi = _feasible_start(*wp.start_range_m, speed * duration_s, sign, r_min, r_max, swing)
            if lo > hi:
                # widen to the whole unambiguous range
                lo, hi = _feasible_start(r_min, r_max, speed * duration_s, sign, r_min, r_max, swing)
            if lo > hi:
                continue
            for _ in range(200):
                r0 = rng.uniform(lo, hi)
                if all(abs(r0 - s) >= env.min_walker_separation_m for s in starts):
                    placed = True
                    break
            if placed:
                break
        if not placed:
            raise ValueError("could not place walkers with the required range separation")
        starts.append(r0)
        scatterers += make_walker(wp, rng, start_range_m=r0, speed_m_s=speed, direction=sign, group=group, config=config)
    return Scene(tuple(scatterers), label, duration_s)


def check_scene(scene: Scene, config: RadarConfig) -> None:
    """Raise if any scatterer leaves the unambiguous range/velocity window."""
    derived = derive_params(config)
    for k, s in enumerate(scene.scatterers):
        lo, hi = s.range_extent(scene.duration_s)
        if lo <= 0.5 * derived.range_bin_m or hi >= derived.max_range_m:
            raise ValueError(
                f"scatterer {k} (group {s.group}) spans {lo:.2f}-{hi:.2f} m, outside "
                f"(0.5*range_bin, {derived.max_range_m:.2f}) m"
            )
        if s.peak_speed() >= derived.max_velocity_m_s:
            raise ValueError(
                f"scatterer {k} (group {s.group}) peak speed {s.peak_speed():.2f} m/s exceeds "
                f"{derived.max_velocity_m_s:.2f} m/s"
            )


def walker_speeds(scenes: Sequence[Scene]) -> np.ndarray:
    """Bulk speed of every walker torso across ``scenes``."""
    return np.array(
        [abs(s.radial_velocity_m_s) for sc in scenes for s in sc.scatterers if s.group >= 0 and s.md_amplitude_m_s == 0]
    )
