"""Dechirped FMCW beat-signal synthesis for point-scatterer scenes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from sim2real_radar.radar import SPEED_OF_LIGHT, RadarConfig, derive_params
from sim2real_radar.scene import (
    CLUTTER_GROUP,
    DEFAULT_ENVELOPES,
    DOMAINS,
    Scene,
    ScenarioEnvelope,
    check_scene,
    sample_scenario,
)

# On-bin RD peak (dB) of an amplitude-1 scatterer at 1 m; all levels are relative.
REFERENCE_LEVEL_DB = -30.0
# E[10*log10(E)] for E ~ Exp(1): mean dB of a circular complex Gaussian cell
# sits this far below 10*log10 of its mean power.
LOG_EXP_MEAN_DB = -10 * np.euler_gamma / np.log(10)

SIM_FLOOR_DB = -160.0
PSEUDO_REAL_FLOOR_DB = (-115.0, -105.0)
PSEUDO_REAL_SPREAD_DB = (1.5, 3.0)
PSEUDO_REAL_GAIN_DB = (-2.0, 2.0)
PSEUDO_REAL_CLUTTER_MULTIPLIER = 2.5


def hann(n: int) -> np.ndarray:
    """Periodic Hann window (sums to exactly n/2)."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class DataCube:
    samples: np.ndarray  # (samples_per_chirp, chirps_per_frame), real
    frame_time_s: float
    domain_tag: str

    def __post_init__(self):
        if self.samples.ndim != 2:
            raise ValueError(f"cube must be 2-D, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("cube contains non-finite samples")


@dataclass(frozen=True, eq=False)
class DomainNoiseProfile:
    """Receiver noise and clutter settings for one rendered sequence.

    ``thermal_floor_db`` is the expected mean dB of an empty, clutter-free RD
    map before ``gain_offset_db`` is applied. ``floor_ripple_db`` optionally
    tilts that floor per range bin (zero-mean, so the pooled mean is kept).
    """

    thermal_floor_db: float = SIM_FLOOR_DB
    gain_offset_db: float = 0.0
    clutter_multiplier: float = 1.0
    floor_ripple_db: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not np.isfinite(self.thermal_floor_db):
            raise ValueError("thermal_floor_db must be finite")
        if self.clutter_multiplier < 0:
            raise ValueError("clutter_multiplier must be >= 0")

    @property
    def effective_floor_db(self) -> float:
        return self.thermal_floor_db + self.gain_offset_db

    @property
    def ripple_std_db(self) -> float:
        return 0.0 if self.floor_ripple_db is None else float(np.std(self.floor_ripple_db))

    def to_dict(self) -> dict:
        return {
            "thermal_floor_db": self.thermal_floor_db,
            "gain_offset_db": self.gain_offset_db,
            "clutter_multiplier": self.clutter_multiplier,
            "ripple_std_db": self.ripple_std_db,
        }


def sim_profile(floor_db: float = SIM_FLOOR_DB) -> DomainNoiseProfile:
    return DomainNoiseProfile(thermal_floor_db=floor_db)


def smooth_ripple(rng: np.random.Generator, n_bins: int, std_db: float, width_bins: float = 4.0) -> np.ndarray:
    """Smooth zero-mean per-range-bin floor offsets with exact std ``std_db``."""
    raw = rng.standard_normal(n_bins + 8 * int(width_bins))
    k = np.arange(-3 * int(width_bins), 3 * int(width_bins) + 1)
    kernel = np.exp(-0.5 * (k / width_bins) ** 2)
    smooth = np.convolve(raw, kernel / kernel.sum(), mode="same")[4 * int(width_bins) : 4 * int(width_bins) + n_bins]
    smooth = smooth - smooth.mean()
    sd = smooth.std()
    return smooth * (std_db / sd) if sd > 0 else smooth


def draw_pseudo_real_profile(
    rng: np.random.Generator,
    config: RadarConfig | None = None,
    *,
    floor_db: tuple[float, float] = PSEUDO_REAL_FLOOR_DB,
    spread_db: tuple[float, float] = PSEUDO_REAL_SPREAD_DB,
    gain_db: tuple[float, float] = PSEUDO_REAL_GAIN_DB,
    clutter_multiplier: float = PSEUDO_REAL_CLUTTER_MULTIPLIER,
) -> DomainNoiseProfile:
    """Per-sequence pseudo-real receiver: floor, ripple, gain and clutter boost."""
    config = config or RadarConfig()
    m = rng.uniform(*floor_db)
    s = rng.uniform(*spread_db)
    g = rng.uniform(*gain_db)
    ripple = smooth_ripple(rng, config.range_bins, s)
    return DomainNoiseProfile(m, g, clutter_multiplier, ripple)


def noise_sigma(config: RadarConfig, floor_db: float) -> float:
    """Time-domain noise std that puts the mean RD cell (dB) at ``floor_db``."""
    e_fast = np.sum(hann(config.samples_per_chirp) ** 2)
    e_slow = np.sum(hann(config.chirps_per_frame) ** 2)
    mean_power = 10 ** ((floor_db - LOG_EXP_MEAN_DB) / 10)
    return float(np.sqrt(mean_power / (e_fast * e_slow)))


def reference_amplitude(config: RadarConfig) -> float:
    # a real tone puts half its amplitude in the positive-frequency bin
    coherent_gain = 0.5 * hann(config.samples_per_chirp).sum() * hann(config.chirps_per_frame).sum()
    return 10 ** (REFERENCE_LEVEL_DB / 20) / coherent_gain


def _colored_noise(rng, shape, sigma, ripple_db):
    w = rng.standard_normal(shape) * sigma
    if ripple_db is None:
        return w
    spec = np.fft.rfft(w, axis=0)
    gain = 10 ** (np.append(ripple_db, ripple_db[-1]) / 20)
    return np.fft.irfft(spec * gain[:, None], n=shape[0], axis=0)


def simulate_frame(
    scene: Scene,
    config: RadarConfig,
    t0: float,
    profile: DomainNoiseProfile,
    rng: np.random.Generator,
    *,
    phases: Sequence[float] | None = None,
    range_attenuation: bool = True,
    noise: bool = True,
    domain_tag: str = "sim",
) -> DataCube:
    """Render one frame starting at ``t0``.

    Beat frequencies use the range at frame start (stop-and-hop); the carrier
    phase ``4*pi*f_c*r(t_c)/c`` is evaluated at every chirp start, so bulk and
    limb Doppler both come from the actual range history. ``phases`` are the
    per-scatterer initial phases; they are drawn from ``rng`` when omitted,
    before any noise.
    """
    d = derive_params(config)
    c_light = SPEED_OF_LIGHT
    n_s, n_c = config.samples_per_chirp, config.chirps_per_frame
    scat = scene.scatterers
    if phases is None:
        phases = rng.uniform(0, 2 * np.pi, size=len(scat))
    phases = np.asarray(phases, dtype=float)
    if len(phases) != len(scat):
        raise ValueError(f"got {len(phases)} phases for {len(scat)} scatterers")

    t_chirp = t0 + np.arange(n_c) * config.chirp_duration_s
    cube = np.zeros((n_s, n_c))
    if scat:
        ranges = np.array([s.range_at(t_chirp) for s in scat])  # (K, n_c)
        for k, s in enumerate(scat):
            r0 = ranges[k, 0]
            if not 0.5 * d.range_bin_m < r0 < d.max_range_m:
                raise ValueError(
                    f"scatterer {k} (group {s.group}) at {r0:.3f} m is outside the unambiguous range "
                    f"(0.5*range_bin, {d.max_range_m:.2f} m)"
                )
            if s.peak_speed() >= d.max_velocity_m_s:
                raise ValueError(
                    f"scatterer {k} (group {s.group}) peak speed {s.peak_speed():.2f} m/s exceeds "
                    f"unambiguous velocity {d.max_velocity_m_s:.2f} m/s"
                )
        amps = np.array([s.amplitude for s in scat]) * reference_amplitude(config)
        is_clutter = np.array([s.group == CLUTTER_GROUP for s in scat])
        amps = np.where(is_clutter, amps * profile.clutter_multiplier, amps)
        if range_attenuation:
            amps = amps / ranges[:, 0] ** 2
        f_beat = 2 * ranges[:, 0] * d.chirp_slope_hz_per_s / c_light
        n = np.arange(n_s)
        fast = np.exp(2j * np.pi * np.outer(n / config.sample_rate_hz, f_beat))  # (n_s, K)
        slow = amps[:, None] * np.exp(1j * (4 * np.pi * config.carrier_hz * ranges / c_light + phases[:, None]))
        cube = (fast @ slow).real

    if noise:
        sigma = noise_sigma(config, profile.thermal_floor_db)
        cube = cube + _colored_noise(rng, (n_s, n_c), sigma, profile.floor_ripple_db)
    if profile.gain_offset_db:
        cube = cube * 10 ** (profile.gain_offset_db / 20)
    return DataCube(cube, float(t0), domain_tag)


def sequence_duration(config: RadarConfig, n_frames: int) -> float:
    return (n_frames - 1) * config.frame_period_s + config.chirps_per_frame * config.chirp_duration_s


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def render_sequence(
    label: int,
    n_frames: int,
    domain: str,
    config: RadarConfig | None = None,
    seed=0,
    *,
    envelope: ScenarioEnvelope | None = None,
    profile: DomainNoiseProfile | None = None,
    noise: bool = True,
) -> tuple[list[DataCube], int]:
    """Sample one scene and render ``n_frames`` consecutive frames of it.

    ``seed`` is an int, a list of ints or a ``SeedSequence``. The scene,
    receiver profile, initial phases and each frame's noise come from
    separate spawned substreams, so frame ``i`` is identical whether rendered
    alone, serially or in parallel.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if domain not in DOMAINS:
        raise ValueError(f"invalid domain {domain!r}")
    config = config or RadarConfig()
    ss = _seed_sequence(seed)
    scene_ss, profile_ss, phase_ss, noise_ss = ss.spawn(4)
    scene = sample_scenario(
        label,
        domain,
        np.random.default_rng(scene_ss),
        duration_s=sequence_duration(config, n_frames),
        envelope=envelope or DEFAULT_ENVELOPES[domain],
        config=config,
    )
    check_scene(scene, config)
    if profile is None:
        prng = np.random.default_rng(profile_ss)
        profile = draw_pseudo_real_profile(prng, config) if domain == "pseudo_real" else sim_profile()
    phases = np.random.default_rng(phase_ss).uniform(0, 2 * np.pi, size=len(scene.scatterers))
    cubes = [
        simulate_frame(
            scene,
            config,
            i * config.frame_period_s,
            profile,
            np.random.default_rng(frame_ss),
            phases=phases,
            noise=noise,
            domain_tag=domain,
        )
        for i, frame_ss in enumerate(noise_ss.spawn(n_frames))
    ]
    return cubes, label


def render_scene_sequence(scene: Scene, n_frames: int, config: RadarConfig, profile: DomainNoiseProfile, seed=0,
                          domain_tag: str = "sim", noise: bool = True) -> list[DataCube]:
    """Render a caller-supplied scene (no scenario sampling)."""
    ss = _seed_sequence(seed)
    phase_ss, noise_ss = ss.spawn(2)
    phases = np.random.default_rng(phase_ss).uniform(0, 2 * np.pi, size=len(scene.scatterers))
    return [
        simulate_frame(scene, config, i * config.frame_period_s, profile, np.random.default_rng(fss),
                       phases=phases, noise=noise, domain_tag=domain_tag)
        for i, fss in enumerate(noise_ss.spawn(n_frames))
    ]
