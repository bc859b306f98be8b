"""Synthetic FMCW range-Doppler data with calibrated noise-floor randomization.

The package renders point-scatterer occupancy scenes into FMCW beat signals,
turns them into range-Doppler maps and classifier images, raises the simulated
noise floor either at random or from statistics calibrated on unlabeled
empty-room frames, and measures how a classifier trained on synthetic data
transfers to a held-out pseudo-real domain.
"""

from sim2real_radar.radar import RadarConfig, DerivedParams, derive_params, SPEED_OF_LIGHT

__all__ = ["RadarConfig", "DerivedParams", "derive_params", "SPEED_OF_LIGHT"]
__version__ = "0.1.0"
