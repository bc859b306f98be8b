import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sim2real_radar.fmcw import DomainNoiseProfile, render_sequence, smooth_ripple
from sim2real_radar.randomization import (
    NoiseFloorStats,
    RandomDrRanges,
    apply_cdr,
    apply_random_dr,
    calibrate_noise_floor,
    clamp_noise,
    sample_random_dr,
)
from sim2real_radar.rd import RdMap, range_doppler

maps_ = arrays(np.float64, (8, 4), elements=st.floats(-200, 0))


def test_clamp_examples():
    assert clamp_noise(np.array([-80.0]), np.array([-120.0]))[0] == -80.0
    assert clamp_noise(np.array([-140.0]), np.array([-120.0]))[0] == -120.0
    with pytest.raises(ValueError):
        clamp_noise(np.zeros((2, 2)), np.zeros((2, 3)))


def test_clamp_keeps_map_metadata_and_dtype():
    rd = RdMap(np.full((4, 4), -150.0, dtype=np.float32), "sim", 2)
    out = clamp_noise(rd, np.full((4, 4), -120.0))
    assert out.label == 2 and out.cells.dtype == np.float32


@given(maps_, maps_)
def test_clamp_is_elementwise_upper_bound(s, n):
    out = clamp_noise(s, n)
    assert np.all(out >= s) and np.all(out >= n)
    assert np.all((out == s) | (out == n))


@given(maps_, maps_, arrays(np.float64, (8, 4), elements=st.floats(0, 50)))
def test_clamp_is_monotone(s1, n, bump):
    s2 = s1 + bump
    assert np.all(clamp_noise(s1, n) <= clamp_noise(s2, n))


def test_thousand_random_pairs_respect_bounds():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        s, n = rng.normal(-110, 20, (2, 16, 8))
        out = clamp_noise(s, n)
        assert np.all(out >= s) and np.all(out >= n)


def test_random_dr_moments_and_per_frame_redraw():
    r = RandomDrRanges((-100.0, -100.0), (1.0, 1.0))
    n = sample_random_dr(r, (100_000,), np.random.default_rng(1))
    assert 0.99 <= n.std() <= 1.01
    wide = RandomDrRanges()
    rng = np.random.default_rng(2)
    a, b = sample_random_dr(wide, (64, 64), rng), sample_random_dr(wide, (64, 64), rng)
    assert abs(a.mean() - b.mean()) > 1e-6


def test_random_dr_pooled_mean_is_midpoint():
    rng = np.random.default_rng(3)
    frames = [sample_random_dr(RandomDrRanges(), (128, 64), rng) for _ in range(100)]
    assert np.mean(frames) == pytest.approx(-115.0, abs=1.0)


def test_random_dr_range_validation():
    with pytest.raises(ValueError):
        RandomDrRanges((-100.0, -130.0))
    with pytest.raises(ValueError):
        RandomDrRanges(std_range_db=(0.0, 1.0))


def test_calibration_closed_forms():
    st_ = calibrate_noise_floor([np.full((4, 4), -110.0)])
    assert (st_.mean_db, st_.std_db, st_.n_cells) == (-110.0, 0.0, 16)
    two = calibrate_noise_floor([np.array([[-100.0]]), np.array([[-90.0]])])
    assert two.mean_db == pytest.approx(-95.0) and two.std_db == pytest.approx(5.0)
    with pytest.raises(ValueError):
        calibrate_noise_floor([])


def test_calibration_matches_numpy_on_pooled_cells():
    rng = np.random.default_rng(4)
    maps = [rng.normal(-107, 6, (128, 64)) for _ in range(10)]
    st_ = calibrate_noise_floor(maps)
    pooled = np.concatenate([m.ravel() for m in maps])
    assert st_.mean_db == pytest.approx(pooled.mean(), abs=1e-9)
    assert st_.std_db == pytest.approx(pooled.std(ddof=0), rel=1e-9)


def test_calibration_recovers_configured_effective_floor(config):
    rng = np.random.default_rng(5)
    prof = DomainNoiseProfile(-110.0, 0.0, 2.5, smooth_ripple(rng, config.range_bins, 2.0))
    cubes, _ = render_sequence(0, 100, "pseudo_real", config, seed=5, profile=prof)
    st_ = calibrate_noise_floor(range_doppler(c) for c in cubes)
    assert st_.n_cells == 100 * 128 * 64
    assert abs(st_.mean_db - prof.effective_floor_db) < 0.5


def test_cdr_degenerate_and_alignment():
    rd = RdMap(np.full((128, 64), -160.0))
    flat = apply_cdr(rd, NoiseFloorStats(-110.0, 0.0, 1), np.random.default_rng(0))
    assert np.all(flat.cells == -110.0)
    stats = NoiseFloorStats(-110.0, 3.0, 1)
    rng = np.random.default_rng(1)
    out = np.concatenate([apply_cdr(rd, stats, rng).cells.ravel() for _ in range(13)])
    assert out.size >= 100_000
    assert abs(out.mean() - stats.mean_db) < 0.2
    assert abs(out.std() / stats.std_db - 1) < 0.02


def test_cdr_preserves_strong_targets():
    stats = NoiseFloorStats(-110.0, 4.0, 1)
    rd = RdMap(np.full((128, 64), stats.mean_db + 30))
    out = apply_cdr(rd, stats, np.random.default_rng(2))
    assert np.array_equal(out.cells, rd.cells)


def test_random_dr_keeps_label():
    rd = RdMap(np.full((8, 8), -160.0), "sim", 1)
    out = apply_random_dr(rd, RandomDrRanges(), np.random.default_rng(0))
    assert out.label == 1 and out.cells.min() > -160


def test_stats_json_roundtrip(tmp_path):
    s = NoiseFloorStats(-107.25, 6.125, 819200)
    s.save(tmp_path / "s.json")
    assert NoiseFloorStats.load(tmp_path / "s.json") == s
    with pytest.raises(ValueError):
        NoiseFloorStats(-100.0, -1.0, 1)
