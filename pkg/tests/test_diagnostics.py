import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sim2real_radar.diagnostics import (
    DEFAULT_EDGES,
    Histogram,
    magnitude_histogram,
    static_energy_ratio,
    wasserstein1,
    write_histograms_csv,
)
from sim2real_radar.rd import RdMap


def test_default_edges():
    assert len(DEFAULT_EDGES) == 101
    assert DEFAULT_EDGES[0] == -160 and DEFAULT_EDGES[-1] == -60


def test_single_cell():
    h = magnitude_histogram([np.array([[-110.0]])], edges=[-120, -100])
    assert h.counts.tolist() == [1] and h.total == 1


def test_out_of_range_cells_saturate():
    h = magnitude_histogram([np.array([[-500.0, 0.0, -100.0]])], edges=[-120, -110, -100])
    assert h.counts.tolist() == [1, 2]


def test_uniform_cells_split_within_binomial_bound():
    n = 20000
    cells = np.random.default_rng(0).uniform(-120, -100, size=(n, 1))
    h = magnitude_histogram([cells], edges=[-120, -110, -100])
    assert abs(h.counts[0] - n / 2) <= 3 * np.sqrt(n * 0.25)


def test_additivity():
    rng = np.random.default_rng(1)
    a = [RdMap(rng.normal(-110, 10, (8, 4))) for _ in range(3)]
    b = [RdMap(rng.normal(-90, 10, (8, 4))) for _ in range(2)]
    assert np.array_equal((magnitude_histogram(a) + magnitude_histogram(b)).counts, magnitude_histogram(a + b).counts)


def test_histogram_errors():
    with pytest.raises(ValueError):
        magnitude_histogram([])
    with pytest.raises(ValueError):
        magnitude_histogram([np.zeros((2, 2))], edges=[0.0])
    with pytest.raises(ValueError):
        Histogram(np.array([0.0, 1.0]), np.array([1, 2]))


def test_wasserstein_point_masses():
    edges = np.array([0.0, 2.5, 5.0, 7.5])
    a = Histogram(edges, np.array([1, 0, 0]))
    b = Histogram(edges, np.array([0, 1, 0]))
    c = Histogram(edges, np.array([0, 0, 4]))
    assert wasserstein1(a, a) == 0
    assert wasserstein1(a, b) == pytest.approx(2.5)
    assert wasserstein1(a, c) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        wasserstein1(a, Histogram(edges + 1, np.array([1, 0, 0])))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=5, max_size=5), st.lists(st.integers(0, 9), min_size=5, max_size=5))
def test_wasserstein_symmetric_nonnegative(ca, cb):
    edges = np.linspace(0, 10, 6)
    a, b = Histogram(edges, np.array(ca) + 1), Histogram(edges, np.array(cb) + 1)
    assert wasserstein1(a, b) == pytest.approx(wasserstein1(b, a))
    assert wasserstein1(a, b) >= 0


def test_energy_ratio_examples():
    n_c = 64
    silent = np.full((128, n_c), -240.0)
    static = silent.copy()
    static[:, n_c // 2] = -80
    assert static_energy_ratio(static) == pytest.approx(1.0)
    assert static_energy_ratio(np.full((128, n_c), -100.0)) == pytest.approx(3 / 64)
    cluttered = np.full((128, n_c), -100.0)
    cluttered[10, n_c // 2] = -70
    moving = cluttered.copy()
    moving[40, 45] = -75
    assert static_energy_ratio(moving) < static_energy_ratio(cluttered)
    with pytest.raises(ValueError):
        static_energy_ratio(cluttered, halfwidth_bins=32)


def test_histogram_csv(tmp_path):
    h = magnitude_histogram([np.full((2, 2), -100.0)])
    write_histograms_csv({"sim": h, "pr": h}, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "bin_lo_db,bin_hi_db,sim,pr"
    assert len(lines) == 101
