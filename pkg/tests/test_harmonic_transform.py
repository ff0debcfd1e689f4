import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sphwave.harmonic_transform import (
    GridTooSmallError,
    ModeCoefficients,
    SphericalGrid,
    analyze,
    analyze_real,
    l2_norm,
    packed_index,
    synthesize,
    synthesize_real,
)
from sphwave.special_functions import spherical_harmonic


def random_real_packed(N, rng):
    n_idx, m_idx = packed_index(N)
    c = rng.standard_normal(len(n_idx)) + 1j * rng.standard_normal(len(n_idx))
    c[m_idx == 0] = c[m_idx == 0].real
    return c


def test_grid_basics():
    g = SphericalGrid.for_order(10)
    assert (g.N_theta, g.N_phi) == (40, 40)
    assert g.weights.sum() == pytest.approx(2.0)
    assert np.all(np.diff(g.theta) > 0)
    assert g.area_weights.sum() == pytest.approx(4 * np.pi)
    v = g.unit_vectors()
    np.testing.assert_allclose(np.linalg.norm(v, axis=-1), 1.0)
    assert g.max_order() == 19
    with pytest.raises(GridTooSmallError):
        g.check(20)
    with pytest.raises(ValueError):
        SphericalGrid.create(0, 4)


def test_single_harmonic_recovered():
    N = 10
    g = SphericalGrid.for_order(N)
    th, ph = np.meshgrid(g.theta, g.phi, indexing="ij")
    c = analyze(g, spherical_harmonic(7, 3, th, ph), N)
    expect = ModeCoefficients.zeros(N)
    expect.data[7, N + 3] = 1.0
    np.testing.assert_allclose(c.data, expect.data, atol=1e-13)
    assert c[7, 3] == pytest.approx(1.0)
    with pytest.raises(IndexError):
        c[2, 3]


@pytest.mark.parametrize("N", [20, 60])
def test_round_trip_complex(N):
    rng = np.random.default_rng(N)
    c = ModeCoefficients.zeros(N)
    for n in range(N + 1):
        c.data[n, N - n:N + n + 1] = rng.standard_normal(2 * n + 1) + 1j * rng.standard_normal(2 * n + 1)
    g = SphericalGrid.for_order(N)
    back = analyze(g, synthesize(c, g), N)
    assert np.linalg.norm(back.data - c.data) / np.linalg.norm(c.data) < 1e-12


@pytest.mark.parametrize("N", [20, 60])
def test_round_trip_real(N):
    rng = np.random.default_rng(1 + N)
    c = random_real_packed(N, rng)
    g = SphericalGrid.for_order(N)
    f = synthesize_real(N, c, g)
    assert f.dtype == float
    back = analyze_real(g, f, N)
    assert np.linalg.norm(back - c) / np.linalg.norm(c) < 1e-12
    g2 = analyze_real(g, f, N)
    np.testing.assert_allclose(synthesize_real(N, g2, g), f, atol=1e-11 * np.abs(f).max())


def test_real_and_complex_paths_agree():
    N = 8
    rng = np.random.default_rng(3)
    c = random_real_packed(N, rng)
    g = SphericalGrid.for_order(N)
    full = ModeCoefficients.from_packed(N, c)
    np.testing.assert_allclose(synthesize(full, g).real, synthesize_real(N, c, g), atol=1e-12)
    np.testing.assert_allclose(full.packed(), c)
    pts = (np.array([0.1, 1.0, 3.0]), np.array([0.0, 2.0, 5.0]))
    np.testing.assert_allclose(synthesize(full, pts).real, synthesize_real(N, c, pts), atol=1e-12)
    # grid fast path equals pointwise evaluation
    th, ph = np.meshgrid(g.theta, g.phi, indexing="ij")
    np.testing.assert_allclose(synthesize_real(N, c, (th, ph)), synthesize_real(N, c, g), atol=1e-12)


def test_parseval():
    N = 12
    rng = np.random.default_rng(5)
    c = random_real_packed(N, rng)
    g = SphericalGrid.for_order(N)
    f = synthesize_real(N, c, g)
    _, m_idx = packed_index(N)
    energy = np.sum(np.where(m_idx == 0, 1.0, 2.0) * np.abs(c) ** 2)
    assert l2_norm(g, f) ** 2 == pytest.approx(energy, rel=1e-12)


def test_batched_analysis():
    N = 6
    g = SphericalGrid.for_order(N)
    rng = np.random.default_rng(9)
    cs = np.stack([random_real_packed(N, rng) for _ in range(4)])
    fs = synthesize_real(N, cs, g)
    assert fs.shape == (4, g.N_theta, g.N_phi)
    np.testing.assert_allclose(analyze_real(g, fs, N), cs, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 12), st.integers(0, 3))
def test_minimal_grids_are_exact(N, extra):
    g = SphericalGrid.create(N + 1 + extra, 2 * N + 1 + extra)
    rng = np.random.default_rng(N)
    c = random_real_packed(N, rng)
    np.testing.assert_allclose(analyze_real(g, synthesize_real(N, c, g), N), c, atol=1e-11)


def test_sample_validation():
    g = SphericalGrid.for_order(4)
    with pytest.raises(ValueError):
        analyze_real(g, np.zeros((3, 3)), 4)
    bad = np.zeros((g.N_theta, g.N_phi))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        analyze_real(g, bad, 4)
    with pytest.raises(GridTooSmallError):
        analyze_real(g, np.zeros((g.N_theta, g.N_phi)), 40)


def test_packed_index_layout():
    n_idx, m_idx = packed_index(2)
    assert list(zip(n_idx, m_idx)) == [(0, 0), (1, 0), (2, 0), (1, 1), (2, 1), (2, 2)]
