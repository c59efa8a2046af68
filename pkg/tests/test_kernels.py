import itertools
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windgp.data_panel import InputGrid
from windgp.errors import InvalidRange, NotPositiveDefinite
from windgp.kernels import (
    KernelFamily,
    KernelSpec,
    build_covariance,
    cholesky_jitter,
    cross_covariance,
    matern_corr,
    periodic_corr,
    spatiotemporal_kernel,
    temporal_kernel,
)
from windgp.warping import RbfLayer, WarpStack

FAMILIES = list(KernelFamily)


def ref_corr(family, d, rho):
    r = d / rho
    if family == "M12":
        return math.exp(-r)
    if family == "M32":
        return (1 + math.sqrt(3) * r) * math.exp(-math.sqrt(3) * r)
    if family == "M52":
        return (1 + math.sqrt(5) * r + 5 * r * r / 3) * math.exp(-math.sqrt(5) * r)
    return math.exp(-r * r / 2)


def ref_rbf(x, w, g, a):
    x = list(x)
    e = math.exp(-sum((xi - gi) ** 2 for xi, gi in zip(x, g)) / (2 * a * a))
    return [xi + wi * (xi - gi) * e for xi, wi, gi in zip(x, w, g)]


def ref_kernel(si, ti, sj, tj, spec):
    """Scalar oracle written from the kernel formulas."""
    gi, gj = list(si), list(sj)
    for layer in spec.spatial_warp.layers:
        gi = ref_rbf(gi, layer.w, layer.gamma, layer.a)
        gj = ref_rbf(gj, layer.w, layer.gamma, layer.a)
    hi, hj = [ti], [tj]
    for layer in spec.temporal_warp.layers:
        hi = ref_rbf(hi, layer.w, layer.gamma, layer.a)
        hj = ref_rbf(hj, layer.w, layer.gamma, layer.a)
    ks = ref_corr(spec.spatial_family.value, math.dist(gi, gj), spec.rho_s)
    kt = ref_corr(spec.temporal_family.value, abs(hi[0] - hj[0]), spec.rho_t)
    kp = math.exp(-2 / spec.rho_p**2 * math.sin(math.pi * abs(ti - tj) / (2 * spec.period)) ** 2)
    return spec.eta * ks * (kt + spec.eta_p * kp)


def warped_spec(family="M52"):
    return KernelSpec(
        eta=0.7,
        spatial_family=family,
        rho_s=0.4,
        temporal_family="M32",
        rho_t=0.3,
        eta_p=0.2,
        rho_p=0.8,
        period=0.5,
        spatial_warp=WarpStack(2, [RbfLayer([1.1, -0.5], [0.3, 0.6], 0.2)]),
        temporal_warp=WarpStack(1, [RbfLayer([0.9], [0.4], 0.25)]),
    )


def small_grid(M=3, T=4, seed=1):
    r = np.random.default_rng(seed)
    return InputGrid(r.uniform(0.05, 0.95, size=(M, 2)), (np.arange(T) + 0.5) / T, np.zeros(2), 1.0)


@pytest.mark.parametrize("family", FAMILIES)
def test_corr_is_one_at_zero(family, backend):
    assert matern_corr(family, 0.0, 0.7) == 1.0
    assert matern_corr(family, np.zeros(3), 0.7).tolist() == [1.0, 1.0, 1.0]


def test_se_and_m12_hand_values():
    assert matern_corr("SE", 0.3 * math.sqrt(2), 0.3) == pytest.approx(math.exp(-1), abs=1e-15)
    assert matern_corr("M12", 0.3, 0.3) == pytest.approx(0.367879, abs=1e-6)


@pytest.mark.parametrize("family", FAMILIES)
def test_corr_matches_formula_and_decreases(family, backend):
    d = np.linspace(0, 3, 301)
    vals = matern_corr(family, d, 0.5)
    ref = np.array([ref_corr(family.value, x, 0.5) for x in d])
    np.testing.assert_allclose(vals, ref, rtol=1e-13, atol=1e-300)
    assert np.all(np.diff(vals) < 0)
    assert np.all((vals > 0) & (vals <= 1))


def test_corr_rejects_bad_range():
    with pytest.raises(InvalidRange):
        matern_corr("SE", 0.1, 0.0)
    with pytest.raises(InvalidRange):
        matern_corr("SE", -0.1, 1.0)
    with pytest.raises(InvalidRange):
        periodic_corr(0.1, 0.0, 0.5)


def test_periodic_values():
    assert periodic_corr(0.0, 1.0, 0.5) == 1.0
    assert periodic_corr(1.0, 0.7, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert periodic_corr(0.5, 1.0, 0.5) == pytest.approx(math.exp(-2), abs=1e-15)
    assert periodic_corr(0.5, 1.0, 0.5) == pytest.approx(0.135335, abs=1e-6)


def test_temporal_kernel_zero_lag_and_two_term_value():
    spec = KernelSpec(1.0, "SE", 1.0, "M32", 0.1, eta_p=0.5, rho_p=1.0, period=0.5)
    assert temporal_kernel(0.3, 0.3, spec) == pytest.approx(1.5)
    expected = (1 + math.sqrt(3)) * math.exp(-math.sqrt(3)) + 0.5 * math.exp(-2 * math.sin(math.pi * 0.1) ** 2)
    assert temporal_kernel(0.2, 0.3, spec) == pytest.approx(expected, abs=1e-14)


def test_temporal_kernel_without_periodic_is_warped_matern():
    spec = warped_spec()
    spec.eta_p = 0.0
    g = [ref_rbf([t], [0.9], [0.4], 0.25)[0] for t in (0.1, 0.45)]
    assert temporal_kernel(0.1, 0.45, spec) == pytest.approx(ref_corr("M32", abs(g[0] - g[1]), 0.3), abs=1e-14)


def test_periodic_term_uses_unwarped_time():
    spec = warped_spec()
    no_p = KernelSpec(**{**spec.__dict__, "eta_p": 0.0})
    diff = temporal_kernel(0.1, 0.45, spec) - temporal_kernel(0.1, 0.45, no_p)
    assert diff == pytest.approx(0.2 * periodic_corr(0.35, 0.8, 0.5), abs=1e-14)


def test_spatiotemporal_hand_value():
    spec = KernelSpec(0.03, "SE", 1.0, "M32", 1.0)
    assert spatiotemporal_kernel(((0.0, 0.0), 0.5), ((1.0, 0.0), 0.5), spec) == pytest.approx(0.018196, abs=1e-6)
    assert spatiotemporal_kernel(((0.2, 0.3), 0.5), ((0.2, 0.3), 0.5), warped_spec()) == pytest.approx(0.7 * 1.2)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6))
def test_spatiotemporal_symmetric_and_matches_oracle(v):
    spec = warped_spec()
    xi, xj = ((v[0], v[1]), v[2]), ((v[3], v[4]), v[5])
    k = spatiotemporal_kernel(xi, xj, spec)
    assert k == pytest.approx(spatiotemporal_kernel(xj, xi, spec), rel=1e-14)
    assert k == pytest.approx(ref_kernel(xi[0], xi[1], xj[0], xj[1], spec), rel=1e-12, abs=1e-300)


def test_build_covariance_single_cell():
    grid = InputGrid(np.array([[0.5, 0.5]]), np.array([0.5]), np.zeros(2), 1.0)
    spec = KernelSpec(0.4, "SE", 1.0, "M32", 1.0, eta_p=0.25)
    np.testing.assert_allclose(build_covariance(grid, spec), [[0.5]])


@pytest.mark.parametrize("family", FAMILIES)
def test_build_covariance_matches_double_loop(family, backend):
    grid = small_grid(3, 4)
    spec = warped_spec(family)
    K = build_covariance(grid, spec)
    cells = [(m, t) for m in range(3) for t in range(4)]
    for (a, (m, t)), (b, (n, u)) in itertools.product(enumerate(cells), repeat=2):
        ref = ref_kernel(grid.spatial_coords[m], grid.temporal_coords[t], grid.spatial_coords[n], grid.temporal_coords[u], spec)
        assert K[a, b] == pytest.approx(ref, rel=1e-12, abs=1e-15)


def test_site_permutation_permutes_blocks():
    grid = small_grid(4, 3)
    perm = [2, 0, 3, 1]
    pgrid = InputGrid(grid.spatial_coords[perm], grid.temporal_coords, grid.shift, grid.scale)
    spec = warped_spec()
    K = build_covariance(grid, spec)
    Kp = build_covariance(pgrid, spec)
    idx = np.array([m * 3 + t for m in perm for t in range(3)])
    np.testing.assert_allclose(Kp, K[np.ix_(idx, idx)], rtol=1e-13)


def _points(grid):
    T = grid.n_hours
    S = np.repeat(grid.spatial_coords, T, axis=0)
    t = np.tile(grid.temporal_coords, grid.n_sites)
    return S, t


def test_cross_covariance_consistency(rng):
    grid = small_grid(3, 5)
    spec = warped_spec()
    pts = _points(grid)
    K = build_covariance(grid, spec)
    np.testing.assert_allclose(cross_covariance(pts, pts, spec), K, rtol=1e-13)
    one = (pts[0][[7]], pts[1][[7]])
    np.testing.assert_allclose(cross_covariance(pts, one, spec)[:, 0], K[:, 7], rtol=1e-13)
    other = (rng.uniform(size=(6, 2)), rng.uniform(size=6))
    np.testing.assert_allclose(cross_covariance(pts, other, spec), cross_covariance(other, pts, spec).T, rtol=1e-13)


@settings(max_examples=15, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    M=st.integers(1, 30),
    family=st.sampled_from(FAMILIES),
    rho=st.floats(0.01, 3.0),
    sigma2=st.floats(1e-8, 1.0),
)
def test_noisy_covariance_factorizes(seed, M, family, rho, sigma2):
    r = np.random.default_rng(seed)
    grid = InputGrid(r.uniform(0.05, 0.95, size=(M, 2)), (np.arange(24) + 0.5) / 24, np.zeros(2), 1.0)
    spec = KernelSpec(r.uniform(0.01, 1.0), family, rho, "M32", r.uniform(0.01, 3.0), eta_p=0.1)
    K = build_covariance(grid, spec)
    K[np.diag_indices_from(K)] += sigma2
    L, _ = cholesky_jitter(K)
    assert np.all(np.isfinite(L))


def test_jitter_escalates_and_logs(caplog):
    A = np.ones((3, 3))  # rank one, PSD
    with caplog.at_level(logging.WARNING):
        L, jitter = cholesky_jitter(A)
    assert jitter >= 1e-10
    assert "jitter" in caplog.text.lower()
    np.testing.assert_allclose(L @ L.T, A + jitter * np.eye(3), atol=1e-12)


def test_jitter_gives_up():
    with pytest.raises(NotPositiveDefinite):
        cholesky_jitter(np.diag([1.0, -1.0]))
