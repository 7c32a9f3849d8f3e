import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kcm_hydro.pme import (BUMP_SUP, GridProfile, SolverConfig, SolverError, barenblatt, barenblatt_mass,
                           barenblatt_parameters, barenblatt_peak, barenblatt_profile, barenblatt_radius,
                           build_mollifier, density_from_pressure, interface_components, lipschitz_constant,
                           pressure_from_density, regularization_constant, regularize_initial, solve_pme)


def grid(M):
    return (np.arange(M) + 0.5) / M


def two_bumps(M, m=2, peak=0.3, radius=0.12):
    C, t0 = barenblatt_parameters(m, peak, radius)
    u = grid(M)
    return barenblatt(t0, u, m, C, center=0.25) + barenblatt(t0, u, m, C, center=0.75)


# -- profiles and pressure -------------------------------------------------------


def test_pressure_examples():
    assert pressure_from_density(GridProfile(np.array([0.5]), "density"), 2).values[0] == 1.0
    assert pressure_from_density(GridProfile(np.array([0.5]), "density"), 3).values[0] == pytest.approx(0.375)
    assert pressure_from_density(GridProfile(np.array([0.0]), "density"), 2).values[0] == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 5), st.lists(st.floats(1e-3, 1.0), min_size=1, max_size=20))
def test_pressure_inverse(m, vals):
    rho = GridProfile(np.array(vals), "density")
    back = density_from_pressure(pressure_from_density(rho, m), m)
    assert np.allclose(back.values, rho.values, rtol=1e-14, atol=0)


def test_profile_validation():
    with pytest.raises(ValueError):
        GridProfile(np.array([0.5, 1.5]), "density")
    with pytest.raises(ValueError):
        GridProfile(np.array([0.5]), "velocity")


def test_profile_mass_and_grid():
    prof = GridProfile.from_function(lambda u: u, 8)
    assert np.allclose(prof.grid, grid(8))
    assert prof.mass() == pytest.approx(0.5)


# -- mollifier ------------------------------------------------------------------


@pytest.mark.parametrize("eps,M", [(0.1, 256), (0.01, 1024), (0.05, 4096), (0.3, 64)])
def test_mollifier_invariants(eps, M):
    mol = build_mollifier(eps, M)
    assert mol.integral() == pytest.approx(1.0, abs=1e-14)
    w = mol.weights
    assert np.all(w >= 0)
    assert np.array_equal(w, w[::-1])
    assert np.all(np.abs(mol.offsets[w > 0]) / M < eps)
    half = w[mol.offsets >= 0]
    assert np.all(np.diff(half) <= 0)


@pytest.mark.parametrize("eps,M", [(0.1, 4096), (0.05, 8192), (0.2, 2048)])
def test_mollifier_sup_matches_scaled_bump(eps, M):
    mol = build_mollifier(eps, M)
    assert mol.weights.max() == pytest.approx(BUMP_SUP / eps, rel=0.01)


def test_bump_sup_constant():
    from scipy.integrate import quad
    Z = quad(lambda y: math.exp(-1 / (1 - y * y)), -1, 1)[0]
    assert BUMP_SUP == pytest.approx(math.exp(-1) / Z, rel=1e-10)


@pytest.mark.parametrize("eps,M", [(0.01, 200), (0.6, 1024), (0.0, 64)])
def test_mollifier_rejects_bad_widths(eps, M):
    with pytest.raises(ValueError):
        build_mollifier(eps, M)


def test_mollifier_convolution_matches_direct_sum():
    mol = build_mollifier(0.1, 128)
    f = np.random.default_rng(0).random(128)
    direct = np.array([sum(w * f[(j - k) % 128] for k, w in zip(mol.offsets, mol.weights)) / 128
                       for j in range(128)])
    assert np.allclose(mol.apply(f), direct, atol=1e-15)


# -- regularization -------------------------------------------------------------


@pytest.mark.parametrize("m", [2, 3])
def test_regularize_constants(m):
    zero = GridProfile(np.zeros(512), "density")
    assert np.allclose(regularize_initial(zero, 0.05, m).values, 0.05, atol=1e-15)
    half = GridProfile(np.full(512, 0.5), "density")
    assert np.allclose(regularize_initial(half, 0.01, m).values, 0.5, atol=1e-15)


def test_regularize_rejects_pressure_input():
    with pytest.raises(ValueError):
        regularize_initial(GridProfile(np.full(64, 0.5), "pressure", 2), 0.1, 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 3), st.sampled_from([0.05, 0.1, 0.2]), st.integers(0, 2**31))
def test_regularize_chain_on_random_profiles(m, eps, seed):
    M = 256
    rng = np.random.default_rng(seed)
    # random smooth nonnegative profile with zero set
    coef = rng.normal(size=4)
    u = grid(M)
    vals = sum(c * np.cos(2 * np.pi * (k + 1) * u + k) for k, c in enumerate(coef))
    vals = np.clip(0.4 * vals / np.max(np.abs(vals)) + rng.uniform(0, 0.5), 0.0, 1.0)
    out = regularize_initial(GridProfile(vals, "density"), eps, m).values
    assert out.min() >= eps and out.max() <= 1 - eps
    c = m / (m - 1)
    lip_in = lipschitz_constant(c * vals ** (m - 1), 1 / M)
    lip_out = lipschitz_constant(c * out ** (m - 1), 1 / M)
    assert lip_out <= lip_in * (1 + 1e-12)
    assert np.max(np.abs(out - vals)) <= regularization_constant(m, lip_in) * eps ** (1 / (m - 1))
    # summation by parts: |D2 (h_N * p)| <= total variation of h_N times Lip(p)
    p = c * out ** (m - 1)
    d2 = np.abs(np.roll(p, 1) - 2 * p + np.roll(p, -1)) * M**2
    assert np.max(d2) <= 2 * build_mollifier(eps, M).weights.max() * lip_in * (1 + 1e-9) + 1e-9


# -- solver ---------------------------------------------------------------------


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(m=1, M=64, T=0.1)
    with pytest.raises(ValueError):
        SolverConfig(m=2, M=64, T=0.1, cfl_safety=1.5)
    with pytest.raises(ValueError):
        SolverConfig(m=2, M=64, T=0.1, snapshot_times=(0.05, 0.02))
    with pytest.raises(ValueError):
        SolverConfig(m=2, M=64, T=0.1, snapshot_times=(0.0, 0.2))


def test_constant_profile_is_stationary():
    rho0 = GridProfile(np.full(128, 0.37), "density")
    sol = solve_pme(rho0, SolverConfig(m=3, M=128, T=0.1, snapshot_times=(0.0, 0.05, 0.1)))
    for snap in sol.snapshots:
        assert np.all(snap.values == 0.37)


def test_snapshots_land_on_requested_times():
    rho0 = GridProfile(two_bumps(128), "density")
    times = (0.0, 0.0013, 0.01)
    sol = solve_pme(rho0, SolverConfig(m=2, M=128, T=0.01, snapshot_times=times))
    assert tuple(sol.times) == times
    assert sol.at(0.0013) is sol.snapshots[1]
    assert sol.matrix().shape == (3, 128)
    with pytest.raises(KeyError):
        sol.at(0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 3), st.integers(0, 2**31))
def test_mass_and_maximum_principle(m, seed):
    M = 128
    vals = np.random.default_rng(seed).random(M)
    rho0 = GridProfile(vals, "density")
    T = 0.01
    sol = solve_pme(rho0, SolverConfig(m=m, M=M, T=T, snapshot_times=(0.005, T)))
    for snap in sol.snapshots:
        assert abs(snap.mass() - rho0.mass()) <= 1e-12 * (1 + T)
        assert snap.values.min() >= vals.min() - 1e-15
        assert snap.values.max() <= vals.max() + 1e-15


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 3), st.integers(0, 2**31))
def test_comparison_principle(m, seed):
    M = 128
    rng = np.random.default_rng(seed)
    lo = 0.6 * rng.random(M)
    hi = np.minimum(lo + 0.4 * rng.random(M), 1.0)
    cfg = SolverConfig(m=m, M=M, T=0.01)
    a = solve_pme(GridProfile(lo, "density"), cfg).snapshots[-1].values
    b = solve_pme(GridProfile(hi, "density"), cfg).snapshots[-1].values
    assert np.all(a <= b + 1e-12)


def test_grid_mismatch_rejected():
    with pytest.raises(ValueError):
        solve_pme(GridProfile(np.full(64, 0.5), "density"), SolverConfig(m=2, M=128, T=0.1))


def test_barenblatt_convergence_order():
    m = 2
    C, t0 = barenblatt_parameters(m, 1 / 12, 0.25)
    T = t0 / 2
    errs = []
    for M in (256, 512):
        rho0 = barenblatt_profile(M, t0, m, C)
        sol = solve_pme(rho0, SolverConfig(m=m, M=M, T=T))
        exact = barenblatt_profile(M, t0 + T, m, C)
        errs.append(np.sum(np.abs(sol.snapshots[-1].values - exact.values)) / M)
    assert errs[0] / errs[1] >= 1.8


def test_finite_propagation():
    m, M = 2, 512
    C, t0 = barenblatt_parameters(m, 0.3, 0.1)
    times = tuple(np.linspace(0, 0.01, 6))
    sol = solve_pme(barenblatt_profile(M, t0, m, C), SolverConfig(m=m, M=M, T=times[-1], snapshot_times=times))
    u = grid(M)
    for t, snap in zip(sol.times, sol.snapshots):
        support = np.abs(u - 0.5)[snap.values > 1e-12]
        assert support.max() <= barenblatt_radius(t0 + t, m, C) + 3 / M


# -- Barenblatt -----------------------------------------------------------------


def test_barenblatt_examples():
    assert barenblatt(1.0, 0.0, 2, 1 / 12) == pytest.approx(1 / 12, rel=1e-15)
    assert barenblatt(1.0, 1.0, 2, 1 / 12) == 0.0
    assert barenblatt(1.0, -1.0, 2, 1 / 12) == 0.0


def test_barenblatt_mass_is_constant_in_time():
    C, t0 = barenblatt_parameters(2, 1 / 12, 0.25)
    a = barenblatt_profile(4096, t0, 2, C).mass()
    b = barenblatt_profile(4096, 1.5 * t0, 2, C).mass()
    assert a == pytest.approx(b, abs=1e-6)
    assert a == pytest.approx(barenblatt_mass(2, C), abs=1e-6)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_barenblatt_parameters_roundtrip(m):
    C, t0 = barenblatt_parameters(m, 0.5, 0.25)
    assert barenblatt_peak(t0, m, C) == pytest.approx(0.5, rel=1e-12)
    assert barenblatt_radius(t0, m, C) == pytest.approx(0.25, rel=1e-12)


def test_barenblatt_rejects_wrapping_support():
    with pytest.raises(ValueError):
        barenblatt(1.0, 0.3, 2, 1 / 12, center=0.5)


def test_barenblatt_solves_the_equation():
    # centered finite differences of the exact profile away from the front
    m, C, t = 3, 0.2, 0.4
    u = np.linspace(-0.1, 0.1, 41)
    h, k = 1e-4, 1e-6
    lhs = (barenblatt(t + k, u, m, C) - barenblatt(t - k, u, m, C)) / (2 * k)
    v = lambda x: barenblatt(t, x, m, C) ** m  # noqa: E731
    rhs = (v(u + h) - 2 * v(u) + v(u - h)) / h**2
    assert np.allclose(lhs, rhs, rtol=1e-5, atol=1e-8)


# -- interfaces -----------------------------------------------------------------


def test_interface_constant_profile():
    rep = interface_components(GridProfile(np.full(100, 0.5), "density"), 0.1)
    assert rep.count == 1
    assert rep.gamma_measure == 0.0
    assert rep.intervals == [(0, 100)]


def test_interface_two_bumps():
    rep = interface_components(GridProfile(two_bumps(512), "density"), 1e-4)
    assert rep.count == 2
    starts = [a for a, _ in rep.intervals]
    stops = [b for _, b in rep.intervals]
    assert all(b <= a2 for b, a2 in zip(stops, starts[1:]))


def test_interface_component_across_seam():
    vals = np.zeros(64)
    vals[:5] = 0.5
    vals[-5:] = 0.5
    rep = interface_components(GridProfile(vals, "density"), 0.1)
    assert rep.count == 1
    assert rep.intervals == [(59, 69)]


def test_interface_gamma_shrinks_with_delta():
    C, t0 = barenblatt_parameters(2, 0.5, 0.25)
    prof = barenblatt_profile(2048, t0, 2, C)
    gammas = [interface_components(prof, d).gamma_measure for d in (0.1, 0.05, 0.02, 0.01, 0.001)]
    assert all(b <= a for a, b in zip(gammas, gammas[1:]))
    assert gammas[-1] < 0.01


def test_solver_error_is_runtime_error():
    assert issubclass(SolverError, RuntimeError)
