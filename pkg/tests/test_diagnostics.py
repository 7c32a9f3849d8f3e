import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kcm_hydro.diagnostics import (BAD, GOOD, ZERO, Ensemble, NormBoundReport, BoundEntry, bound_constants,
                                   check_lambda_identities, classify_sites, constant_stability, correction_term,
                                   d1, d1_4, d2, d2_4, d3, empirical_density_error, f_n_mean_zero,
                                   lambda_derivatives_from_density, lambda_from_density, local_equilibrium_error,
                                   norm_bounds_report, one_block_statistic, refinement_ratios)
from kcm_hydro.experiments import BarenblattInit, identity_suite, profile_on_grid, sample_initial_ensemble, solve_from
from kcm_hydro.lattice import g_function, h_function, occupation
from kcm_hydro.pme import BUMP_SUP, GridProfile, PMESolution, interface_components, lipschitz_constant
from kcm_hydro.product import LatticeProfile, sample_product


def grid(M):
    return (np.arange(M) + 0.5) / M


def smooth(M, a=0.5, b=0.3):
    return a + b * np.sin(2 * np.pi * grid(M))


# -- stencils --------------------------------------------------------------------


def test_stencil_orders():
    errs = {}
    for M in (64, 128):
        u, du = grid(M), 1.0 / M
        f = np.sin(2 * np.pi * u)
        w = 2 * np.pi
        errs[M] = [np.max(np.abs(d1(f, du) - w * np.cos(w * u))),
                   np.max(np.abs(d2(f, du) + w**2 * f)),
                   np.max(np.abs(d3(f, du) + w**3 * np.cos(w * u))),
                   np.max(np.abs(d1_4(f, du) - w * np.cos(w * u))),
                   np.max(np.abs(d2_4(f, du) + w**2 * f))]
    ratios = np.array(errs[64]) / np.array(errs[128])
    assert np.all(ratios[:3] > 3.8)
    assert np.all(ratios[3:] > 15.0)


# -- lambda ----------------------------------------------------------------------


def test_lambda_examples():
    assert np.all(lambda_from_density(np.full(10, 0.3), 0.3).values == 0.0)
    assert lambda_from_density(np.array([0.8]), 0.5).values[0] == pytest.approx(math.log(4), rel=1e-15)
    rho = np.linspace(0.01, 0.99, 99)
    assert np.all(np.diff(lambda_from_density(rho, 0.4).values) > 0)


@pytest.mark.parametrize("bad", [0.0, 1.0])
def test_lambda_rejects_degenerate_density(bad):
    with pytest.raises(ValueError):
        lambda_from_density(np.array([0.5, bad]), 0.5)


def test_lambda_rejects_bad_alpha():
    with pytest.raises(ValueError):
        lambda_from_density(np.array([0.5]), 1.0)


def test_lambda_derivatives_against_closed_form():
    M = 4096
    rho = smooth(M)
    u, du = grid(M), 1.0 / M
    w = 2 * np.pi
    r1 = 0.3 * w * np.cos(w * u)
    exact_d1 = r1 / (rho * (1 - rho))
    assert np.allclose(lambda_derivatives_from_density(rho, du)["d1"], exact_d1, atol=1e-4)


def test_identities_vanish_on_constant_field():
    sol = PMESolution([0.0, 0.1, 0.2], [GridProfile(np.full(64, 0.4))] * 3, 2)
    rep = check_lambda_identities(sol, 0.5, 2)
    assert set(rep.residuals) == {"d1", "d2", "d3", "time"}
    assert all(v < 1e-9 for v in rep.residuals.values())


def test_spatial_identities_refine_at_second_order():
    reps = {M: check_lambda_identities(GridProfile(smooth(M)), 0.5, 2) for M in (256, 512)}
    ratios = refinement_ratios(reps[256], reps[512])
    assert set(ratios) == {"d1", "d2", "d3"}
    assert all(r >= 3.0 for r in ratios.values())


# -- correction term ---------------------------------------------------------------


def test_correction_vanishes_on_constant_field():
    for order in (2, 4):
        assert np.max(np.abs(correction_term(np.full(32, 0.3), 0.5, 2, order))) < 1e-9


@pytest.mark.parametrize("m", [2, 3])
def test_correction_is_exact_derivative(m):
    # F = d/du (rho^m d lambda/du) for the regularized smooth profile
    M = 1024
    rho = smooth(M, 0.45, 0.35)
    F = correction_term(rho, 0.5, m)
    assert np.max(np.abs(F)) > 1.0
    assert abs(np.mean(F)) < 1e-9 * np.max(np.abs(F))


def test_correction_mean_refines():
    out = identity_suite(BarenblattInit(2), 2, eps=0.1, grids=(256, 512), T=0.02)
    assert all(r >= 3.0 for r in out["f_ratios"])
    assert out["ratios"]["d1"] >= 3.0


# -- norm bounds -------------------------------------------------------------------


def test_bound_constants_for_quadratic_case():
    L, Ch = 1.7, BUMP_SUP
    c = bound_constants(2, L, Ch)
    C1 = L**2 * (2 * Ch**2 + 0.75 * L**2)
    assert c["C0"] == pytest.approx(L**2 / 8, rel=1e-14)
    assert c["C1"] == pytest.approx(C1, rel=1e-14)
    assert c["C2"] == pytest.approx(C1 / 2, rel=1e-14)
    assert c["C3"] == pytest.approx(C1, rel=1e-14)
    assert c["lambda2"] == pytest.approx(8 * (C1 / 2 + L**4 / 16), rel=1e-14)
    assert c["lambda3"] == pytest.approx((9 * C1 + 9 * L**2 * L**2 / 8) / 2 + 16 * L**6 / 64, rel=1e-14)


def test_bound_constants_positive_for_cubic_case():
    c = bound_constants(3, 2.0)
    assert all(v > 0 for v in c.values())


def test_norm_report_on_regularized_run():
    init = BarenblattInit(2)
    M, eps = 256, 0.1
    ini = profile_on_grid(init, M)
    c_lip = lipschitz_constant(2 * ini.values, 1.0 / M)
    sol = solve_from(init, 2, M, 0.02, count=21, eps=eps)
    rep = norm_bounds_report(sol, eps, 2, c_lip)
    assert isinstance(rep, NormBoundReport)
    assert len(rep.entries) == 12
    for e in rep.entries:
        assert np.isfinite(e.measured)
        if e.explicit:
            assert e.passed, e.as_dict()
    assert rep["l2_dudt_lambda"].bound == np.inf
    assert rep["sup_du_rho"].bound == pytest.approx(c_lip / 2)
    with pytest.raises(KeyError):
        rep["nope"]


def test_bound_entry_fields():
    e = BoundEntry("x", 2.0, 4.0, -1.0, 0.5, True)
    assert e.slack == 0.5
    assert e.empirical_constant == 1.0
    assert e.passed
    d = e.as_dict()
    assert d["test"] == "x" and d["pass"] is True


def test_constant_stability_is_one_sided():
    reports = []
    for eps, measured in ((0.2, 1.0), (0.1, 1.5), (0.05, 0.1)):
        r = NormBoundReport(eps, 2, 1.0, BUMP_SUP)
        r.entries.append(BoundEntry("q", measured, np.inf, 0.0, eps, False))
        reports.append(r)
    s = constant_stability(reports, "q")
    assert s["eps"] == [0.2, 0.1, 0.05]
    assert s["growth"] == pytest.approx(1.5)
    assert s["spread"] == pytest.approx(15.0)
    assert s["smallest_admissible"] == 1.5


# -- one block ---------------------------------------------------------------------


def test_one_block_vanishes_on_full_ensemble():
    ens = Ensemble(np.ones((3, 40), dtype=np.uint8))
    assert one_block_statistic(ens, h_function(2), 4) == pytest.approx(0.0, abs=1e-14)


def test_one_block_of_occupation_is_identically_zero():
    # the block average of eta(0) is the block density itself
    rng = np.random.default_rng(0)
    ens = Ensemble((rng.random((5, 64)) < 0.5).astype(np.uint8))
    assert one_block_statistic(ens, occupation(), 5) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("psi", [h_function(2), g_function(2)])
def test_one_block_decays_like_inverse_root(psi):
    rng = np.random.default_rng(11)
    ens = Ensemble((rng.random((40, 256)) < 0.5).astype(np.uint8))
    ratio = one_block_statistic(ens, psi, 8) / one_block_statistic(ens, psi, 32)
    assert 1.6 <= ratio <= 2.4


def test_one_block_rejects_oversized_box():
    with pytest.raises(ValueError):
        one_block_statistic(Ensemble(np.zeros((1, 10), dtype=np.uint8)), h_function(2), 5)


def test_ensemble_validation():
    with pytest.raises(ValueError):
        Ensemble(np.zeros((0, 10), dtype=np.uint8))
    with pytest.raises(ValueError):
        Ensemble(np.full((2, 10), 2, dtype=np.uint8))


# -- site classes ------------------------------------------------------------------


def test_classify_examples():
    cls = classify_sites(np.full(512, 0.5), 0.1, 0.05, 4, 256)
    assert cls.fractions == {"good": 1.0, "zero": 0.0, "bad": 0.0}
    cls = classify_sites(np.full(512, 0.02), 0.1, 0.05, 4, 256)
    assert cls.fractions["zero"] == 1.0
    with pytest.raises(ValueError):
        classify_sites(np.full(64, 0.5), 0.05, 0.1, 2, 64)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 4), st.sampled_from([16, 32, 48]), st.sampled_from([1, 2, 3]))
def test_classify_matches_window_definition(seed, ell, N, factor):
    rng = np.random.default_rng(seed)
    M = N * factor
    vals = rng.random(M)
    delta, alpha_N, ell0 = 0.4, 0.2, 1
    cls = classify_sites(vals, delta, alpha_N, ell, N, ell0=ell0)
    assert np.isin(cls.labels, [GOOD, ZERO, BAD]).all()
    nodes = grid(M)
    for x in range(N):
        a, b = (x - ell - ell0) / N, (x + ell + ell0) / N
        # the interpolant is piecewise linear: its extremes sit at the ends or at nodes
        pts = [a, b] + [u for k in (-1, 0, 1) for u in nodes + k if a <= u <= b]
        v = np.interp(np.asarray(pts) % 1.0, nodes, vals, period=1.0)
        expect = GOOD if v.min() >= delta else ZERO if v.max() <= alpha_N else BAD
        assert cls.labels[x] == expect


def test_bad_fraction_tracks_interface_measure():
    init = BarenblattInit(2)
    eps = 0.05
    rho = solve_from(init, 2, 1024, 0.02, eps=eps).snapshots[-1]
    alpha_N = eps * 1.002
    for N in (1024, 2048):
        for delta in (0.1, 0.2):
            gamma = interface_components(rho, delta, floor=alpha_N).gamma_measure
            bad = classify_sites(rho, delta, alpha_N, 4, N).fractions["bad"]
            assert gamma / 2 <= bad <= 2 * gamma


# -- local equilibrium -------------------------------------------------------------


def test_local_equilibrium_zero_test_function():
    rng = np.random.default_rng(1)
    ens = Ensemble((rng.random((4, 64)) < 0.5).astype(np.uint8))
    zero = lambda u: np.zeros_like(u)  # noqa: E731
    assert local_equilibrium_error(ens, zero, h_function(2), GridProfile(np.full(128, 0.3))) == 0.0


@pytest.mark.parametrize("N", [256, 1024])
def test_local_equilibrium_sampling_oracle(N):
    init = BarenblattInit(2)
    ens = Ensemble.from_configurations(sample_initial_ensemble(init, N, 100, seed=3))
    ref = profile_on_grid(init, 4096)
    one = lambda u: np.ones_like(u)  # noqa: E731
    assert local_equilibrium_error(ens, one, occupation(), ref) <= 5 / math.sqrt(N)


def test_local_equilibrium_invariant_under_constant_shift():
    N, K = 128, 40
    rng = np.random.default_rng(2)
    rows = np.zeros((6, N), dtype=np.uint8)
    for r in rows:
        r[rng.choice(N, K, replace=False)] = 1
    ens = Ensemble(rows)
    ref = GridProfile(np.full(512, K / N))
    G = lambda u: np.cos(2 * np.pi * u)  # noqa: E731
    shifted = lambda u: np.cos(2 * np.pi * u) + 0.7  # noqa: E731
    a = local_equilibrium_error(ens, G, occupation(), ref)
    b = local_equilibrium_error(ens, shifted, occupation(), ref)
    assert b == pytest.approx(a, abs=1e-12)


def test_empirical_density_error_exact_cases():
    ens = Ensemble(np.ones((2, 64), dtype=np.uint8))
    assert empirical_density_error(ens, GridProfile(np.ones(128)), 4) == 0.0
    assert empirical_density_error(ens, GridProfile(np.full(128, 0.25)), 4) == pytest.approx(0.75)


def test_sampled_ensemble_block_density_close_to_profile():
    prof = LatticeProfile.from_function(lambda u: 0.5 + 0.3 * np.cos(2 * np.pi * u), 1024)
    ens = Ensemble.from_configurations([sample_product(prof, s) for s in range(50)])
    ref = GridProfile.from_function(lambda u: 0.5 + 0.3 * np.cos(2 * np.pi * u), 2048)
    assert empirical_density_error(ens, ref, 8) < 0.02
