"""End-to-end workflows shared by the command line and the test suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diagnostics import (Ensemble, check_lambda_identities, constant_stability, empirical_density_error,
                          f_n_mean_zero, local_equilibrium_error, norm_bounds_report, one_block_statistic,
                          refinement_ratios)
from .lattice import Configuration, KCMParams, h_function, occupation, simulate_replicas
from .pme import (GridProfile, PMESolution, SolverConfig, barenblatt, barenblatt_parameters, barenblatt_profile,
                  lipschitz_constant, regularize_initial, solve_pme)
from .product import LatticeProfile, RegularizationSchedule, sample_product

# Reference bump: peak density 1/2 and support radius 1/4 at the start,
# so the support stays inside the unit torus up to t = 0.05.
REFERENCE_PEAK = 0.5
REFERENCE_RADIUS = 0.25


@dataclass(frozen=True)
class BarenblattInit:
    m: int
    peak: float = REFERENCE_PEAK
    radius: float = REFERENCE_RADIUS
    center: float = 0.5

    @property
    def params(self) -> tuple[float, float]:
        return barenblatt_parameters(self.m, self.peak, self.radius)

    def __call__(self, u):
        C, t0 = self.params
        return barenblatt(t0, u, self.m, C, center=self.center)

    def exact(self, t: float, M: int) -> GridProfile:
        C, t0 = self.params
        return barenblatt_profile(M, t0 + t, self.m, C, center=self.center)


def profile_on_grid(fn, M: int) -> GridProfile:
    return GridProfile.from_function(lambda u: np.clip(fn(u), 0.0, 1.0), M)


def snapshot_times(T: float, count: int) -> tuple:
    if count < 1:
        raise ValueError("need at least one snapshot")
    if count == 1 or T == 0:
        return (float(T),)
    return tuple(float(x) for x in np.linspace(0.0, T, count))


def solve_from(fn, m: int, M: int, T: float, count: int = 2, eps: float | None = None,
               cfl: float = 0.5) -> PMESolution:
    rho0 = profile_on_grid(fn, M)
    if eps is not None:
        rho0 = regularize_initial(rho0, eps, m)
    return solve_pme(rho0, SolverConfig(m=m, M=M, T=T, snapshot_times=snapshot_times(T, count), cfl_safety=cfl))


# -- particle ensembles -------------------------------------------------------------


def sampling_generator(seed: int, replica: int) -> np.random.Generator:
    """Initial-condition stream of a replica, distinct from its dynamics stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(replica), 1])))


def sample_initial_ensemble(fn, N: int, replicas: int, seed: int) -> list:
    prof = LatticeProfile.from_function(lambda u: np.clip(fn(u), 0.0, 1.0), N)
    return [sample_product(prof, sampling_generator(seed, r)) for r in range(replicas)]


TEST_FUNCTIONS = {
    "one": lambda u: np.ones_like(np.asarray(u, dtype=np.float64)),
    "cos": lambda u: np.cos(2 * np.pi * np.asarray(u, dtype=np.float64)),
}


def local_functions(m: int) -> dict:
    return {"eta0": occupation(), "h": h_function(m)}


def hydro_row(ensemble: Ensemble, reference: GridProfile, m: int, ell: int, one_block_ells=(4, 8, 16)) -> dict:
    row = {"N": ensemble.N, "l1": empirical_density_error(ensemble, reference, ell)}
    for pname, phi in local_functions(m).items():
        for gname, G in TEST_FUNCTIONS.items():
            row[f"le_{pname}_{gname}"] = local_equilibrium_error(ensemble, G, phi, reference)
    h = h_function(m)
    for b in one_block_ells:
        if 2 * b + 1 <= ensemble.N:
            row[f"vblock_{b}"] = one_block_statistic(ensemble, h, b)
    return row


def run_hydro_compare(fn, m: int, t: float, N_list, replicas: int, seed: int, ell: int = 16,
                      M_ref: int = 2048, reference: str = "pme", schedule: RegularizationSchedule | None = None,
                      workers: int = 1, on_row=None) -> list:
    """Particle ensembles against the PME at time t for every N.

    ``reference='pme'`` compares with the solution started from fn itself;
    ``'regularized'`` starts it from fn regularized at eps_N.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if reference not in ("pme", "regularized"):
        raise ValueError(f"unknown reference {reference!r}")
    rows = []
    base = None
    for N in N_list:
        params = KCMParams(N=int(N), m=m, seed=seed)
        initials = sample_initial_ensemble(fn, int(N), replicas, seed)
        records = simulate_replicas(initials, params, t, [t], workers=workers)
        ensemble = Ensemble.from_records(records)
        if reference == "pme":
            if base is None:
                base = solve_from(fn, m, M_ref, t).snapshots[-1]
            ref = base
        else:
            sched = schedule or RegularizationSchedule(m)
            ref = solve_from(fn, m, M_ref, t, eps=sched.eps(int(N))).snapshots[-1]
        row = hydro_row(ensemble, ref, m, ell)
        row["frozen"] = sum(r.frozen for r in records)
        row["jumps"] = sum(r.jump_count for r in records)
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return rows


def simulate_ensemble(initial, m: int, t: float, replicas: int, seed: int, records: int = 2,
                      workers: int = 1, alpha: float = 0.5):
    """Trajectories of one fixed configuration or of sampled initial data."""
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if isinstance(initial, Configuration):
        initials = [initial] * replicas
        N = initial.N
    else:
        fn, N = initial
        initials = sample_initial_ensemble(fn, N, replicas, seed)
    params = KCMParams(N=N, m=m, alpha=alpha, seed=seed)
    return simulate_replicas(initials, params, t, list(snapshot_times(t, records)), workers=workers)


# -- regularized-run diagnostics -------------------------------------------------------


def norm_bound_suite(fn, m: int, eps_list=(0.2, 0.1, 0.05), M: int = 1024, T: float = 0.05,
                     count: int = 201) -> dict:
    """Norm-bound reports on regularized runs and the eps-stability of the
    empirical constants."""
    ini = profile_on_grid(fn, M)
    c_lip = lipschitz_constant(m / (m - 1) * ini.values ** (m - 1), 1.0 / M)
    reports = []
    for eps in eps_list:
        sol = solve_from(fn, m, M, T, count=count, eps=eps)
        reports.append(norm_bounds_report(sol, eps, m, c_lip))
    names = [e.name for e in reports[0].entries]
    stability = {n: constant_stability(reports, n) for n in names}
    return {"c_lip": c_lip, "reports": reports, "stability": stability}


def identity_suite(fn, m: int, alpha: float = 0.5, eps: float = 0.1, grids=(512, 1024),
                   t_check: float = 0.01, T: float = 0.05) -> dict:
    """Derivative identities on two grids and the mean of the correction term."""
    if not 0.0 < t_check < T:
        raise ValueError("need 0 < t_check < T")
    out = {"identities": {}, "f_integral": {}}
    for M in grids:
        tau = min(0.5 / M, t_check / 2, (T - t_check) / 2)
        times = (0.0, t_check - tau, t_check, t_check + tau, T)
        rho0 = regularize_initial(profile_on_grid(fn, M), eps, m)
        sol = solve_pme(rho0, SolverConfig(m=m, M=M, T=T, snapshot_times=times))
        window = PMESolution(sol.times[1:4], sol.snapshots[1:4], m)
        out["identities"][M] = check_lambda_identities(window, alpha, m)
        out["f_integral"][M] = f_n_mean_zero(sol, alpha, m)
    if len(grids) >= 2:
        a, b = grids[0], grids[1]
        out["ratios"] = refinement_ratios(out["identities"][a], out["identities"][b])
        fa, fb = out["f_integral"][a], out["f_integral"][b]
        out["f_ratios"] = (fa / np.where(fb == 0, np.inf, fb)).tolist()
    return out


def assumption_speed(schedule: RegularizationSchedule, N_list) -> list:
    return [schedule.speed(N) for N in N_list]


def sampling_noise_scale(N: int) -> float:
    return 5.0 / math.sqrt(N)
