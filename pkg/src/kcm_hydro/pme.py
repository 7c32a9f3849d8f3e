"""Porous medium equation d_t rho = d_uu(rho^m) on the unit torus.

Explicit conservative finite differences on v = rho^m, the
truncate-mollify regularization of initial data through the pressure
variable, Barenblatt reference solutions and superlevel-set analysis.
Grid cell j sits at u_j = (j + 1/2) / M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.ndimage import convolve1d

from ._backend import kernels

BOUNDS_SLACK = 1e-12
MASS_FLOOR = 10 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class GridProfile:
    """Density or pressure sampled at the M cell centres of [0, 1)."""

    values: np.ndarray
    kind: str = "density"
    m: int | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("values must be a non-empty 1-d vector")
        if not np.all(np.isfinite(vals)):
            raise ValueError("profile values must be finite")
        if self.kind == "density":
            if vals.min() < 0.0 or vals.max() > 1.0:
                raise ValueError("density values must lie in [0, 1]")
        elif self.kind == "pressure":
            if self.m is None:
                raise ValueError("a pressure profile needs m")
            top = self.m / (self.m - 1)
            if vals.min() < 0.0 or vals.max() > top * (1 + 1e-14):
                raise ValueError(f"pressure values must lie in [0, {top}]")
        else:
            raise ValueError(f"kind must be 'density' or 'pressure', got {self.kind!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def M(self) -> int:
        return int(self.values.size)

    @property
    def du(self) -> float:
        return 1.0 / self.M

    @property
    def grid(self) -> np.ndarray:
        return (np.arange(self.M) + 0.5) / self.M

    def mass(self) -> float:
        return float(self.values.sum() * self.du)

    @classmethod
    def from_function(cls, fn, M: int, kind: str = "density", m: int | None = None):
        u = (np.arange(M) + 0.5) / M
        return cls(np.asarray(fn(u), dtype=np.float64), kind, m)


# -- pressure variable -----------------------------------------------------------


def _pressure(rho: np.ndarray, m: int) -> np.ndarray:
    return m / (m - 1) * rho ** (m - 1)


def _density(pressure: np.ndarray, m: int) -> np.ndarray:
    return ((m - 1) / m * pressure) ** (1.0 / (m - 1))


def pressure_from_density(rho: GridProfile, m: int) -> GridProfile:
    if rho.kind != "density":
        raise ValueError("expected a density profile")
    if m < 2:
        raise ValueError("m must be >= 2")
    return GridProfile(np.minimum(_pressure(rho.values, m), m / (m - 1)), "pressure", m)


def density_from_pressure(pressure: GridProfile, m: int | None = None) -> GridProfile:
    if pressure.kind != "pressure":
        raise ValueError("expected a pressure profile")
    m = pressure.m if m is None else m
    return GridProfile(np.clip(_density(pressure.values, m), 0.0, 1.0), "density")


def lipschitz_constant(values: np.ndarray, du: float) -> float:
    """Largest periodic forward-difference slope."""
    v = np.asarray(values, dtype=np.float64)
    return float(np.max(np.abs(np.roll(v, -1) - v)) / du)


# -- mollifier -------------------------------------------------------------------


def _bump(y):
    y = np.asarray(y, dtype=np.float64)
    out = np.zeros_like(y)
    inside = np.abs(y) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - y[inside] ** 2))
    return out


_BUMP_MASS = integrate.quad(lambda y: math.exp(-1.0 / (1.0 - y * y)), -1.0, 1.0, epsabs=1e-13)[0]
BUMP_SUP = math.exp(-1.0) / _BUMP_MASS


@dataclass(frozen=True, eq=False)
class Mollifier:
    """Samples of h_N(y) = h(y/eps)/eps at y = k/M, |k| <= K.

    ``C_h`` is the sup of the unit-mass unscaled bump h.
    """

    eps: float
    M: int
    offsets: np.ndarray
    weights: np.ndarray
    C_h: float = BUMP_SUP

    @property
    def du(self) -> float:
        return 1.0 / self.M

    def integral(self) -> float:
        return float(self.weights.sum() * self.du)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Periodic convolution (h_N * f)(u_j) = sum_k h_N(k du) f(u_{j-k}) du."""
        return convolve1d(np.asarray(values, dtype=np.float64), self.weights * self.du, mode="wrap")


def build_mollifier(eps: float, M: int) -> Mollifier:
    if not 0.0 < eps < 0.5:
        raise ValueError(f"eps must lie in (0, 1/2), got {eps}")
    if eps <= 2.0 / M:
        raise ValueError(f"eps = {eps} <= 2/M = {2.0 / M}: mollifier under-resolved")
    K = int(math.ceil(eps * M))
    k = np.arange(-K, K + 1)
    # evaluate on |k| so the samples are exactly even
    w = _bump(np.abs(k) / (eps * M)) / eps
    w = w / (w.sum() / M)
    return Mollifier(eps=float(eps), M=int(M), offsets=k, weights=w)


def pressure_bounds(eps: float, m: int) -> tuple[float, float]:
    c = m / (m - 1)
    return c * eps ** (m - 1), c * (1.0 - eps) ** (m - 1)


def regularize_values(rho: np.ndarray, eps: float, m: int) -> np.ndarray:
    """Clamp the pressure to its eps-band, mollify, map back to density."""
    rho = np.asarray(rho, dtype=np.float64)
    mol = build_mollifier(eps, rho.size)
    lo, hi = pressure_bounds(eps, m)
    smooth = mol.apply(np.clip(_pressure(rho, m), lo, hi))
    # the exact result is a convex combination of clamped values; clip removes rounding only
    return np.clip(_density(smooth, m), eps, 1.0 - eps)


def regularize_initial(rho_ini: GridProfile, eps: float, m: int) -> GridProfile:
    if rho_ini.kind != "density":
        raise ValueError("expected a density profile")
    return GridProfile(regularize_values(rho_ini.values, eps, m), "density")


def regularization_constant(m: int, c_lip: float) -> float:
    """C_ini = ((m-1)/m (m + C_Lip))^{1/(m-1)}."""
    return ((m - 1) / m * (m + c_lip)) ** (1.0 / (m - 1))


# -- solver ----------------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    m: int
    M: int
    T: float
    snapshot_times: tuple = ()
    cfl_safety: float = 0.5

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.M < 4:
            raise ValueError("M must be >= 4")
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError("cfl_safety must lie in (0, 1]")
        times = tuple(float(t) for t in (self.snapshot_times or (self.T,)))
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must be strictly increasing")
        if times[0] < 0 or times[-1] > self.T:
            raise ValueError("snapshot times must lie in [0, T]")
        object.__setattr__(self, "snapshot_times", times)


@dataclass
class PMESolution:
    times: list
    snapshots: list
    m: int
    steps: int = 0

    def matrix(self) -> np.ndarray:
        return np.stack([s.values for s in self.snapshots])

    def at(self, t: float) -> GridProfile:
        for s, p in zip(self.times, self.snapshots):
            if s == t:
                return p
        raise KeyError(f"no snapshot at t = {t}")


class SolverError(RuntimeError):
    pass


def solve_pme(rho0: GridProfile, config: SolverConfig) -> PMESolution:
    """Explicit scheme rho_j += dt/du^2 (v_{j+1} - 2 v_j + v_{j-1}), v = rho^m.

    dt = cfl * du^2 / (2 m max rho^{m-1}) is recomputed at every step and
    the last step before each snapshot time is shortened to land on it.
    """
    if rho0.kind != "density":
        raise ValueError("expected a density profile")
    if rho0.M != config.M:
        raise ValueError(f"profile has {rho0.M} cells, config.M = {config.M}")
    rho = np.array(rho0.values, dtype=np.float64)
    du = 1.0 / config.M
    t = 0.0
    steps = 0
    times, snaps = [], []
    for target in config.snapshot_times:
        if target > t:
            t, n, ok = kernels.pme_advance(rho, config.m, du, config.cfl_safety, t, target)
            steps += n
            if not ok:
                raise SolverError(f"density left [0, 1] before t = {target}; step-size bug")
        times.append(target)
        snaps.append(GridProfile(np.clip(rho, 0.0, 1.0), "density"))
    return PMESolution(times=times, snapshots=snaps, m=config.m, steps=steps)


# -- Barenblatt ------------------------------------------------------------------


def _barenblatt_coefficient(m: int) -> float:
    return (m - 1) / (2.0 * m * (m + 1))


def barenblatt_radius(t: float, m: int, C: float) -> float:
    return math.sqrt(C / _barenblatt_coefficient(m)) * t ** (1.0 / (m + 1))


def barenblatt_peak(t: float, m: int, C: float) -> float:
    return t ** (-1.0 / (m + 1)) * C ** (1.0 / (m - 1))


def barenblatt_mass(m: int, C: float) -> float:
    """Total mass, the same at every t > 0."""
    k = _barenblatt_coefficient(m)
    a = math.sqrt(C / k)
    val, _ = integrate.quad(lambda s: (C - k * s * s) ** (1.0 / (m - 1)), -a, a, epsabs=1e-14, epsrel=1e-13)
    return val


def barenblatt_parameters(m: int, peak: float, radius: float) -> tuple[float, float]:
    """(C, t) such that the Barenblatt profile at time t has the given peak and radius."""
    k = 1.0 / _barenblatt_coefficient(m)
    t = radius**2 / (k * peak ** (m - 1))
    C = peak ** (m - 1) * t ** ((m - 1) / (m + 1))
    return C, t


def barenblatt(t, u, m: int, C: float, center: float | None = None):
    """Self-similar solution t^{-1/(m+1)} ((C - k u^2 t^{-2/(m+1)})^+)^{1/(m-1)}.

    Without ``center`` u is the coordinate on the line.  With ``center``
    u is a torus point and the signed periodic distance to the centre is
    used; the support must then fit in the torus.
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    if m < 2 or C <= 0:
        raise ValueError("need m >= 2 and C > 0")
    u = np.asarray(u, dtype=np.float64)
    if center is not None:
        if barenblatt_radius(t, m, C) >= 0.5:
            raise ValueError("Barenblatt support wraps the unit torus")
        u = (u - center + 0.5) % 1.0 - 0.5
    k = _barenblatt_coefficient(m)
    inner = np.maximum(C - k * u * u * t ** (-2.0 / (m + 1)), 0.0)
    out = t ** (-1.0 / (m + 1)) * inner ** (1.0 / (m - 1))
    return float(out) if out.ndim == 0 else out


def barenblatt_profile(M: int, t: float, m: int, C: float, center: float = 0.5) -> GridProfile:
    u = (np.arange(M) + 0.5) / M
    return GridProfile(np.minimum(barenblatt(t, u, m, C, center=center), 1.0), "density")


# -- superlevel sets -------------------------------------------------------------


@dataclass
class InterfaceReport:
    """Runs of cells with rho > delta, as half-open index ranges [start, stop).

    A run crossing the seam has stop > M.  ``gamma_measure`` is the
    Lebesgue measure of {floor < rho < delta}.
    """

    delta: float
    intervals: list = field(default_factory=list)
    count: int = 0
    gamma_measure: float = 0.0
    t: float | None = None


def interface_components(rho: GridProfile, delta: float, floor: float = MASS_FLOOR,
                         t: float | None = None) -> InterfaceReport:
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    vals = rho.values
    M = vals.size
    above = vals > delta
    gamma = float(np.count_nonzero((vals > floor) & (vals < delta))) / M
    if above.all():
        return InterfaceReport(delta, [(0, M)], 1, gamma, t)
    if not above.any():
        return InterfaceReport(delta, [], 0, gamma, t)
    # rotate so the sequence starts just after a cell below the threshold
    start = int(np.flatnonzero(~above)[-1]) + 1
    rolled = np.roll(above, -start)
    edges = np.diff(np.concatenate([[0], rolled.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    intervals = [(int(a + start) % M, int(a + start) % M + int(b - a)) for a, b in zip(starts, stops)]
    intervals.sort()
    return InterfaceReport(delta, intervals, len(intervals), gamma, t)
