"""Inhomogeneous Bernoulli product measures on the discrete torus.

Sampling, exact averages of local functions by window enumeration, and
the relative entropy between two product measures, which factorizes
into a sum of per-site Bernoulli divergences.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .lattice import Configuration, LocalFunction
from .pme import MASS_FLOOR, interface_components, GridProfile, lipschitz_constant, regularize_values

MAX_WINDOW = 24
INFINITE_ENTROPY = math.inf


@dataclass(frozen=True, eq=False)
class LatticeProfile:
    """Site marginals rho(x/N) of a product measure."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("profile must be a non-empty 1-d vector")
        if not np.all((vals >= 0.0) & (vals <= 1.0)):
            raise ValueError("profile entries must lie in [0, 1]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def N(self) -> int:
        return int(self.values.size)

    @classmethod
    def from_function(cls, fn, N: int) -> "LatticeProfile":
        """Sample a profile on [0, 1) at the lattice points x/N."""
        return cls(np.asarray(fn(np.arange(N) / N), dtype=np.float64))

    @classmethod
    def constant(cls, value: float, N: int) -> "LatticeProfile":
        return cls(np.full(N, float(value)))


@dataclass(frozen=True)
class RegularizationSchedule:
    """eps_N = scale * N^{-exponent}; default exponent 1/(7(m-1)).

    With the default N eps_N^{6m-6} = N^{1/7} grows without bound.
    """

    m: int
    exponent: float | None = None
    scale: float = 1.0
    kernel: str = "bump"

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.exponent is None:
            object.__setattr__(self, "exponent", 1.0 / (7 * (self.m - 1)))
        if self.exponent <= 0 or self.scale <= 0:
            raise ValueError("exponent and scale must be positive")
        if self.kernel != "bump":
            raise ValueError(f"unknown mollifier kernel {self.kernel!r}")

    def eps(self, N: int) -> float:
        e = self.scale * float(N) ** (-self.exponent)
        if not 0.0 < e < 0.5:
            raise ValueError(f"eps_N = {e} outside (0, 1/2) at N = {N}")
        return e

    def speed(self, N: int) -> float:
        """N eps_N^{6m-6}, which must diverge along the schedule."""
        return N * self.eps(N) ** (6 * self.m - 6)


# -- sampling --------------------------------------------------------------------


def sample_product(profile: LatticeProfile, seed: int | np.random.Generator) -> Configuration:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(seed))
    return Configuration((rng.random(profile.N) < profile.values).astype(np.uint8))


# -- local averages --------------------------------------------------------------


def _window_function(phi, width):
    if isinstance(phi, LocalFunction):
        return phi.on_windows, phi.width
    if width is None:
        raise ValueError("a plain callable needs an explicit window width")
    return phi, int(width)


def bernoulli_polynomial(phi, width: int | None = None) -> np.ndarray:
    """Coefficients S_k = sum of phi over windows with k ones, k = 0..w.

    The Bernoulli(alpha) average is sum_k S_k alpha^k (1-alpha)^(w-k).
    """
    fn, w = _window_function(phi, width)
    if w > MAX_WINDOW:
        raise ValueError(f"window width {w} exceeds enumeration limit {MAX_WINDOW}")
    coeffs = np.zeros(w + 1)
    chunk = 1 << 16
    powers = np.arange(w, dtype=np.int64)
    for lo in range(0, 1 << w, chunk):
        idx = np.arange(lo, min(lo + chunk, 1 << w), dtype=np.int64)
        windows = ((idx[:, None] >> powers) & 1).astype(np.int64)
        vals = np.asarray(fn(windows), dtype=np.float64)
        np.add.at(coeffs, windows.sum(axis=1), vals)
    return coeffs


def evaluate_bernoulli_polynomial(coeffs: np.ndarray, alpha):
    alpha = np.asarray(alpha, dtype=np.float64)
    w = len(coeffs) - 1
    k = np.arange(w + 1)
    terms = coeffs * alpha[..., None] ** k * (1.0 - alpha[..., None]) ** (w - k)
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def bernoulli_average(phi, alpha, width: int | None = None):
    """E_alpha[phi] by exact enumeration of all 2^w windows."""
    return evaluate_bernoulli_polynomial(bernoulli_polynomial(phi, width), alpha)


# -- relative entropy ------------------------------------------------------------


def bernoulli_divergences(p, q) -> np.ndarray:
    """Per-site Bernoulli relative entropies, +inf where absolute continuity fails."""
    p = np.asarray(p.values if isinstance(p, LatticeProfile) else p, dtype=np.float64)
    q = np.asarray(q.values if isinstance(q, LatticeProfile) else q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("profiles must have the same length")
    out = np.zeros_like(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        one = p > 0
        zero = p < 1
        out[one] += p[one] * (np.log(p[one]) - np.log(q[one]))
        out[zero] += (1 - p[zero]) * (np.log1p(-p[zero]) - np.log1p(-q[zero]))
    singular = (one & (q == 0)) | (zero & (q == 1))
    out[singular] = np.inf
    # each term is >= 0 in exact arithmetic
    return np.maximum(out, 0.0)


def relative_entropy_product(p, q) -> float:
    """H(nu_p | nu_q) = sum_x [p log(p/q) + (1-p) log((1-p)/(1-q))]."""
    d = bernoulli_divergences(p, q)
    if np.isinf(d).any():
        return INFINITE_ENTROPY
    return float(d.sum())


# -- initial entropy -------------------------------------------------------------


@dataclass(frozen=True)
class EntropyScanRow:
    N: int
    eps: float
    H: float
    ratio: float

    @property
    def per_site(self) -> float:
        return self.H / self.N


def check_initial_profile(values: np.ndarray, m: int, max_components: int | None = None) -> dict:
    """Grid proxies for the admissibility of initial data.

    Returns the measured pressure Lipschitz constant and the number of
    positivity components; raises if the profile is not a density or
    has more components than ``max_components`` (default M/8).
    """
    vals = np.asarray(values, dtype=np.float64)
    prof = GridProfile(vals, "density")
    c_lip = lipschitz_constant(m / (m - 1) * vals ** (m - 1), 1.0 / vals.size)
    count = interface_components(prof, MASS_FLOOR).count
    limit = vals.size // 8 if max_components is None else max_components
    if count > limit:
        raise ValueError(f"{count} positivity components on the grid; not a regular initial profile")
    return {"c_lip": c_lip, "components": count}


def initial_entropy(rho_ini, N: int, eps: float, m: int) -> float:
    """Exact H(nu^N_{rho_ini} | nu^N_{rho_ini regularized at eps})."""
    p = rho_ini(np.arange(N) / N) if callable(rho_ini) else np.asarray(rho_ini, dtype=np.float64)
    p = LatticeProfile(p).values
    q = regularize_values(p, eps, m)
    return relative_entropy_product(p, q)


def initial_entropy_scan(rho_ini, schedule: RegularizationSchedule, N_list) -> list:
    """Rows (N, eps_N, H_N(0), H_N(0) / (N eps_N^{1/(m-1)} |log eps_N|))."""
    m = schedule.m
    rows = []
    for N in N_list:
        p = LatticeProfile.from_function(rho_ini, int(N)).values
        check_initial_profile(p, m)
        eps = schedule.eps(int(N))
        H = initial_entropy(p, int(N), eps, m)
        scale = N * eps ** (1.0 / (m - 1)) * abs(math.log(eps))
        rows.append(EntropyScanRow(int(N), eps, H, H / scale))
    return rows


# -- profile files ---------------------------------------------------------------


def read_profile_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Columns (u, rho), header optional, u in [0, 1)."""
    us, rhos = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                us.append(float(row[0]))
                rhos.append(float(row[1]))
            except ValueError:
                if us:
                    raise ValueError(f"{path}: malformed row {row!r}") from None
    u = np.asarray(us)
    rho = np.asarray(rhos)
    if u.size < 2:
        raise ValueError(f"{path}: need at least two samples")
    if np.any(np.diff(u) <= 0) or u[0] < 0 or u[-1] >= 1:
        raise ValueError(f"{path}: u must be strictly increasing in [0, 1)")
    if rho.min() < 0 or rho.max() > 1:
        raise ValueError(f"{path}: rho must lie in [0, 1]")
    return u, rho


def interpolated_profile(u: np.ndarray, rho: np.ndarray):
    """Periodic piecewise-linear interpolant of samples on the torus."""
    u = np.asarray(u, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)

    def fn(x):
        return np.interp(np.asarray(x, dtype=np.float64) % 1.0, u, rho, period=1.0)

    return fn
