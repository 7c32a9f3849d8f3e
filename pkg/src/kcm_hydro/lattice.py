"""Configurations on the discrete torus and the kinetically constrained
exclusion dynamics run in the diffusive time scale.

A configuration is a 0/1 occupancy vector indexed by the sites of
Z/NZ.  The exchange across bond (x, x+1) happens at rate
``r_{x,x+1}(eta) * [eta(x) != eta(x+1)]`` where

    r_{x,x+1}(eta) = sum_{y=x-m+1}^{x} prod_{z=y, z not in {x,x+1}}^{y+m} eta(z).

For m = 2 this is eta(x-1) + eta(x+2).
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels

MAX_GENERATOR_SITES = 12


@dataclass(frozen=True, eq=False)
class Configuration:
    """Occupancy vector on the torus of ``N`` sites."""

    occupancy: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupancy)
        if occ.ndim != 1 or occ.size == 0:
            raise ValueError("occupancy must be a non-empty 1-d vector")
        if not np.all((occ == 0) | (occ == 1)):
            raise ValueError("occupancy entries must be 0 or 1")
        occ = occ.astype(np.uint8)
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)

    @property
    def N(self) -> int:
        return int(self.occupancy.size)

    @property
    def particles(self) -> int:
        return int(self.occupancy.sum())

    @classmethod
    def from_string(cls, text: str) -> "Configuration":
        bits = text.strip()
        if not bits or set(bits) - {"0", "1"}:
            raise ValueError(f"not a 0/1 configuration string: {text!r}")
        return cls(np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0"))

    def to_string(self) -> str:
        return "".join("1" if v else "0" for v in self.occupancy) + "\n"

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return np.array_equal(self.occupancy, other.occupancy)

    def __hash__(self):
        return hash(self.occupancy.tobytes())

    def __repr__(self):
        return f"Configuration({self.to_string().strip()!r})"


def _occupancy(config) -> np.ndarray:
    if isinstance(config, Configuration):
        return config.occupancy
    return Configuration(config).occupancy


def _bits(config) -> np.ndarray:
    # a single configuration or a batch of rows, as int64
    if isinstance(config, Configuration):
        return config.occupancy.astype(np.int64)
    arr = np.asarray(config)
    if arr.ndim == 1:
        return Configuration(arr).occupancy.astype(np.int64)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("occupancy entries must be 0 or 1")
    return arr.astype(np.int64)


@dataclass(frozen=True)
class KCMParams:
    N: int
    m: int = 2
    alpha: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.N < 2 * self.m + 2:
            raise ValueError(f"N must be >= 2m+2 = {2 * self.m + 2}, got {self.N}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class TrajectoryRecord:
    macro_times: list
    snapshots: list
    jump_count: int
    seed: int
    frozen: bool = False
    backend: str = field(default=kernels.NAME)

    @property
    def final(self) -> Configuration:
        return self.snapshots[-1]


# -- rates -------------------------------------------------------------------


def jump_rate(config, x: int, m: int, reverse: bool = False) -> int:
    """Constraint factor r_{x,x+1}(eta), evaluated from its definition.

    With ``reverse=True`` the rate of the jump x+1 -> x is evaluated by
    applying the definition to the mirror image of the configuration
    (site z mapped to 2x+1-z), which sends bond (x+1, x) onto (x, x+1).
    """
    eta = _occupancy(config)
    n = eta.size
    if m < 2:
        raise ValueError("m must be >= 2")
    if reverse:
        eta = eta[(2 * x + 1 - np.arange(n)) % n]
    total = 0
    for y in range(x - m + 1, x + 1):
        prod = 1
        for z in range(y, y + m + 1):
            if z in (x, x + 1):
                continue
            prod *= int(eta[z % n])
        total += prod
    return total


def _constraint_rates(bits: np.ndarray, m: int) -> np.ndarray:
    # vectorised r_{x,x+1} for a batch of configurations, shape (..., N)
    n = bits.shape[-1]
    shifted = {z: np.roll(bits, -z, axis=-1) for z in range(-m + 1, m + 1)}
    total = np.zeros(bits.shape, dtype=np.int64)
    for y in range(-m + 1, 1):
        prod = np.ones(bits.shape, dtype=np.int64)
        for z in range(y, y + m + 1):
            if z in (0, 1):
                continue
            prod *= shifted[z]
        total += prod
    assert total.shape[-1] == n
    return total


def bond_rates(config, m: int) -> np.ndarray:
    """Active exchange rate r_{x,x+1}(eta) [eta(x) != eta(x+1)] of every bond."""
    eta = np.ascontiguousarray(_occupancy(config), dtype=np.uint8)
    return kernels.bond_rates(eta, m)


def total_rate(config, m: int) -> int:
    return int(bond_rates(config, m).sum())


def is_blocked(config, m: int) -> bool:
    eta = _occupancy(config).astype(np.int64)
    active = (eta - np.roll(eta, -1)) ** 2
    return not np.any(_constraint_rates(eta, m) * active)


# -- exact generator -----------------------------------------------------------


def all_configurations(n: int) -> np.ndarray:
    """Rows are the 2^n configurations; row s has eta(x) = bit x of s."""
    s = np.arange(2**n, dtype=np.int64)
    return ((s[:, None] >> np.arange(n)) & 1).astype(np.int64)


def configuration_index(config) -> int:
    eta = _occupancy(config).astype(np.int64)
    return int(np.sum(eta << np.arange(eta.size)))


def build_generator_matrix(params: KCMParams) -> np.ndarray:
    """Dense integer rate matrix of the (unaccelerated) generator.

    Entry (s, s') is the rate of the exchange that maps configuration s
    to s'; the diagonal makes every row sum to zero.  States are indexed
    as in :func:`all_configurations`.
    """
    n, m = params.N, params.m
    if n > MAX_GENERATOR_SITES:
        raise ValueError(f"generator matrix limited to N <= {MAX_GENERATOR_SITES}, got {n}")
    bits = all_configurations(n)
    rates = _constraint_rates(bits, m)
    nxt = np.roll(bits, -1, axis=1)
    size = 2**n
    Q = np.zeros((size, size), dtype=np.int64)
    states = np.arange(size)
    for x in range(n):
        # eta(x)(1-eta(x+1)) + eta(x+1)(1-eta(x)) is the exchange indicator
        move = bits[:, x] * (1 - nxt[:, x]) + nxt[:, x] * (1 - bits[:, x])
        target = states ^ ((1 << x) | (1 << ((x + 1) % n)))
        np.add.at(Q, (states, target), rates[:, x] * move)
    Q[states, states] = -Q.sum(axis=1)
    return Q


def product_measure_vector(n: int, alpha: float) -> np.ndarray:
    """Bernoulli(alpha) product weights of all configurations."""
    k = all_configurations(n).sum(axis=1)
    return alpha**k * (1.0 - alpha) ** (n - k)


# -- dynamics ------------------------------------------------------------------


def make_bit_generator(seed: int, replica: int = 0) -> np.random.PCG64:
    """One PCG64 stream per trajectory; replica r is seeded with seed XOR r."""
    return np.random.PCG64(int(seed) ^ int(replica))


def simulate(initial, params: KCMParams, t_end: float, record_at=None,
             bit_generator: np.random.BitGenerator | None = None) -> TrajectoryRecord:
    """Exact-in-law simulation of the chain generated by N^2 L_N.

    ``record_at`` lists macroscopic times in [0, t_end]; each snapshot is
    the configuration at the last event time not after the record time.
    When the total rate drops to zero the chain is absorbed and the
    record carries ``frozen=True``.
    """
    eta = np.array(_occupancy(initial), dtype=np.uint8)
    if eta.size != params.N:
        raise ValueError(f"configuration has {eta.size} sites, params.N = {params.N}")
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    times = np.asarray([t_end] if record_at is None else record_at, dtype=np.float64)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("record_at must be a non-empty list of times")
    if np.any(np.diff(times) <= 0):
        raise ValueError("record times must be strictly increasing")
    if times[0] < 0 or times[-1] > t_end:
        raise ValueError("record times must lie in [0, t_end]")
    if bit_generator is None:
        bit_generator = make_bit_generator(params.seed)

    snaps = np.zeros((times.size, params.N), dtype=np.uint8)
    jumps, frozen, _ = kernels.run_chain(eta, params.m, float(t_end), times, snaps, bit_generator)
    return TrajectoryRecord(
        macro_times=[float(t) for t in times],
        snapshots=[Configuration(row) for row in snaps],
        jump_count=int(jumps),
        seed=params.seed,
        frozen=bool(frozen),
    )


def _replica_chunk(args):
    initials, params, t_end, record_at, replicas = args
    out = []
    for initial, r in zip(initials, replicas):
        bg = make_bit_generator(params.seed, r)
        out.append(simulate(initial, params, t_end, record_at, bit_generator=bg))
    return out


def simulate_replicas(initials, params: KCMParams, t_end: float, record_at=None,
                      workers: int = 1) -> list:
    """Independent trajectories, replica r driven by stream ``seed ^ r``.

    Results come back in replica order whatever the number of workers.
    """
    initials = list(initials)
    idx = list(range(len(initials)))
    if workers is None or workers <= 0:
        workers = os.cpu_count() or 1
    if workers == 1 or len(initials) < 2:
        return _replica_chunk((initials, params, t_end, record_at, idx))
    chunks = np.array_split(np.arange(len(initials)), workers)
    jobs = [([initials[i] for i in c], params, t_end, record_at, [int(i) for i in c])
            for c in chunks if len(c)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_replica_chunk, jobs))
    return [rec for part in parts for rec in part]


# -- local functions -----------------------------------------------------------


def _shifts(eta: np.ndarray, offsets) -> dict:
    return {z: np.roll(eta, -z, axis=-1) for z in offsets}


def h_field(config, m: int) -> np.ndarray:
    """tau_x h(eta) for every site x (rows of a batch are handled independently)."""
    eta = _bits(config)
    s = _shifts(eta, range(-m + 1, m))
    out = np.zeros(eta.shape, dtype=np.int64)
    for y in range(-m + 1, 1):
        prod = np.ones_like(eta)
        for z in range(y, y + m):
            prod = prod * s[z]
        out += prod
    for y in range(-m + 1, 0):
        prod = np.ones_like(eta)
        for z in range(y, y + m + 1):
            if z != 0:
                prod = prod * s[z]
        out -= prod
    return out.astype(np.float64)


def g_field(config, m: int) -> np.ndarray:
    """tau_x g(eta) = r_{x,x+1}(eta) (eta(x) - eta(x+1))^2 / 2 for every x."""
    eta = _bits(config)
    diff = (eta - np.roll(eta, -1, axis=-1)) ** 2
    return 0.5 * _constraint_rates(eta, m) * diff


def occupation_field(config, m: int = 0) -> np.ndarray:
    return _bits(config).astype(np.float64)


def local_h(config, x: int, m: int) -> float:
    return float(h_field(config, m)[x % _occupancy(config).size])


def local_g(config, x: int, m: int) -> float:
    return float(g_field(config, m)[x % _occupancy(config).size])


@dataclass(frozen=True)
class LocalFunction:
    """A translation-covariant local function psi with its site field.

    ``radius`` bounds the support: tau_x psi depends on sites within
    distance ``radius`` of x.  Evaluated on a window of width
    2*radius + 1 centred at the window's middle site.
    """

    name: str
    m: int
    radius: int
    field_fn: object

    def field(self, config) -> np.ndarray:
        return self.field_fn(config, self.m)

    @property
    def width(self) -> int:
        return 2 * self.radius + 1

    def on_windows(self, windows: np.ndarray) -> np.ndarray:
        """Value at the centre of each row of ``windows`` (shape (k, 2r+1)).

        Each row is read as a torus of 2r+1 sites; the support of the
        centre's function reaches the row ends without wrapping.
        """
        windows = np.atleast_2d(np.asarray(windows))
        if windows.shape[-1] != self.width:
            raise ValueError(f"{self.name} needs windows of width {self.width}")
        return self.field_fn(windows, self.m)[..., self.radius].astype(np.float64)


def occupation() -> LocalFunction:
    return LocalFunction("eta0", 0, 0, occupation_field)


def h_function(m: int) -> LocalFunction:
    return LocalFunction("h", m, m + 1, h_field)


def g_function(m: int) -> LocalFunction:
    return LocalFunction("g", m, m + 1, g_field)


# -- boxes ---------------------------------------------------------------------


def _circular_box_sum(values: np.ndarray, ell: int) -> np.ndarray:
    n = values.shape[-1]
    ext = np.concatenate([values[..., n - ell:], values, values[..., :ell]], axis=-1)
    csum = np.concatenate([np.zeros(values.shape[:-1] + (1,)), np.cumsum(ext, axis=-1)], axis=-1)
    return csum[..., 2 * ell + 1:] - csum[..., : n]


def block_average_field(config, ell: int) -> np.ndarray:
    """eta^(ell)(x) for every x."""
    eta = _occupancy(config).astype(np.float64)
    if 2 * ell + 1 > eta.size:
        raise ValueError(f"box of radius {ell} does not fit in N = {eta.size}")
    return _circular_box_sum(eta, ell) / (2 * ell + 1)


def block_average(config, x: int, ell: int) -> float:
    eta = _occupancy(config)
    n = eta.size
    if ell < 0 or 2 * ell + 1 > n:
        raise ValueError(f"box of radius {ell} does not fit in N = {n}")
    return float(sum(int(eta[(x + y) % n]) for y in range(-ell, ell + 1)) / (2 * ell + 1))


def box_average_of(values: np.ndarray, ell: int) -> np.ndarray:
    """(2 ell + 1)^{-1} sum_{|y| <= ell} values[x + y] on the torus."""
    return _circular_box_sum(np.asarray(values, dtype=np.float64), ell) / (2 * ell + 1)


def has_mobile_cluster(config, x: int, ell: int) -> bool:
    """True iff two neighbouring particles sit in {x-ell, ..., x+ell}."""
    eta = _occupancy(config)
    n = eta.size
    if 2 * ell + 1 > n:
        raise ValueError(f"window of radius {ell} does not fit in N = {n}")
    return any(eta[y % n] and eta[(y + 1) % n] for y in range(x - ell, x + ell))
