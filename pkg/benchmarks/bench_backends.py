"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_backends.py --n 256 --t 0.002 --grid 512
"""

import argparse
import time

import numpy as np

from kcm_hydro import _kernels_py

try:
    from kcm_hydro import _kernels
except ImportError:
    _kernels = None


def time_chain(kernels, n, m, t_end, seed, repeats):
    rng = np.random.default_rng(seed)
    eta0 = (rng.random(n) < 0.5).astype(np.uint8)
    best, jumps = float("inf"), 0
    for _ in range(repeats):
        eta = eta0.copy()
        snaps = np.zeros((1, n), dtype=np.uint8)
        start = time.perf_counter()
        jumps, _, _ = kernels.run_chain(eta, m, t_end, np.array([t_end]), snaps, np.random.PCG64(seed))
        best = min(best, time.perf_counter() - start)
    return best, jumps, eta


def time_pme(kernels, M, m, T, repeats):
    u = (np.arange(M) + 0.5) / M
    rho0 = 0.3 + 0.2 * np.sin(2 * np.pi * u)
    best, steps = float("inf"), 0
    for _ in range(repeats):
        rho = rho0.copy()
        start = time.perf_counter()
        _, steps, _ = kernels.pme_advance(rho, m, 1.0 / M, 0.5, 0.0, T)
        best = min(best, time.perf_counter() - start)
    return best, steps, rho


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=256, help="lattice sites")
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--t", type=float, default=0.002, help="macroscopic time of the chain run")
    ap.add_argument("--grid", type=int, default=512, help="PDE cells")
    ap.add_argument("--pde-t", type=float, default=0.002, help="PDE horizon")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    backends = [("python", _kernels_py)] + ([("cython", _kernels)] if _kernels is not None else [])
    chain, pde = {}, {}
    for name, k in backends:
        chain[name] = time_chain(k, args.n, args.m, args.t, args.seed, args.repeats)
        pde[name] = time_pme(k, args.grid, args.m, args.pde_t, args.repeats)

    print(f"{'kernel':<10}{'backend':<9}{'seconds':>10}{'work':>12}{'per unit (ns)':>15}")
    for label, table, unit in (("chain", chain, "events"), ("pme", pde, "cell-steps")):
        for name, (sec, work, _) in table.items():
            amount = work if label == "chain" else work * args.grid
            print(f"{label:<10}{name:<9}{sec:>10.4f}{amount:>12d}{1e9 * sec / max(amount, 1):>15.1f}")
    if _kernels is None:
        print("compiled extension not built; only the fallback was timed")
        return
    same_chain = np.array_equal(chain["python"][2], chain["cython"][2])
    same_pde = np.array_equal(pde["python"][2], pde["cython"][2])
    print(f"speedup chain {chain['python'][0] / chain['cython'][0]:.1f}x, "
          f"pme {pde['python'][0] / pde['cython'][0]:.1f}x")
    print(f"identical output: chain {same_chain}, pme {same_pde}")


if __name__ == "__main__":
    main()
