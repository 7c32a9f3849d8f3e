"""Pure-Python fallback for the compiled kernels in ``_kernels.pyx``.

Same algorithms, same order of random draws: for a given bit generator
state both backends return identical trajectories.
"""

import math

import numpy as np

NAME = "python"

_TWO_POW_M53 = 1.0 / 9007199254740992.0


def _uniform(bit_generator):
    return (int(bit_generator.random_raw()) >> 11) * _TWO_POW_M53


def _bond_rate(eta, n, x, m):
    if eta[x] == eta[(x + 1) % n]:
        return 0
    total = 0
    for y in range(x - m + 1, x + 1):
        prod = 1
        for z in range(y, y + m + 1):
            if z == x or z == x + 1:
                continue
            if eta[z % n] == 0:
                prod = 0
                break
        total += prod
    return total


def bond_rates(eta, m):
    """Active rate of every bond (x, x+1), as an int64 array."""
    eta = np.asarray(eta, dtype=np.uint8)
    n = eta.shape[0]
    return np.array([_bond_rate(eta, n, x, m) for x in range(n)], dtype=np.int64)


def run_chain(eta, m, t_end, record_times, snapshots, bit_generator):
    """See ``_kernels.run_chain``."""
    n = eta.shape[0]
    n_rec = len(record_times)
    state = [int(v) for v in eta]
    members = [[0] * n for _ in range(m + 1)]
    count = [0] * (m + 1)
    slot = [0] * n
    rate = [0] * n
    total = 0
    for x in range(n):
        r = _bond_rate(state, n, x, m)
        rate[x] = r
        if r > 0:
            members[r][count[r]] = x
            slot[x] = count[r]
            count[r] += 1
            total += r

    n2 = float(n) * float(n)
    t = 0.0
    jumps = 0
    frozen = False
    rec = 0
    while True:
        if total == 0:
            frozen = True
            break
        u = _uniform(bit_generator)
        t_new = t + (-math.log(1.0 - u)) / (float(total) * n2)
        if t_new > t_end:
            break
        while rec < n_rec and record_times[rec] < t_new:
            snapshots[rec, :] = state
            rec += 1

        u = _uniform(bit_generator)
        pick = int(u * float(total))
        b = -1
        for k in range(1, m + 1):
            if pick < k * count[k]:
                b = members[k][pick // k]
                break
            pick -= k * count[k]
        if b < 0:
            for k in range(m, 0, -1):
                if count[k] > 0:
                    b = members[k][count[k] - 1]
                    break

        j = (b + 1) % n
        state[b], state[j] = state[j], state[b]
        jumps += 1
        t = t_new

        for x in range(b - m, b + m + 1):
            j = x % n
            r_new = _bond_rate(state, n, j, m)
            r_old = rate[j]
            if r_new == r_old:
                continue
            if r_old > 0:
                last = members[r_old][count[r_old] - 1]
                members[r_old][slot[j]] = last
                slot[last] = slot[j]
                count[r_old] -= 1
            if r_new > 0:
                members[r_new][count[r_new]] = j
                slot[j] = count[r_new]
                count[r_new] += 1
            rate[j] = r_new
            total += r_new - r_old

    while rec < n_rec:
        snapshots[rec, :] = state
        rec += 1
    eta[:] = state
    return jumps, frozen, t


def _ipow(x, p):
    if p == 0:
        return np.ones_like(x)
    v = x.copy()
    for _ in range(p - 1):
        v = v * x
    return v


def pme_advance(rho, m, du, cfl, t, t_target, max_steps=-1):
    """See ``_kernels.pme_advance``."""
    du2 = du * du
    steps = 0
    ok = True
    done = False
    while t < t_target and not done:
        if max_steps >= 0 and steps >= max_steps:
            break
        peak = float(np.max(_ipow(rho, m - 1)))
        if peak <= 0.0:
            t = t_target
            break
        dt = cfl * du2 / (2.0 * m * peak)
        if t + dt >= t_target:
            dt = t_target - t
            done = True
        r = dt / du2
        v = _ipow(rho, m)
        lap = (np.roll(v, -1) - v) - (v - np.roll(v, 1))
        rho[:] = rho + r * lap
        steps += 1
        t = t_target if done else t + dt
        if np.any(rho < -1e-12) or np.any(rho > 1.0 + 1e-12):
            ok = False
            break
    return t, steps, ok
