# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: the constrained-exclusion event engine and the
explicit porous-medium stepper.

``_kernels_py`` carries the same algorithms in plain Python/numpy and
consumes the random stream in the same order, so both backends produce
identical trajectories for a given bit generator state.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log
from libc.stdint cimport int64_t, uint64_t
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t

cnp.import_array()

NAME = "cython"

cdef double TWO_POW_M53 = 1.0 / 9007199254740992.0


cdef inline double _uniform(bitgen_t *rng) noexcept nogil:
    return <double>(rng.next_uint64(rng.state) >> 11) * TWO_POW_M53


cdef inline Py_ssize_t _wrap(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    i = i % n
    if i < 0:
        i += n
    return i


cdef inline int _bond_rate(const cnp.uint8_t *eta, Py_ssize_t n, Py_ssize_t x, int m) noexcept nogil:
    # r_{x,x+1} times the exchange indicator [eta(x) != eta(x+1)]
    cdef Py_ssize_t y, z
    cdef int total = 0, prod
    if eta[x] == eta[_wrap(x + 1, n)]:
        return 0
    for y in range(x - m + 1, x + 1):
        prod = 1
        for z in range(y, y + m + 1):
            if z == x or z == x + 1:
                continue
            if eta[_wrap(z, n)] == 0:
                prod = 0
                break
        total += prod
    return total


def bond_rates(const cnp.uint8_t[::1] eta, int m):
    """Active rate of every bond (x, x+1), as an int64 array."""
    cdef Py_ssize_t n = eta.shape[0], x
    out = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] o = out
    for x in range(n):
        o[x] = _bond_rate(&eta[0], n, x, m)
    return out


def run_chain(cnp.uint8_t[::1] eta, int m, double t_end,
              double[::1] record_times, cnp.uint8_t[:, ::1] snapshots,
              object bit_generator):
    """Advance ``eta`` in place under the diffusively accelerated generator.

    Returns ``(jump_count, frozen, last_event_time)``.  Row k of
    ``snapshots`` receives the configuration at ``record_times[k]``.
    """
    cdef Py_ssize_t n = eta.shape[0]
    cdef Py_ssize_t n_rec = record_times.shape[0]
    cdef object capsule = bit_generator.capsule
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")

    # bonds grouped by rate value 1..m for O(1) selection
    members_arr = np.zeros((m + 1, n), dtype=np.int64)
    cdef int64_t[:, ::1] members = members_arr
    cdef int64_t[::1] count = np.zeros(m + 1, dtype=np.int64)
    cdef int64_t[::1] slot = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] rate = np.zeros(n, dtype=np.int64)

    cdef const cnp.uint8_t *e = &eta[0]
    cdef Py_ssize_t x, j, b, k, last
    cdef int r_new, r_old
    cdef int64_t total = 0, jumps = 0, pick
    cdef double t = 0.0, t_new, n2 = <double> n * <double> n, u
    cdef int frozen = 0
    cdef cnp.uint8_t tmp
    cdef Py_ssize_t rec = 0

    for x in range(n):
        r_new = _bond_rate(e, n, x, m)
        rate[x] = r_new
        if r_new > 0:
            members[r_new, count[r_new]] = x
            slot[x] = count[r_new]
            count[r_new] += 1
            total += r_new

    with nogil:
        while True:
            if total == 0:
                frozen = 1
                break
            u = _uniform(rng)
            t_new = t + (-log(1.0 - u)) / (<double> total * n2)
            if t_new > t_end:
                break
            while rec < n_rec and record_times[rec] < t_new:
                for j in range(n):
                    snapshots[rec, j] = eta[j]
                rec += 1

            u = _uniform(rng)
            pick = <int64_t> (u * <double> total)
            b = -1
            for k in range(1, m + 1):
                if pick < k * count[k]:
                    b = members[k, pick // k]
                    break
                pick -= k * count[k]
            if b < 0:
                # u * total rounded up to total; take the last bond of the top class
                for k in range(m, 0, -1):
                    if count[k] > 0:
                        b = members[k, count[k] - 1]
                        break

            j = _wrap(b + 1, n)
            tmp = eta[b]
            eta[b] = eta[j]
            eta[j] = tmp
            jumps += 1
            t = t_new

            for x in range(b - m, b + m + 1):
                j = _wrap(x, n)
                r_new = _bond_rate(e, n, j, m)
                r_old = <int> rate[j]
                if r_new == r_old:
                    continue
                if r_old > 0:
                    last = members[r_old, count[r_old] - 1]
                    members[r_old, slot[j]] = last
                    slot[last] = slot[j]
                    count[r_old] -= 1
                if r_new > 0:
                    members[r_new, count[r_new]] = j
                    slot[j] = count[r_new]
                    count[r_new] += 1
                rate[j] = r_new
                total += r_new - r_old

        while rec < n_rec:
            for j in range(n):
                snapshots[rec, j] = eta[j]
            rec += 1

    return jumps, bool(frozen), t


cdef inline double _ipow(double x, int p) noexcept nogil:
    cdef double v = 1.0
    cdef int i
    if p == 0:
        return 1.0
    v = x
    for i in range(p - 1):
        v = v * x
    return v


def pme_advance(double[::1] rho, int m, double du, double cfl,
                double t, double t_target, int64_t max_steps=-1):
    """Explicit conservative steps of d_t rho = d_uu(rho^m) from ``t`` to
    ``t_target`` (the last step is shortened to land on it).

    ``rho`` is updated in place.  Returns ``(t, steps, ok)``; ``ok`` is
    False when a value leaves [-1e-12, 1 + 1e-12].
    """
    cdef Py_ssize_t n = rho.shape[0], j
    cdef double[::1] v = np.empty(n, dtype=np.float64)
    cdef double peak, p, dt, r, du2 = du * du
    cdef int64_t steps = 0
    cdef int ok = 1, done = 0

    with nogil:
        while t < t_target and not done:
            if max_steps >= 0 and steps >= max_steps:
                break
            peak = 0.0
            for j in range(n):
                p = _ipow(rho[j], m - 1)
                if p > peak:
                    peak = p
            if peak <= 0.0:
                t = t_target
                break
            dt = cfl * du2 / (2.0 * m * peak)
            if t + dt >= t_target:
                dt = t_target - t
                done = 1
            r = dt / du2
            for j in range(n):
                v[j] = _ipow(rho[j], m)
            rho[0] = rho[0] + r * ((v[1] - v[0]) - (v[0] - v[n - 1]))
            for j in range(1, n - 1):
                rho[j] = rho[j] + r * ((v[j + 1] - v[j]) - (v[j] - v[j - 1]))
            rho[n - 1] = rho[n - 1] + r * ((v[0] - v[n - 1]) - (v[n - 1] - v[n - 2]))
            steps += 1
            if done:
                t = t_target
            else:
                t = t + dt
            for j in range(n):
                if rho[j] < -1e-12 or rho[j] > 1.0 + 1e-12:
                    ok = 0
            if not ok:
                break

    return t, steps, bool(ok)
