# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled sampling kernels.

Operation-for-operation mirror of ``_pykernels.py`` (the normative lane):
same draw order, same floating-point expression shapes, same scan
conventions. Fed the same PCG64 stream, both lanes emit bitwise-identical
paths. Keep the two files in sync when touching either.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, expm1, fabs, log, log1p
from numpy.random cimport bitgen_t

import numpy as np

from .errors import NumericalBreakdown, RejectionBudgetExceeded, RootFindFailure

LANE = "compiled"

cdef double DEGENERATE_RTOL = 1e-9
cdef double P_NEG_TOL = 1e-8
cdef double P_SUM_TOL = 1e-8
cdef double PAB_FLOOR = 1e-300


cdef bitgen_t *_bitgen(object stream) except NULL:
    capsule = stream.bit_generator.capsule
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline double _uniform(bitgen_t *rng) noexcept nogil:
    return rng.next_double(rng.state)


cdef inline double _open_uniform(bitgen_t *rng) noexcept nogil:
    cdef double u = rng.next_double(rng.state)
    while u == 0.0:
        u = rng.next_double(rng.state)
    return u


cdef Py_ssize_t _draw_offdiagonal(
    const double[:, ::1] q, Py_ssize_t x, Py_ssize_t n, bitgen_t *rng
) noexcept nogil:
    cdef double total = 0.0
    cdef double target, acc, w
    cdef Py_ssize_t j, last = -1
    for j in range(n):
        if j != x:
            total += q[x, j]
    target = _uniform(rng) * total
    acc = 0.0
    for j in range(n):
        if j == x:
            continue
        w = q[x, j]
        if w > 0.0:
            last = j
        acc += w
        if target < acc:
            return j
    return last


cdef Py_ssize_t _forward_extend(
    const double[:, ::1] q,
    const double[::1] exits,
    Py_ssize_t n,
    Py_ssize_t x,
    double t,
    double T,
    list states,
    list times,
    bitgen_t *rng,
):
    cdef Py_ssize_t steps = 0
    cdef Py_ssize_t c
    cdef double tau
    while True:
        tau = -log(_open_uniform(rng)) / exits[x]
        t = t + tau
        if t >= T:
            return steps
        c = _draw_offdiagonal(q, x, n, rng)
        states.append(c)
        times.append(t)
        x = c
        steps += 1


def sample_forward(
    const double[:, ::1] q, const double[::1] exit_rates, Py_ssize_t n,
    Py_ssize_t a, double T, object stream
):
    """Unconditioned forward path from ``a`` over ``[0, T]``.

    Returns (states, entry_times, jump_count).
    """
    cdef bitgen_t *rng = _bitgen(stream)
    states = [a]
    times = [0.0]
    cdef Py_ssize_t steps = _forward_extend(q, exit_rates, n, a, 0.0, T, states, times, rng)
    return states, times, steps


cdef tuple _proposal(
    const double[:, ::1] q,
    const double[::1] exits,
    Py_ssize_t n,
    Py_ssize_t a,
    Py_ssize_t b,
    double T,
    bitgen_t *rng,
):
    cdef double u, tau
    cdef Py_ssize_t c, steps
    states = [a]
    times = [0.0]
    if a == b:
        steps = _forward_extend(q, exits, n, a, 0.0, T, states, times, rng)
        return states, times, steps
    u = _open_uniform(rng)
    tau = -log1p(u * expm1(-T * exits[a])) / exits[a]
    c = _draw_offdiagonal(q, a, n, rng)
    states.append(c)
    times.append(tau)
    steps = _forward_extend(q, exits, n, c, tau, T, states, times, rng)
    return states, times, steps + 1


def rejection_proposal(
    const double[:, ::1] q, const double[::1] exit_rates, Py_ssize_t n,
    Py_ssize_t a, Py_ssize_t b, double T, object stream
):
    """One modified-rejection proposal: forced first jump when a != b, then
    forward simulation. Returns (states, entry_times, jump_count)."""
    cdef bitgen_t *rng = _bitgen(stream)
    return _proposal(q, exit_rates, n, a, b, T, rng)


def sample_rejection(
    const double[:, ::1] q, const double[::1] exit_rates, Py_ssize_t n,
    Py_ssize_t a, Py_ssize_t b, double T, long long max_attempts, object stream
):
    """Propose until a path ends in ``b``.

    Returns (states, entry_times, attempts, total_steps) where total_steps
    counts jump draws across all attempts (the realized recursion cost).
    """
    cdef bitgen_t *rng = _bitgen(stream)
    cdef long long attempts = 0
    cdef long long total_steps = 0
    cdef Py_ssize_t steps
    while attempts < max_attempts:
        attempts += 1
        states, times, steps = _proposal(q, exit_rates, n, a, b, T, rng)
        total_steps += steps
        if <Py_ssize_t> states[len(states) - 1] == b:
            return states, times, attempts, total_steps
    raise RejectionBudgetExceeded(
        f"no acceptance in {max_attempts} attempts (endpoint pair too unlikely)",
        attempts=max_attempts,
    )


cdef double _invert_waiting_cdf(
    const double[::1] g,
    const double[::1] d,
    const unsigned char[::1] degenerate,
    Py_ssize_t nj,
    double denom,
    double u,
    double t_hi,
    double tol,
    int max_iter,
) except -1.0:
    cdef double lo = 0.0
    cdef double f_lo = -u
    cdef double hi = t_hi
    cdef double f_hi = 1.0 - u
    cdef double t, span, acc, f
    cdef Py_ssize_t j
    cdef int it
    for it in range(max_iter):
        if hi - lo <= tol:
            break
        if it % 2 == 0:
            span = f_hi - f_lo
            if span > 0.0:
                t = lo - f_lo * (hi - lo) / span
            else:
                t = 0.5 * (lo + hi)
            if not (lo < t < hi):
                t = 0.5 * (lo + hi)
        else:
            t = 0.5 * (lo + hi)
        acc = 0.0
        for j in range(nj):
            if degenerate[j]:
                acc += g[j] * t
            else:
                acc += g[j] * (1.0 - exp(-t * d[j])) / d[j]
        f = acc / denom - u
        if f != f:
            raise RootFindFailure("waiting-time CDF evaluated to NaN")
        if f < 0.0:
            lo = t
            f_lo = f
        elif f > 0.0:
            hi = t
            f_hi = f
        else:
            return t
    return 0.5 * (lo + hi)


def sample_direct(
    const double[:, ::1] u_mat,
    const double[::1] uinv_col_b,
    const double[::1] lam,
    const double[:, ::1] q,
    const double[::1] exit_rates,
    Py_ssize_t n,
    Py_ssize_t a,
    Py_ssize_t b,
    double T,
    double tol,
    int max_iter,
    object stream,
):
    """Endpoint-conditioned path by recursive first-transition sampling.

    Returns (states, entry_times, recursion_steps) or None when the endpoint
    is unreachable; recursion_steps counts state-change draws.
    """
    cdef bitgen_t *rng = _bitgen(stream)
    states = [a]
    times = [0.0]
    cdef Py_ssize_t x = a
    cdef double t = 0.0
    cdef Py_ssize_t steps = 0
    cdef bint first = True
    work = np.empty((4, n), dtype=np.float64)
    cdef double[::1] e = work[0]
    cdef double[::1] d = work[1]
    cdef double[::1] g = work[2]
    cdef double[::1] p = work[3]
    deg_arr = np.empty(n, dtype=np.uint8)
    cdef unsigned char[::1] degenerate = deg_arr
    cdef double trem, pxb, qx, p_const, dj, acc, pi_val, p_sum, expected
    cdef double target, w, denom, u_t, tau
    cdef Py_ssize_t i, j, nxt, last
    while True:
        trem = T - t
        for j in range(n):
            e[j] = exp(trem * lam[j])
        pxb = 0.0
        for j in range(n):
            pxb += u_mat[x, j] * uinv_col_b[j] * e[j]
        if first and not pxb > PAB_FLOOR:
            return None
        if pxb <= 0.0:
            raise NumericalBreakdown(f"conditional denominator P[{x},{b}]({trem!r}) <= 0")
        first = False
        qx = exit_rates[x]
        if x == b:
            p_const = exp(-qx * trem) / pxb
            if _uniform(rng) < p_const:
                break
        for j in range(n):
            dj = lam[j] + qx
            d[j] = dj
            degenerate[j] = fabs(dj) < DEGENERATE_RTOL * qx
        p_sum = 0.0
        for i in range(n):
            if i == x:
                p[i] = 0.0
                continue
            acc = 0.0
            for j in range(n):
                if degenerate[j]:
                    acc += u_mat[i, j] * uinv_col_b[j] * e[j] * trem
                else:
                    acc += u_mat[i, j] * uinv_col_b[j] * e[j] * (1.0 - exp(-trem * d[j])) / d[j]
            pi_val = q[x, i] * acc / pxb
            if pi_val < -P_NEG_TOL:
                raise NumericalBreakdown(f"first-transition mass p[{i}] = {pi_val!r}")
            if pi_val < 0.0:
                pi_val = 0.0
            p[i] = pi_val
            p_sum += pi_val
        expected = 1.0 - exp(-qx * trem) / pxb if x == b else 1.0
        if fabs(p_sum - expected) > P_SUM_TOL:
            raise NumericalBreakdown(
                f"first-transition masses sum to {p_sum!r}, expected {expected!r}"
            )
        target = _uniform(rng) * p_sum
        acc = 0.0
        nxt = -1
        last = -1
        for i in range(n):
            w = p[i]
            if w > 0.0:
                last = i
            acc += w
            if target < acc:
                nxt = i
                break
        if nxt < 0:
            nxt = last
        denom = 0.0
        for j in range(n):
            g[j] = u_mat[nxt, j] * uinv_col_b[j] * e[j]
            if degenerate[j]:
                denom += g[j] * trem
            else:
                denom += g[j] * (1.0 - exp(-trem * d[j])) / d[j]
        u_t = _uniform(rng)
        tau = _invert_waiting_cdf(g, d, degenerate, n, denom, u_t, trem, tol, max_iter)
        t = t + tau
        states.append(nxt)
        times.append(t)
        x = nxt
        steps += 1
    return states, times, steps


def count_scan(
    const double[:, :, ::1] powers, double mu_t, double pab,
    Py_ssize_t a, Py_ssize_t b, double u, Py_ssize_t limit
):
    """Smallest n with cumulative conditioned jump-count mass above ``u``.

    ``powers[m - 1]`` must hold R^m. Returns -1 when the cumulative sum has
    not passed ``u`` within ``limit`` terms.
    """
    cdef double pois = exp(-mu_t)
    cdef double cum = 0.0
    cdef double rab
    cdef Py_ssize_t m
    for m in range(limit + 1):
        if m == 0:
            rab = 1.0 if a == b else 0.0
        else:
            rab = powers[m - 1, a, b]
        cum += pois * rab / pab
        if cum > u:
            return m
        pois *= mu_t / (m + 1)
    return -1


def fill_uniformization(
    const double[:, ::1] r, const double[:, :, ::1] powers, Py_ssize_t n_states,
    Py_ssize_t a, Py_ssize_t b, double T, Py_ssize_t n, object stream
):
    """Realize a conditioned path given ``n`` virtual-inclusive jumps.

    Returns (states, entry_times) with virtual transitions removed.
    """
    cdef bitgen_t *rng = _bitgen(stream)
    epochs_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] epochs = epochs_arr
    cdef Py_ssize_t i, k, y, nxt, last
    cdef double total, target, acc, w
    for i in range(n):
        epochs[i] = T * _open_uniform(rng)
    epochs_arr.sort()
    skeleton = []
    cdef Py_ssize_t x = a
    for i in range(1, n):
        k = n - i
        total = 0.0
        for y in range(n_states):
            total += r[x, y] * powers[k - 1, y, b]
        if total <= 0.0:
            raise NumericalBreakdown(f"conditioned skeleton weight sum <= 0 at step {i}")
        target = _uniform(rng) * total
        acc = 0.0
        nxt = -1
        last = -1
        for y in range(n_states):
            w = r[x, y] * powers[k - 1, y, b]
            if w > 0.0:
                last = y
            acc += w
            if target < acc:
                nxt = y
                break
        if nxt < 0:
            nxt = last
        skeleton.append(nxt)
        x = nxt
    skeleton.append(b)
    states = [a]
    times = [0.0]
    x = a
    for i in range(n):
        if <Py_ssize_t> skeleton[i] != x:
            states.append(skeleton[i])
            times.append(epochs[i])
            x = skeleton[i]
    return states, times
