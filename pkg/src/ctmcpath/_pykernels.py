"""Pure-Python sampling kernels: the reference lane.

This module is the normative definition of the per-path hot loops. The
compiled lane in ``_ckernels.pyx`` mirrors every operation here — same draw
order, same floating-point expression shapes, same scan conventions — so
that, fed the same PCG64 stream, both lanes emit bitwise-identical paths.
Keep the two files in sync when touching either.

Both lanes take C-contiguous float64 arrays; this one converts them to plain
lists at entry (a Python float is exactly a C double) and loops in Python.
"""

from __future__ import annotations

import math

from .errors import NumericalBreakdown, RejectionBudgetExceeded, RootFindFailure

LANE = "pure"

DEGENERATE_RTOL = 1e-9
P_NEG_TOL = 1e-8
P_SUM_TOL = 1e-8
PAB_FLOOR = 1e-300


def _draw_offdiagonal(row, x, n, stream):
    """Embedded-chain state draw: index j != x proportional to row[j]."""
    total = 0.0
    for j in range(n):
        if j != x:
            total += row[j]
    target = stream.uniform() * total
    acc = 0.0
    last = -1
    for j in range(n):
        if j == x:
            continue
        w = row[j]
        if w > 0.0:
            last = j
        acc += w
        if target < acc:
            return j
    return last


def _forward_extend(q_rows, exit_rates, n, x, t, T, states, times, stream):
    """Forward-simulate from state ``x`` at time ``t`` until the horizon,
    appending jumps in place; returns (end state, jumps appended)."""
    steps = 0
    while True:
        tau = -math.log(stream.open_uniform()) / exit_rates[x]
        t = t + tau
        if t >= T:
            return x, steps
        c = _draw_offdiagonal(q_rows[x], x, n, stream)
        states.append(c)
        times.append(t)
        x = c
        steps += 1


def sample_forward(q, exit_rates, n, a, T, stream):
    """Unconditioned forward path from ``a`` over ``[0, T]``.

    Returns (states, entry_times, jump_count).
    """
    q_rows = q.tolist()
    exits = exit_rates.tolist()
    states = [a]
    times = [0.0]
    _, steps = _forward_extend(q_rows, exits, n, a, 0.0, T, states, times, stream)
    return states, times, steps


def rejection_proposal(q, exit_rates, n, a, b, T, stream):
    """One modified-rejection proposal: forced first jump when a != b, then
    forward simulation. Returns (states, entry_times, jump_count)."""
    q_rows = q.tolist()
    exits = exit_rates.tolist()
    states, times, steps = _proposal(q_rows, exits, n, a, b, T, stream)
    return states, times, steps


def _proposal(q_rows, exits, n, a, b, T, stream):
    states = [a]
    times = [0.0]
    if a == b:
        _, steps = _forward_extend(q_rows, exits, n, a, 0.0, T, states, times, stream)
        return states, times, steps
    u = stream.open_uniform()
    tau = -math.log1p(u * math.expm1(-T * exits[a])) / exits[a]
    c = _draw_offdiagonal(q_rows[a], a, n, stream)
    states.append(c)
    times.append(tau)
    _, steps = _forward_extend(q_rows, exits, n, c, tau, T, states, times, stream)
    return states, times, steps + 1


def sample_rejection(q, exit_rates, n, a, b, T, max_attempts, stream):
    """Propose until a path ends in ``b``.

    Returns (states, entry_times, attempts, total_steps) where total_steps
    counts jump draws across all attempts (the realized recursion cost).
    """
    q_rows = q.tolist()
    exits = exit_rates.tolist()
    attempts = 0
    total_steps = 0
    while attempts < max_attempts:
        attempts += 1
        states, times, steps = _proposal(q_rows, exits, n, a, b, T, stream)
        total_steps += steps
        if states[-1] == b:
            return states, times, attempts, total_steps
    raise RejectionBudgetExceeded(
        f"no acceptance in {max_attempts} attempts (endpoint pair too unlikely)",
        attempts=max_attempts,
    )


def _invert_waiting_cdf(g, d, degenerate, nj, denom, u, t_hi, tol, max_iter):
    """Solve F(t) = u for the waiting-time CDF
    ``F(t) = sum_j g[j] * I_j(t) / denom`` with
    ``I_j(t) = t`` (degenerate) or ``(1 - exp(-t d_j)) / d_j``.

    Alternates secant and bisection steps on the bracket; the returned time
    is strictly inside (0, t_hi).
    """
    lo = 0.0
    f_lo = -u
    hi = t_hi
    f_hi = 1.0 - u
    for it in range(max_iter):
        if hi - lo <= tol:
            break
        if it % 2 == 0:
            span = f_hi - f_lo
            if span > 0.0:
                t = lo - f_lo * (hi - lo) / span
            else:
                t = 0.5 * (lo + hi)
            if not lo < t < hi:
                t = 0.5 * (lo + hi)
        else:
            t = 0.5 * (lo + hi)
        acc = 0.0
        for j in range(nj):
            if degenerate[j]:
                acc += g[j] * t
            else:
                acc += g[j] * (1.0 - math.exp(-t * d[j])) / d[j]
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


def sample_direct(u_mat, uinv_col_b, lam_arr, q, exit_rates, n, a, b, T, tol, max_iter, stream):
    """Endpoint-conditioned path by recursive first-transition sampling.

    ``u_mat`` is the eigenvector matrix, ``uinv_col_b`` the b-column of its
    inverse, ``lam_arr`` the eigenvalues. Returns (states, entry_times,
    recursion_steps) or None when the endpoint is unreachable;
    recursion_steps counts state-change draws.
    """
    u_rows = u_mat.tolist()
    uinv_b = uinv_col_b.tolist()
    lam = lam_arr.tolist()
    q_rows = q.tolist()
    exits = exit_rates.tolist()
    states = [a]
    times = [0.0]
    x = a
    t = 0.0
    steps = 0
    first = True
    e = [0.0] * n
    d = [0.0] * n
    degenerate = [False] * n
    g = [0.0] * n
    p = [0.0] * n
    while True:
        trem = T - t
        for j in range(n):
            e[j] = math.exp(trem * lam[j])
        pxb = 0.0
        for j in range(n):
            pxb += u_rows[x][j] * uinv_b[j] * e[j]
        if first and not pxb > PAB_FLOOR:
            return None
        if pxb <= 0.0:
            raise NumericalBreakdown(f"conditional denominator P[{x},{b}]({trem!r}) <= 0")
        first = False
        qx = exits[x]
        if x == b:
            p_const = math.exp(-qx * trem) / pxb
            if stream.uniform() < p_const:
                break
        for j in range(n):
            dj = lam[j] + qx
            d[j] = dj
            degenerate[j] = math.fabs(dj) < DEGENERATE_RTOL * qx
        p_sum = 0.0
        for i in range(n):
            if i == x:
                p[i] = 0.0
                continue
            acc = 0.0
            for j in range(n):
                if degenerate[j]:
                    acc += u_rows[i][j] * uinv_b[j] * e[j] * trem
                else:
                    acc += u_rows[i][j] * uinv_b[j] * e[j] * (1.0 - math.exp(-trem * d[j])) / d[j]
            pi_val = q_rows[x][i] * acc / pxb
            if pi_val < -P_NEG_TOL:
                raise NumericalBreakdown(f"first-transition mass p[{i}] = {pi_val!r}")
            if pi_val < 0.0:
                pi_val = 0.0
            p[i] = pi_val
            p_sum += pi_val
        expected = 1.0 - math.exp(-qx * trem) / pxb if x == b else 1.0
        if math.fabs(p_sum - expected) > P_SUM_TOL:
            raise NumericalBreakdown(
                f"first-transition masses sum to {p_sum!r}, expected {expected!r}"
            )
        target = stream.uniform() * p_sum
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
            g[j] = u_rows[nxt][j] * uinv_b[j] * e[j]
            if degenerate[j]:
                denom += g[j] * trem
            else:
                denom += g[j] * (1.0 - math.exp(-trem * d[j])) / d[j]
        u_t = stream.uniform()
        tau = _invert_waiting_cdf(g, d, degenerate, n, denom, u_t, trem, tol, max_iter)
        t = t + tau
        states.append(nxt)
        times.append(t)
        x = nxt
        steps += 1
    return states, times, steps


def count_scan(powers, mu_t, pab, a, b, u, limit):
    """Smallest n with cumulative conditioned jump-count mass above ``u``.

    ``powers[m - 1]`` must hold R^m. Returns -1 when the cumulative sum has
    not passed ``u`` within ``limit`` terms (caller grows the cache or
    declares truncation).
    """
    pois = math.exp(-mu_t)
    cum = 0.0
    for m in range(limit + 1):
        if m == 0:
            rab = 1.0 if a == b else 0.0
        else:
            rab = float(powers[m - 1, a, b])
        cum += pois * rab / pab
        if cum > u:
            return m
        pois *= mu_t / (m + 1)
    return -1


def fill_uniformization(r, powers, n_states, a, b, T, n, stream):
    """Realize a conditioned path given ``n`` virtual-inclusive jumps.

    Draws the jump epochs uniformly, fills the interior skeleton states from
    the cached powers of R, and drops virtual (self) transitions. Returns
    (states, entry_times).
    """
    r_rows = r.tolist()
    epochs = [T * stream.open_uniform() for _ in range(n)]
    epochs.sort()
    skeleton = []
    x = a
    for i in range(1, n):
        k = n - i
        row = r_rows[x]
        block = powers[k - 1]
        total = 0.0
        for y in range(n_states):
            total += row[y] * float(block[y, b])
        if total <= 0.0:
            raise NumericalBreakdown(f"conditioned skeleton weight sum <= 0 at step {i}")
        target = stream.uniform() * total
        acc = 0.0
        nxt = -1
        last = -1
        for y in range(n_states):
            w = row[y] * float(block[y, b])
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
    for t_i, s_i in zip(epochs, skeleton):
        if s_i != x:
            states.append(s_i)
            times.append(t_i)
            x = s_i
    return states, times
