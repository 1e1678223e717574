"""Statistical validation that the three samplers draw from the same
endpoint-conditioned law, and that realized path statistics match the
analytical formulas they are derived from.

Each check compares 10k-scale empirical samples against either another
sampler (homogeneity) or a closed-form law, at chi-square significance
0.001 / three-standard-error bands: loose enough not to flicker on healthy
samplers, tight enough to catch a miswired kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .complexity import (
    acceptance_probability,
    expected_recursions_direct,
    expected_recursions_rejection,
    expected_recursions_uniformization,
)
from .core import EndpointProblem, RateMatrix, StationaryDistribution, decompose_auto
from .randomstream import RandomStream
from .samplers import (
    build_direct_kernel,
    build_uniformization_kernel,
    direct_first_transition,
    direct_sample,
    rejection_proposal,
    rejection_sample,
    sample_batch,
    series_cap,
    uniformization_sample,
)

DEFAULT_SIGNIFICANCE = 1e-3
DEFAULT_MIN_PACC = 0.01
SE_BAND = 3.0
MIN_EXPECTED_CELL = 5.0


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one statistical check."""

    name: str
    passed: bool
    statistic: float
    threshold: float
    detail: str

    def __str__(self):
        flag = "pass" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: stat={self.statistic:.4g} threshold={self.threshold:.4g} ({self.detail})"


def _pool_counts(observed: dict[int, int], min_expected: float, expected=None):
    """Merge jump-count bins so every expected (or pooled-observed) cell is
    healthy for a chi-square statistic."""
    keys = sorted(observed)
    bins = []
    cur = []
    cur_weight = 0.0
    for k in keys:
        cur.append(k)
        cur_weight += expected[k] if expected is not None else observed[k]
        if cur_weight >= min_expected:
            bins.append(tuple(cur))
            cur = []
            cur_weight = 0.0
    if cur:
        if bins:
            bins[-1] = bins[-1] + tuple(cur)
        else:
            bins.append(tuple(cur))
    return bins


def chi_square_homogeneity(sample_a, sample_b) -> tuple[float, float]:
    """Two-sample chi-square on integer-valued samples (jump counts).

    Returns (statistic, p_value); p_value is 1.0 when the pooled table
    degenerates to a single bin.
    """
    counts_a: dict[int, int] = {}
    counts_b: dict[int, int] = {}
    for v in sample_a:
        counts_a[v] = counts_a.get(v, 0) + 1
    for v in sample_b:
        counts_b[v] = counts_b.get(v, 0) + 1
    pooled = {k: counts_a.get(k, 0) + counts_b.get(k, 0) for k in set(counts_a) | set(counts_b)}
    bins = _pool_counts(pooled, 2 * MIN_EXPECTED_CELL)
    if len(bins) < 2:
        return 0.0, 1.0
    table = np.array(
        [
            [sum(counts_a.get(k, 0) for k in group) for group in bins],
            [sum(counts_b.get(k, 0) for k in group) for group in bins],
        ]
    )
    stat, p, _, _ = stats.chi2_contingency(table, correction=False)
    return float(stat), float(p)


def chi_square_gof(sample, probs: dict[int, float]) -> tuple[float, float]:
    """One-sample chi-square of integer draws against analytic masses.

    Mass not covered by ``probs`` is lumped into an overflow bin.
    """
    n = len(sample)
    counts: dict[int, int] = {}
    for v in sample:
        counts[v] = counts.get(v, 0) + 1
    expected = {k: n * p for k, p in probs.items()}
    support = sorted(set(expected) | set(counts))
    full_expected = {k: expected.get(k, 0.0) for k in support}
    bins = _pool_counts({k: counts.get(k, 0) for k in support}, MIN_EXPECTED_CELL, full_expected)
    if len(bins) < 2:
        return 0.0, 1.0
    obs = np.array([sum(counts.get(k, 0) for k in group) for group in bins], dtype=float)
    exp = np.array([sum(full_expected.get(k, 0.0) for k in group) for group in bins])
    # absorb the tail mass so totals match
    exp = exp * (obs.sum() / exp.sum())
    stat, p = stats.chisquare(obs, exp)
    return float(stat), float(p)


def mean_difference_check(name, values_a, values_b, detail="") -> CheckResult:
    """Two-sample mean agreement within three combined standard errors."""
    a = np.asarray(values_a, dtype=float)
    b = np.asarray(values_b, dtype=float)
    se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    diff = abs(float(a.mean() - b.mean()))
    band = SE_BAND * se if se > 0.0 else 1e-12
    return CheckResult(name, diff <= band, diff, band, detail or f"means {a.mean():.4g} vs {b.mean():.4g}")


def mean_target_check(name, values, target, detail="") -> CheckResult:
    """One-sample mean against an analytic target within three standard errors."""
    v = np.asarray(values, dtype=float)
    se = math.sqrt(v.var(ddof=1) / len(v))
    diff = abs(float(v.mean()) - target)
    band = SE_BAND * se if se > 0.0 else 1e-12
    return CheckResult(name, diff <= band, diff, band, detail or f"mean {v.mean():.4g} vs {target:.4g}")


def proportion_check(name, successes, n, target, detail="") -> CheckResult:
    """Binomial proportion against a target within three standard errors."""
    phat = successes / n
    se = math.sqrt(max(target * (1.0 - target), phat * (1 - phat)) / n)
    diff = abs(phat - target)
    band = SE_BAND * se if se > 0.0 else 1e-12
    return CheckResult(name, diff <= band, diff, band, detail or f"{phat:.4g} vs {target:.4g}")


def jump_count_masses(kernel, problem: EndpointProblem, tail: float = 1e-9) -> dict[int, float]:
    """Analytic virtual-inclusive jump-count masses for uniformization,
    accumulated until only ``tail`` mass remains."""
    a, b, T = problem.a, problem.b, problem.horizon
    pab = kernel.endpoint_probability(a, b, T)
    mu_t = kernel.mu * T
    cap = series_cap(kernel.mu, T)
    masses = {}
    pois = math.exp(-mu_t)
    cum = 0.0
    for m in range(cap + 1):
        if m == 0:
            rab = 1.0 if a == b else 0.0
        else:
            rab = float(kernel.powers(m)[m - 1, a, b])
        mass = pois * rab / pab
        if mass > 0.0:
            masses[m] = mass
        cum += mass
        if 1.0 - cum < tail:
            break
        pois *= mu_t / (m + 1)
    return masses


def _collect(sampler, problem, kernel, n_paths, rng, lane=None):
    reports = []
    for stream in rng.split(n_paths):
        if sampler == "rejection":
            reports.append(rejection_sample(problem, None, stream, lane=lane))
        elif sampler == "direct":
            reports.append(direct_sample(kernel, problem, stream, lane=lane))
        else:
            reports.append(uniformization_sample(kernel, problem, stream, lane=lane))
    return reports


def _dwell_in_start(path, a: int) -> float:
    return float(sum(d for s, d in zip(path.states, path.dwell_durations()) if s == a))


def validate_cell(
    problem: EndpointProblem,
    n_paths: int,
    rng: RandomStream,
    significance: float = DEFAULT_SIGNIFICANCE,
    direct_kernel=None,
    uniformization_kernel=None,
    decomposition=None,
    lane=None,
) -> list[CheckResult]:
    """All distributional checks for one (matrix, endpoint pair, horizon) cell.

    Prebuilt kernels may be supplied (reuse across cells, or deliberately
    corrupted ones in negative-control tests).
    """
    q = problem.q
    a, b, T = problem.a, problem.b, problem.horizon
    label = f"{q.states.labels[a]}->{q.states.labels[b]} T={T:g}"
    d = decomposition if decomposition is not None else decompose_auto(q)
    dk = direct_kernel if direct_kernel is not None else build_direct_kernel(q, d)
    uk = uniformization_kernel if uniformization_kernel is not None else build_uniformization_kernel(q, d)
    stream_rej, stream_dir, stream_uni, stream_prop = rng.split(4)
    rej = _collect("rejection", problem, None, n_paths, stream_rej, lane)
    dire = _collect("direct", problem, dk, n_paths, stream_dir, lane)
    uni = _collect("uniformization", problem, uk, n_paths, stream_uni, lane)
    results = []

    jumps = {name: [r.path.n_jumps for r in reps] for name, reps in
             (("rejection", rej), ("direct", dire), ("uniformization", uni))}
    for na, nb in (("rejection", "direct"), ("rejection", "uniformization"), ("direct", "uniformization")):
        stat, p = chi_square_homogeneity(jumps[na], jumps[nb])
        results.append(
            CheckResult(
                f"jump-count {na} vs {nb} [{label}]",
                p > significance,
                p,
                significance,
                f"chi2={stat:.3g}",
            )
        )

    dwell = {name: [_dwell_in_start(r.path, a) for r in reps] for name, reps in
             (("rejection", rej), ("direct", dire), ("uniformization", uni))}
    for na, nb in (("rejection", "direct"), ("rejection", "uniformization"), ("direct", "uniformization")):
        results.append(
            mean_difference_check(f"start-state dwell {na} vs {nb} [{label}]", dwell[na], dwell[nb])
        )

    # direct sampler against its own first-transition law
    ft = direct_first_transition(dk, a, b, T)
    if a == b:
        constant = sum(1 for r in dire if r.path.n_jumps == 0)
        results.append(
            proportion_check(
                f"constant-path probability [{label}]", constant, n_paths, ft.p_constant
            )
        )
    jumping = [r for r in dire if r.path.n_jumps > 0]
    if jumping:
        first_states = np.array([int(r.path.states[1]) for r in jumping])
        norm = float(ft.p_next.sum())
        for i in range(q.n):
            if ft.p_next[i] <= 0.0:
                continue
            target = float(ft.p_next[i]) / norm
            hits = int((first_states == i).sum())
            results.append(
                proportion_check(
                    f"first-jump state {q.states.labels[i]} [{label}]",
                    hits,
                    len(jumping),
                    target,
                )
            )

    masses = jump_count_masses(uk, problem)
    stat, p = chi_square_gof([r.recursion_steps for r in uni], masses)
    results.append(
        CheckResult(
            f"uniformization jump-count law [{label}]", p > significance, p, significance, f"chi2={stat:.3g}"
        )
    )

    p_acc = acceptance_probability(d, q, a, b, T)
    results.append(
        mean_target_check(
            f"rejection attempts vs 1/p_acc [{label}]",
            [r.attempts for r in rej],
            1.0 / p_acc,
        )
    )

    proposal_steps = [rejection_proposal(problem, s, lane=lane)[1] for s in stream_prop.split(n_paths)]
    results.append(
        mean_target_check(
            f"E[L] rejection proposals [{label}]",
            proposal_steps,
            expected_recursions_rejection(d, q, a, b, T),
        )
    )
    results.append(
        mean_target_check(
            f"E[L] direct [{label}]",
            [r.recursion_steps for r in dire],
            expected_recursions_direct(d, q, a, b, T),
        )
    )
    results.append(
        mean_target_check(
            f"E[L] uniformization [{label}]",
            [r.recursion_steps for r in uni],
            expected_recursions_uniformization(uk, d, a, b, T),
        )
    )
    return results


def endpoint_pairs_above_floor(
    q: RateMatrix, d, horizons, min_pacc: float = DEFAULT_MIN_PACC
):
    """All (a, b, T) with acceptance probability above the floor (rejection
    sampling must be usable for the cross-sampler comparison)."""
    for T in horizons:
        for a in range(q.n):
            for b in range(q.n):
                if acceptance_probability(d, q, a, b, T) > min_pacc:
                    yield a, b, T


def run_validation(
    q: RateMatrix,
    horizons,
    n_paths: int,
    rng: RandomStream,
    significance: float = DEFAULT_SIGNIFICANCE,
    min_pacc: float = DEFAULT_MIN_PACC,
    lane=None,
) -> list[CheckResult]:
    """Validate every qualifying endpoint pair of a matrix across horizons."""
    d = decompose_auto(q)
    dk = build_direct_kernel(q, d)
    uk = build_uniformization_kernel(q, d)
    results = []
    cells = list(endpoint_pairs_above_floor(q, d, horizons, min_pacc))
    streams = rng.split(len(cells))
    for (a, b, T), stream in zip(cells, streams):
        problem = EndpointProblem(q, a, b, T)
        results.extend(
            validate_cell(
                problem,
                n_paths,
                stream,
                significance,
                direct_kernel=dk,
                uniformization_kernel=uk,
                decomposition=d,
                lane=lane,
            )
        )
    return results
