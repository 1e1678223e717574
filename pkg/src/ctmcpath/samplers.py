"""Endpoint-conditioned path samplers: modified rejection, direct, and
uniformization, plus the unconditioned forward sampler.

All samplers draw from a :class:`~ctmcpath.randomstream.RandomStream` and
return :class:`SampleReport` values carrying the path, the number of
rejection attempts, and the realized recursion-step count that the cost
model charges for. The hot loops live in swappable kernel lanes (compiled /
pure Python) with identical draw order; see :mod:`ctmcpath.kernels`.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import (
    EndpointProblem,
    RateMatrix,
    SamplePath,
    SpectralDecomposition,
    decompose_auto,
    matrix_exponential_fallback,
    transition_probability,
)
from .errors import NumericalBreakdown, SeriesTruncation, UnreachableEndpoint
from .randomstream import RandomStream

PAB_FLOOR = 1e-300


@dataclass(frozen=True)
class RejectionConfig:
    """Guard rail for rejection sampling: abort after ``max_attempts``
    proposals instead of looping forever on a near-unreachable endpoint."""

    max_attempts: int = 1_000_000

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True, eq=False)
class SampleReport:
    """One sampled path plus its realized cost drivers."""

    path: SamplePath
    attempts: int = 1
    recursion_steps: int = 0

    def __post_init__(self):
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")
        if self.recursion_steps < self.path.n_jumps:
            raise ValueError("recursion steps cannot undercount path jumps")


def conditional_first_jump_time(exit_rate: float, T: float, u: float) -> float:
    """First jump time given at least one jump occurs in ``[0, T]``:
    the explicit inverse of the truncated-exponential CDF."""
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie strictly inside (0, 1)")
    if exit_rate <= 0.0 or T <= 0.0:
        raise ValueError("exit rate and horizon must be positive")
    return -math.log1p(u * math.expm1(-T * exit_rate)) / exit_rate


def forward_sample(q: RateMatrix, a, T: float, rng: RandomStream, lane=None) -> SamplePath:
    """Unconditioned forward simulation from state ``a`` over ``[0, T]``."""
    if T <= 0.0:
        raise ValueError("horizon must be positive")
    a = q.states.index(a)
    kern = kernels.get_lane(lane)
    states, times, _ = kern.sample_forward(q.q, q.exit_rates, q.n, a, T, rng)
    return SamplePath(T, states, times)


def rejection_proposal(problem: EndpointProblem, rng: RandomStream, lane=None):
    """One modified-rejection proposal (no acceptance test).

    Returns ``(path, steps)``; the proposal ends wherever the forward
    simulation lands. Exposed because the cost model's expected recursion
    count for rejection is a statement about proposals, not accepted paths.
    """
    kern = kernels.get_lane(lane)
    q = problem.q
    states, times, steps = kern.rejection_proposal(
        q.q, q.exit_rates, q.n, problem.a, problem.b, problem.horizon, rng
    )
    return SamplePath(problem.horizon, states, times), steps


def rejection_sample(
    problem: EndpointProblem,
    cfg: RejectionConfig | None = None,
    rng: RandomStream | None = None,
    lane=None,
) -> SampleReport:
    """Modified rejection sampling: propose forward paths (first jump forced
    when the endpoints differ) until one ends in ``b``.

    ``attempts`` counts proposals; ``recursion_steps`` counts jump draws
    across all proposals, which is what the cost model charges for.
    Raises :class:`RejectionBudgetExceeded` at the attempt budget.
    """
    if rng is None:
        raise ValueError("a RandomStream is required")
    cfg = cfg or RejectionConfig()
    kern = kernels.get_lane(lane)
    states, times, attempts, total_steps = kern.sample_rejection(
        problem.q.q,
        problem.q.exit_rates,
        problem.q.n,
        problem.a,
        problem.b,
        problem.horizon,
        cfg.max_attempts,
        rng,
    )
    path = SamplePath(problem.horizon, states, times)
    return SampleReport(path=path, attempts=attempts, recursion_steps=total_steps)


@dataclass(frozen=True, eq=False)
class DirectKernel:
    """Precomputed state for direct sampling: the spectral decomposition and
    the root-find tolerance for waiting-time inversion."""

    q: RateMatrix
    decomposition: SpectralDecomposition
    tol: float = 1e-10
    max_iter: int = 200
    _uinv_cols: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError("tolerance must be positive")

    def uinv_column(self, b: int) -> np.ndarray:
        col = self._uinv_cols.get(b)
        if col is None:
            col = np.ascontiguousarray(self.decomposition.u_inv[:, b])
            self._uinv_cols[b] = col
        return col

    def p_ab(self, a: int, b: int, t: float) -> float:
        d = self.decomposition
        return float(d.u[a] @ (np.exp(t * d.eigenvalues) * d.u_inv[:, b]))


def build_direct_kernel(
    q: RateMatrix, d: SpectralDecomposition | None = None, tol: float = 1e-10
) -> DirectKernel:
    """Build the direct-sampling kernel; decomposes ``q`` when no
    decomposition is supplied. No per-endpoint work happens here."""
    if d is None:
        d = decompose_auto(q)
    return DirectKernel(q=q, decomposition=d, tol=tol)


@dataclass(frozen=True, eq=False)
class FirstTransition:
    """Law of the first conditioned transition out of the current state:
    probability of no change (only when the endpoints coincide), next-state
    masses, and a waiting-time CDF per candidate state."""

    p_constant: float | None
    p_next: np.ndarray
    _cdf_data: tuple

    def cdf(self, i: int):
        """Waiting-time CDF for a first transition to state ``i``; monotone
        with CDF(0) = 0 and CDF(horizon) = 1."""
        g, d, degenerate, trem = self._cdf_data
        gi = g[i]
        d_safe = np.where(degenerate, 1.0, d)
        if not self.p_next[i] > 0.0:
            raise ValueError(f"state {i} is not a reachable first transition")
        denom = float(np.sum(np.where(degenerate, gi * trem, gi * -np.expm1(-trem * d_safe) / d_safe)))

        def evaluate(t: float) -> float:
            if not 0.0 <= t <= trem:
                raise ValueError("time outside [0, horizon]")
            vals = np.where(degenerate, gi * t, gi * -np.expm1(-t * d_safe) / d_safe)
            return float(np.sum(vals)) / denom

        return evaluate


def invert_waiting_time(
    ft: FirstTransition, i: int, u: float, tol: float = 1e-10, max_iter: int = 200
) -> float:
    """Invert the waiting-time CDF for first-transition state ``i`` at
    quantile ``u``: the time the samplers would realize for that draw."""
    from . import _pykernels

    if not 0.0 < u < 1.0:
        raise ValueError("u must lie strictly inside (0, 1)")
    g, dvec, degenerate, trem = ft._cdf_data
    gi = g[i].tolist()
    d_list = dvec.tolist()
    deg = degenerate.tolist()
    n = len(gi)
    denom = 0.0
    for j in range(n):
        if deg[j]:
            denom += gi[j] * trem
        else:
            denom += gi[j] * (1.0 - math.exp(-trem * d_list[j])) / d_list[j]
    return _pykernels._invert_waiting_cdf(gi, d_list, deg, n, denom, u, trem, tol, max_iter)


def direct_first_transition(kernel: DirectKernel, a, b, T: float) -> FirstTransition:
    """Quantities behind one step of direct sampling: constancy probability
    (if ``a == b``), next-state masses, and waiting-time CDF evaluators."""
    q = kernel.q
    a = q.states.index(a)
    b = q.states.index(b)
    if T <= 0.0:
        raise ValueError("horizon must be positive")
    d = kernel.decomposition
    n = q.n
    lam = d.eigenvalues
    uinv_b = d.u_inv[:, b]
    pab = float(d.u[a] @ (np.exp(T * lam) * uinv_b))
    if not pab > PAB_FLOOR:
        raise UnreachableEndpoint(f"P[{a},{b}]({T}) is numerically zero")
    qx = float(q.exit_rates[a])
    dvec = lam + qx
    degenerate = np.abs(dvec) < 1e-9 * qx
    e_t = np.exp(T * lam)
    j_int = np.where(degenerate, T * e_t, (e_t - math.exp(-qx * T)) / np.where(degenerate, 1.0, dvec))
    weights = d.u * (uinv_b * j_int)[None, :]  # row i: U_ij Uinv_jb J_j
    p = q.q[a] * weights.sum(axis=1) / pab
    p[a] = 0.0
    if float(p.min()) < -1e-8:
        raise NumericalBreakdown(f"first-transition mass {p.min()!r} below tolerance")
    p = np.clip(p, 0.0, None)
    p_constant = None
    expected = 1.0
    if a == b:
        p_constant = math.exp(-qx * T) / pab
        expected = 1.0 - p_constant
    if abs(float(p.sum()) - expected) > 1e-8:
        raise NumericalBreakdown(
            f"first-transition masses sum to {p.sum()!r}, expected {expected!r}"
        )
    g = d.u * (uinv_b * e_t)[None, :]
    return FirstTransition(
        p_constant=p_constant, p_next=p, _cdf_data=(g, dvec, degenerate, float(T))
    )


def direct_sample(
    kernel: DirectKernel, problem: EndpointProblem, rng: RandomStream, lane=None
) -> SampleReport:
    """Direct sampling: recursively draw the conditioned first transition
    (state by its exact mass, waiting time by inverting its CDF) until the
    endpoints are bridged."""
    if kernel.q is not problem.q and kernel.q.q is not problem.q.q:
        if not np.array_equal(kernel.q.q, problem.q.q):
            raise ValueError("kernel was built for a different rate matrix")
    kern = kernels.get_lane(lane)
    d = kernel.decomposition
    result = kern.sample_direct(
        d.u,
        kernel.uinv_column(problem.b),
        d.eigenvalues,
        problem.q.q,
        problem.q.exit_rates,
        problem.q.n,
        problem.a,
        problem.b,
        problem.horizon,
        kernel.tol,
        kernel.max_iter,
        rng,
    )
    if result is None:
        raise UnreachableEndpoint(
            f"P[{problem.a},{problem.b}]({problem.horizon}) is numerically zero"
        )
    states, times, steps = result
    path = SamplePath(problem.horizon, states, times)
    return SampleReport(path=path, attempts=1, recursion_steps=steps)


class UniformizationKernel:
    """Auxiliary-chain state for uniformization: the rate bound ``mu``, the
    stochastic matrix ``R = I + Q/mu``, and a grow-on-demand cache of its
    powers shared by every path sampled from this kernel.

    The cache grows under a lock and each published block is immutable, so
    concurrent samplers always read fully computed powers.
    """

    def __init__(self, q: RateMatrix, transition=None):
        self.q = q
        self.mu = float(q.exit_rates.max())
        r = np.eye(q.n) + q.q / self.mu
        self.r = r
        self.r.flags.writeable = False
        self._transition = transition
        self._lock = threading.Lock()
        block = np.empty((1, q.n, q.n))
        block[0] = r
        block.flags.writeable = False
        self._block = block
        self._pmemo: dict[float, np.ndarray] = {}

    @property
    def cached_power_count(self) -> int:
        return self._block.shape[0]

    def powers(self, m: int) -> np.ndarray:
        """Read-only block with R^1 .. R^k for some k >= m (grown on demand)."""
        if m > self._block.shape[0]:
            with self._lock:
                current = self._block
                have = current.shape[0]
                if m > have:
                    want = max(m, 2 * have)
                    grown = np.empty((want, self.q.n, self.q.n))
                    grown[:have] = current
                    for i in range(have, want):
                        grown[i] = grown[i - 1] @ self.r
                    grown.flags.writeable = False
                    self._block = grown
        return self._block

    def transition_matrix(self, t: float) -> np.ndarray:
        """``P(t)`` from the configured source (spectral decomposition,
        callable, or the scaling-and-squaring fallback), memoized per t."""
        t = float(t)
        p = self._pmemo.get(t)
        if p is None:
            if isinstance(self._transition, SpectralDecomposition):
                p = transition_probability(self._transition, t)
            elif callable(self._transition):
                p = np.asarray(self._transition(t), dtype=float)
            else:
                p = matrix_exponential_fallback(self.q, t)
            p.flags.writeable = False
            self._pmemo[t] = p
        return p

    def endpoint_probability(self, a: int, b: int, t: float) -> float:
        pab = float(self.transition_matrix(t)[a, b])
        if not pab > PAB_FLOOR:
            raise UnreachableEndpoint(f"P[{a},{b}]({t}) is numerically zero")
        return pab


def build_uniformization_kernel(q: RateMatrix, transition=None) -> UniformizationKernel:
    """Construct the uniformization kernel; ``transition`` may be a
    SpectralDecomposition, a callable ``t -> P(t)``, or None to use the
    matrix-exponential fallback."""
    return UniformizationKernel(q, transition)


def series_cap(mu: float, T: float) -> int:
    """Jump-count series guard: ten Poisson standard deviations past the
    mean, plus slack for small means."""
    mu_t = mu * T
    return int(math.ceil(mu_t + 10.0 * math.sqrt(mu_t) + 100.0))


def conditional_jump_count(
    kernel: UniformizationKernel, problem: EndpointProblem, u: float, lane=None
) -> int:
    """Number of auxiliary-chain jumps (virtual included) for the conditioned
    path: the first n whose cumulative mass exceeds ``u``. Extends the
    power cache as a side effect."""
    kern = kernels.get_lane(lane)
    a, b, T = problem.a, problem.b, problem.horizon
    pab = kernel.endpoint_probability(a, b, T)
    mu_t = kernel.mu * T
    cap = series_cap(kernel.mu, T)
    block = kernel.powers(min(16, cap))
    while True:
        limit = min(block.shape[0], cap)
        n = kern.count_scan(block, mu_t, pab, a, b, u, limit)
        if n >= 0:
            return n
        if limit >= cap:
            raise SeriesTruncation(
                f"jump-count series below target mass after {cap} terms "
                f"(P[{a},{b}]({T}) inconsistent with the series)"
            )
        block = kernel.powers(min(2 * limit, cap))


def uniformization_sample(
    kernel: UniformizationKernel, problem: EndpointProblem, rng: RandomStream, lane=None
) -> SampleReport:
    """Uniformization: draw the virtual-inclusive jump count, place the jump
    epochs uniformly, fill the skeleton from cached powers of R, and drop
    virtual transitions. ``recursion_steps`` keeps the virtual jumps the
    cost model pays for."""
    kern = kernels.get_lane(lane)
    a, b, T = problem.a, problem.b, problem.horizon
    u = rng.uniform()
    n = conditional_jump_count(kernel, problem, u, lane=lane)
    if n == 0 or (n == 1 and a == b):
        path = SamplePath(T, [a], [0.0])
        return SampleReport(path=path, attempts=1, recursion_steps=n)
    block = kernel.powers(max(n - 1, 1))
    states, times = kern.fill_uniformization(
        kernel.r, block, problem.q.n, a, b, T, n, rng
    )
    path = SamplePath(T, states, times)
    return SampleReport(path=path, attempts=1, recursion_steps=n)


SAMPLER_NAMES = ("rejection", "direct", "uniformization")


@dataclass(frozen=True, eq=False)
class BatchResult:
    """Outcome of a batch: reports for the paths that succeeded and the
    errors (with path indices) for those that failed."""

    reports: list
    failures: list

    @property
    def paths(self) -> list[SamplePath]:
        return [r.path for _, r in self.reports]


def sample_batch(
    sampler: str,
    problem: EndpointProblem,
    k: int,
    rng: RandomStream,
    cfg: RejectionConfig | None = None,
    kernel=None,
    lane=None,
) -> BatchResult:
    """Sample ``k`` conditioned paths with one shared kernel.

    Any expensive initialization (spectral decomposition, R-power cache) is
    done once. Each path consumes its own pre-split substream, so results do
    not depend on evaluation order; the batch fails only if every path fails.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if sampler not in SAMPLER_NAMES:
        raise ValueError(f"unknown sampler {sampler!r}")
    streams = rng.split(k)
    if sampler == "direct" and kernel is None:
        kernel = build_direct_kernel(problem.q)
    elif sampler == "uniformization" and kernel is None:
        kernel = build_uniformization_kernel(problem.q)
    reports = []
    failures = []
    for i, stream in enumerate(streams):
        try:
            if sampler == "rejection":
                report = rejection_sample(problem, cfg, stream, lane=lane)
            elif sampler == "direct":
                report = direct_sample(kernel, problem, stream, lane=lane)
            else:
                report = uniformization_sample(kernel, problem, stream, lane=lane)
        except Exception as exc:  # noqa: BLE001 - collected per path by contract
            failures.append((i, exc))
        else:
            reports.append((i, report))
    if not reports and failures:
        raise failures[0][1]
    return BatchResult(reports=reports, failures=failures)
