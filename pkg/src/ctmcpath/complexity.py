"""Analytical cost model for the three samplers.

Predicts, for a given generator, endpoint pair, and horizon: the rejection
acceptance probability, the expected recursion count of each sampler, the
uniformization inflation factor, per-sampler cost ``alpha + beta * E[L]``
(divided by the acceptance probability for rejection), the critical
thresholds separating the samplers' regimes, and the winner. Also fits the
cost coefficients (alpha, beta) from timed runs and scales them across
state-space sizes.

All expectation integrals are evaluated in closed form from the spectral
decomposition; eigenvalue coincidences switch to their limit expressions at
relative tolerance 1e-9.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    EndpointProblem,
    RateMatrix,
    SpectralDecomposition,
    StationaryDistribution,
    decompose_auto,
    stationary_distribution,
    transition_probability,
)
from .errors import InsufficientVariation, NumericalBreakdown, UnreachableEndpoint
from .randomstream import RandomStream
from .samplers import (
    RejectionConfig,
    build_direct_kernel,
    build_uniformization_kernel,
    direct_sample,
    rejection_sample,
    uniformization_sample,
)

DEGENERATE_RTOL = 1e-9
REJECTION_PACC_FLOOR = 1e-12
PAB_FLOOR = 1e-300

SAMPLERS = ("rejection", "direct", "uniformization")


@dataclass(frozen=True)
class CostCoefficients:
    """Per-sampler initialization cost alpha and per-recursion cost beta,
    in arbitrary but shared time units."""

    alpha_rejection: float
    beta_rejection: float
    alpha_direct: float
    beta_direct: float
    alpha_uniformization: float
    beta_uniformization: float

    def __post_init__(self):
        values = (
            self.alpha_rejection,
            self.beta_rejection,
            self.alpha_direct,
            self.beta_direct,
            self.alpha_uniformization,
            self.beta_uniformization,
        )
        if any(v < 0.0 for v in values):
            raise ValueError("cost coefficients must be nonnegative")
        if all(b <= 0.0 for b in values[1::2]):
            raise ValueError("at least one recursion cost must be positive")

    def alpha(self, sampler: str) -> float:
        return getattr(self, f"alpha_{sampler}")

    def beta(self, sampler: str) -> float:
        return getattr(self, f"beta_{sampler}")

    @classmethod
    def from_dict(cls, d: dict) -> "CostCoefficients":
        return cls(**{k: float(d[k]) for k in cls.__dataclass_fields__})

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class RecursionExpectation:
    """Expected recursion counts E[L] per sampler for one problem."""

    rejection: float
    direct: float
    uniformization: float


def acceptance_probability(
    d: SpectralDecomposition, q: RateMatrix, a, b, T: float
) -> float:
    """Probability a (modified) rejection proposal ends in ``b``: the
    endpoint transition probability, conditioned on at least one jump when
    the endpoints differ."""
    a = q.states.index(a)
    b = q.states.index(b)
    if T <= 0.0:
        raise ValueError("horizon must be positive")
    p = transition_probability(d, T)
    pab = float(p[a, b])
    if a == b:
        value = pab
    else:
        value = pab / -math.expm1(-T * float(q.exit_rates[a]))
    if value < -1e-9 or value > 1.0 + 1e-9:
        raise NumericalBreakdown(f"acceptance probability {value!r} outside [0, 1]")
    return min(max(value, 0.0), 1.0)


def acceptance_small_T(q: RateMatrix, a, b, T: float) -> float:
    """First-order small-T approximation of the acceptance probability for
    distinct endpoints: the direct one-jump route plus all two-jump routes.
    Valid for ``T * max(Q_c)`` well below 1."""
    a = q.states.index(a)
    b = q.states.index(b)
    if a == b:
        raise ValueError("small-T approximation applies to distinct endpoints")
    qa = float(q.exit_rates[a])
    qb = float(q.exit_rates[b])
    value = (q.q[a, b] / qa) * (1.0 - qb * T / 2.0)
    for i in range(q.n):
        if i not in (a, b):
            value += (q.q[a, i] / qa) * (T / 2.0) * q.q[i, b]
    return float(value)


def _occupancy_integrals(lam: np.ndarray, T: float, scale: float) -> np.ndarray:
    """``int_0^T exp(t * lam) dt`` per eigenvalue, with the zero-eigenvalue
    limit ``T``."""
    out = np.empty_like(lam)
    for j, lj in enumerate(lam):
        if abs(lj) < DEGENERATE_RTOL * scale:
            out[j] = T
        else:
            out[j] = math.expm1(T * lj) / lj
    return out


def expected_recursions_rejection(
    d: SpectralDecomposition, q: RateMatrix, a, b, T: float
) -> float:
    """Expected jump draws per rejection proposal.

    Equal endpoints: expected jump count of the unconditioned forward path,
    i.e. the exit-rate-weighted occupancy integral. Distinct endpoints: one
    forced jump plus the expected jumps of the remainder, averaged over the
    forced first jump's time (truncated-exponential) and target state.
    """
    a = q.states.index(a)
    b = q.states.index(b)
    if T <= 0.0:
        return 0.0
    lam = d.eigenvalues
    scale = max(d.scale, 1e-30)
    exit_rates = q.exit_rates
    # v[m] = sum_i Uinv[m, i] * Q_i
    v = d.u_inv @ exit_rates
    if a == b:
        h = _occupancy_integrals(lam, T, scale)
        return float(d.u[a] @ (h * v))
    qa = float(exit_rates[a])
    denom = -math.expm1(-T * qa)
    g = np.empty_like(lam)
    for m, lm in enumerate(lam):
        if abs(lm) < DEGENERATE_RTOL * scale:
            # occupancy component with zero eigenvalue
            g[m] = T / denom - 1.0 / qa
        else:
            clm = qa + lm
            if abs(clm) < DEGENERATE_RTOL * qa:
                k = T
            else:
                k = -math.expm1(-T * clm) / clm
            g[m] = (qa / (denom * lm)) * (math.exp(T * lm) * k - denom / qa)
    inner = d.u @ (g * v)  # inner[k] = E[jumps of remainder | first jump to k]
    weights = q.q[a] / qa
    total = 0.0
    for k in range(q.n):
        if k != a:
            total += weights[k] * inner[k]
    return 1.0 + float(total)


def expected_recursions_direct(
    d: SpectralDecomposition, q: RateMatrix, a, b, T: float
) -> float:
    """Expected state changes of the endpoint-conditioned path: the
    convolution of occupancy and return probabilities, evaluated in the
    spectral basis with limit handling for coincident eigenvalues."""
    a = q.states.index(a)
    b = q.states.index(b)
    lam = d.eigenvalues
    scale = max(d.scale, 1e-30)
    pab = float(d.u[a] @ (np.exp(T * lam) * d.u_inv[:, b]))
    if not pab > PAB_FLOOR:
        raise UnreachableEndpoint(f"P[{a},{b}]({T}) is numerically zero")
    n = q.n
    e_t = np.exp(T * lam)
    c = np.empty((n, n))
    for uu in range(n):
        for vv in range(n):
            dl = lam[uu] - lam[vv]
            if abs(dl) < DEGENERATE_RTOL * scale:
                c[uu, vv] = T * e_t[uu]
            else:
                c[uu, vv] = (e_t[uu] - e_t[vv]) / dl
    w = np.diag(lam) + d.u_inv @ (q.exit_rates[:, None] * d.u)
    total = float(np.einsum("u,uv,v,uv->", d.u[a], w, d.u_inv[:, b], c))
    return total / pab


def expected_recursions_uniformization(
    kernel, d: SpectralDecomposition | None, a, b, T: float
) -> float:
    """Expected virtual-inclusive jump count of the auxiliary chain:
    ``mu T (R P(T))_ab / P_ab(T)``."""
    q = kernel.q
    a = q.states.index(a)
    b = q.states.index(b)
    if d is not None:
        p = transition_probability(d, T)
    else:
        p = kernel.transition_matrix(T)
    pab = float(p[a, b])
    if not pab > PAB_FLOOR:
        raise UnreachableEndpoint(f"P[{a},{b}]({T}) is numerically zero")
    rp = float(kernel.r[a] @ p[:, b])
    return kernel.mu * T * rp / pab


def inflation_factor(q: RateMatrix, pi: StationaryDistribution | None = None) -> float:
    """Ratio of the maximum exit rate to the stationary-average exit rate;
    the factor by which virtual jumps inflate uniformization's recursion
    count. Scale invariant; equals ``max Q_c`` on a calibrated chain."""
    if pi is None:
        pi = stationary_distribution(q)
    return float(q.exit_rates.max() / (pi.pi @ q.exit_rates))


@dataclass(frozen=True)
class CriticalThresholds:
    """Regime boundaries for moderately large horizons: uniformization beats
    direct below ``nu_critical``; rejection beats uniformization (direct)
    above ``p_critical_uniformization`` (``p_critical_direct``)."""

    nu_critical: float
    p_critical_uniformization: float
    p_critical_direct: float


def critical_thresholds(coeffs: CostCoefficients, T: float, nu: float) -> CriticalThresholds:
    if T <= 0.0 or coeffs.beta_uniformization <= 0.0:
        raise ValueError("need T > 0 and a positive uniformization recursion cost")
    nu_critical = (coeffs.alpha_direct + coeffs.beta_direct * T - coeffs.alpha_uniformization) / (
        coeffs.beta_uniformization * T
    )
    rejection_numerator = coeffs.alpha_rejection + coeffs.beta_rejection * T
    p_u = rejection_numerator / (
        coeffs.alpha_uniformization + coeffs.beta_uniformization * T * nu
    )
    p_d = rejection_numerator / (coeffs.alpha_direct + coeffs.beta_direct * T)
    return CriticalThresholds(
        nu_critical=nu_critical,
        p_critical_uniformization=p_u,
        p_critical_direct=p_d,
    )


@dataclass(frozen=True)
class CostPrediction:
    """Predicted per-path costs and the selection decision."""

    p_acc: float
    nu: float
    expected_recursions: dict
    predicted_cost: dict
    selected: str
    mode: str
    thresholds: CriticalThresholds
    rationale: str

    def to_json_dict(self) -> dict:
        return {
            "p_acc": self.p_acc,
            "nu": self.nu,
            "E_L": dict(self.expected_recursions),
            "predicted_cost": dict(self.predicted_cost),
            "selected": self.selected,
            "mode": self.mode,
            "thresholds": {
                "nu_critical": self.thresholds.nu_critical,
                "p_crit_U": self.thresholds.p_critical_uniformization,
                "p_crit_D": self.thresholds.p_critical_direct,
            },
            "rationale": self.rationale,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


def predict_and_select(
    coeffs: CostCoefficients,
    problem: EndpointProblem,
    exact: bool = True,
    decomposition: SpectralDecomposition | None = None,
    pi: StationaryDistribution | None = None,
) -> CostPrediction:
    """Predict each sampler's cost and pick the cheapest.

    Exact mode evaluates the recursion-count integrals and the exact
    acceptance probability. Large-T mode applies the moderately-large-T
    substitutions: one recursion per unit of (calibrated) time for rejection
    and direct sampling, ``nu`` of them for uniformization, and the
    stationary probability of the ending state as the acceptance
    probability. Ties break toward the cheaper initialization:
    rejection, then uniformization, then direct.
    """
    q = problem.q
    a, b, T = problem.a, problem.b, problem.horizon
    if pi is None:
        pi = stationary_distribution(q)
    nu = inflation_factor(q, pi)
    if exact:
        if decomposition is None:
            decomposition = decompose_auto(q, pi)
        p_acc = acceptance_probability(decomposition, q, a, b, T)
        kernel = build_uniformization_kernel(q, decomposition)
        e_l = {
            "rejection": expected_recursions_rejection(decomposition, q, a, b, T),
            "direct": expected_recursions_direct(decomposition, q, a, b, T),
            "uniformization": expected_recursions_uniformization(kernel, decomposition, a, b, T),
        }
        mode = "exact"
    else:
        p_acc = float(pi.pi[b])
        e_l = {"rejection": T, "direct": T, "uniformization": T * nu}
        mode = "large_T"
    cost = {}
    for name in SAMPLERS:
        raw = coeffs.alpha(name) + coeffs.beta(name) * e_l[name]
        if name == "rejection":
            cost[name] = raw / p_acc if p_acc >= REJECTION_PACC_FLOOR else math.inf
        else:
            cost[name] = raw
    order = ("rejection", "uniformization", "direct")
    selected = min(order, key=lambda name: (cost[name], order.index(name)))
    thresholds = critical_thresholds(coeffs, T, nu)
    rationale = (
        f"{selected} has the lowest predicted cost {cost[selected]:.6g} "
        f"(p_acc={p_acc:.4g}, nu={nu:.4g}, mode={mode})"
    )
    return CostPrediction(
        p_acc=p_acc,
        nu=nu,
        expected_recursions=e_l,
        predicted_cost=cost,
        selected=selected,
        mode=mode,
        thresholds=thresholds,
        rationale=rationale,
    )


@dataclass(frozen=True)
class RunMeasurement:
    """One timed sampling run."""

    problem_index: int
    rep: int
    init_time: float
    sample_time: float
    attempts: int
    recursion_steps: int


def measure_runs(
    sampler: str,
    problems: list[EndpointProblem],
    reps: int,
    rng: RandomStream,
    timer=time.perf_counter,
) -> list[RunMeasurement]:
    """Time initialization and sampling separately for each (problem, rep).

    The timer is called exactly three times per run — before initialization,
    between initialization and sampling, and after sampling — so synthetic
    timers can script exact durations. Runs execute serially; timing on a
    busy machine corrupts the subsequent regression. The default timer is
    the monotonic ``time.perf_counter`` (nanosecond-resolution clock).
    """
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler {sampler!r}")
    out = []
    for idx, problem in enumerate(problems):
        for rep in range(reps):
            stream = rng.split(1)[0]
            t0 = timer()
            if sampler == "direct":
                kernel = build_direct_kernel(problem.q)
            elif sampler == "uniformization":
                kernel = build_uniformization_kernel(problem.q)
                kernel.endpoint_probability(problem.a, problem.b, problem.horizon)
            else:
                kernel = None
            t1 = timer()
            if sampler == "rejection":
                report = rejection_sample(problem, RejectionConfig(), stream)
            elif sampler == "direct":
                report = direct_sample(kernel, problem, stream)
            else:
                report = uniformization_sample(kernel, problem, stream)
            t2 = timer()
            out.append(
                RunMeasurement(
                    problem_index=idx,
                    rep=rep,
                    init_time=t1 - t0,
                    sample_time=t2 - t1,
                    attempts=report.attempts,
                    recursion_steps=report.recursion_steps,
                )
            )
    return out


def fit_through_origin(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of ``y ~ c * x`` and the residual norm, with the
    slope clipped at zero."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sxx = float(x @ x)
    if sxx <= 0.0:
        raise InsufficientVariation("regressor is identically zero")
    c = max(float(x @ y) / sxx, 0.0)
    return c, float(np.linalg.norm(y - c * x))


@dataclass(frozen=True)
class CoefficientFit:
    """Fitted (alpha, beta) for one sampler with regression diagnostics."""

    sampler: str
    alpha: float
    beta: float
    alpha_residual: float
    beta_residual: float
    n_points: int


def fit_cost_coefficients(
    sampler: str,
    init_regressor: np.ndarray,
    init_times: np.ndarray,
    recursion_regressor: np.ndarray,
    sample_times: np.ndarray,
) -> CoefficientFit:
    """Proportional fits of measured times against their analytic drivers."""
    alpha, res_a = fit_through_origin(init_regressor, init_times)
    beta, res_b = fit_through_origin(recursion_regressor, sample_times)
    return CoefficientFit(
        sampler=sampler,
        alpha=alpha,
        beta=beta,
        alpha_residual=res_a,
        beta_residual=res_b,
        n_points=len(init_times),
    )


def _median(values: list[float]) -> float:
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return ordered[mid]
    return 0.5 * (ordered[mid - 1] + ordered[mid])


def calibrate_coefficients(
    sampler: str,
    problems: list[EndpointProblem],
    reps: int = 5,
    rng: RandomStream | None = None,
    timer=time.perf_counter,
    measurements: list[RunMeasurement] | None = None,
) -> CoefficientFit:
    """Estimate (alpha, beta) for one sampler from timed runs.

    Initialization time regresses against 1/p_acc for rejection (each
    proposal pays the setup) and against a constant otherwise; sampling time
    regresses against E[L]/p_acc or E[L]. One observation per problem, the
    median over ``reps`` repetitions. Requires at least three distinct
    horizons. Pass ``measurements`` to fit pre-collected timings instead of
    running the samplers.
    """
    if len({p.horizon for p in problems}) < 3:
        raise InsufficientVariation("need at least three distinct horizons")
    if measurements is None:
        if rng is None:
            raise ValueError("a RandomStream is required to run measurements")
        measurements = measure_runs(sampler, problems, reps, rng, timer)
    init_x = []
    init_t = []
    rec_x = []
    rec_t = []
    decomps: dict[int, SpectralDecomposition] = {}
    for idx, problem in enumerate(problems):
        d = decomps.get(id(problem.q))
        if d is None:
            d = decompose_auto(problem.q)
            decomps[id(problem.q)] = d
        e_l = analytic_recursions(sampler, d, problem)
        if sampler == "rejection":
            p_acc = acceptance_probability(d, problem.q, problem.a, problem.b, problem.horizon)
            if p_acc < REJECTION_PACC_FLOOR:
                raise ValueError("acceptance probability too small to calibrate against")
            init_x.append(1.0 / p_acc)
            rec_x.append(e_l / p_acc)
        else:
            init_x.append(1.0)
            rec_x.append(e_l)
        rows = [m for m in measurements if m.problem_index == idx]
        if not rows:
            raise InsufficientVariation(f"no measurements for problem {idx}")
        init_t.append(_median([m.init_time for m in rows]))
        rec_t.append(_median([m.sample_time for m in rows]))
    return fit_cost_coefficients(
        sampler, np.array(init_x), np.array(init_t), np.array(rec_x), np.array(rec_t)
    )


def analytic_recursions(sampler: str, d: SpectralDecomposition, problem: EndpointProblem) -> float:
    """E[L] for one sampler on one problem (dispatch helper)."""
    q, a, b, T = problem.q, problem.a, problem.b, problem.horizon
    if sampler == "rejection":
        return expected_recursions_rejection(d, q, a, b, T)
    if sampler == "direct":
        return expected_recursions_direct(d, q, a, b, T)
    if sampler == "uniformization":
        kernel = build_uniformization_kernel(q, d)
        return expected_recursions_uniformization(kernel, d, a, b, T)
    raise ValueError(f"unknown sampler {sampler!r}")


@dataclass(frozen=True)
class SeriesFit:
    """One fitted series of the size model: ``value = coefficient * n ** exponent``."""

    coefficient: float
    exponent: float
    residual: float

    def predict(self, n: int) -> float:
        return self.coefficient * float(n) ** self.exponent


def _fit_constant(ns: np.ndarray, values: np.ndarray) -> SeriesFit:
    c = float(values.mean())
    return SeriesFit(c, 0.0, float(np.linalg.norm(values - c)))


def _fit_power(ns: np.ndarray, values: np.ndarray) -> SeriesFit:
    if np.any(values <= 0.0):
        raise InsufficientVariation("power-law fit needs positive values")
    logs = np.log(values)
    logn = np.log(ns.astype(float))
    a = np.vstack([logn, np.ones_like(logn)]).T
    (slope, intercept), *_ = np.linalg.lstsq(a, logs, rcond=None)
    fit = SeriesFit(float(np.exp(intercept)), float(slope), 0.0)
    pred = np.array([fit.predict(int(n)) for n in ns])
    return SeriesFit(fit.coefficient, fit.exponent, float(np.linalg.norm(values - pred)))


def _fit_quadratic(ns: np.ndarray, values: np.ndarray) -> SeriesFit:
    x = ns.astype(float) ** 2
    c, resid = fit_through_origin(x, values)
    return SeriesFit(c, 2.0, resid)


#: Model form per (sampler, coefficient) series, following the observed
#: scaling structure: constants for rejection, a quadratic for the direct
#: recursion cost, free power laws for everything driven by the
#: eigendecomposition.
SIZE_MODEL_FORMS = {
    ("rejection", "alpha"): _fit_constant,
    ("rejection", "beta"): _fit_constant,
    ("direct", "alpha"): _fit_power,
    ("direct", "beta"): _fit_quadratic,
    ("uniformization", "alpha"): _fit_power,
    ("uniformization", "beta"): _fit_power,
}


@dataclass(frozen=True)
class CalibrationModel:
    """Size-scaling fits for every (sampler, coefficient) series; predicts
    coefficients for state-space sizes that were never timed."""

    fits: dict = field(default_factory=dict)

    def predict(self, n: int) -> CostCoefficients:
        values = {}
        for sampler in SAMPLERS:
            values[f"alpha_{sampler}"] = self.fits[(sampler, "alpha")].predict(n)
            values[f"beta_{sampler}"] = self.fits[(sampler, "beta")].predict(n)
        return CostCoefficients(**values)


def coefficient_size_model(calibrations: dict[str, list[tuple[int, float, float]]]) -> CalibrationModel:
    """Fit the size-scaling model from per-size calibrations.

    ``calibrations`` maps sampler name to ``(n, alpha, beta)`` tuples; at
    least four distinct sizes are required per sampler.
    """
    fits = {}
    for sampler in SAMPLERS:
        rows = calibrations.get(sampler, [])
        ns = np.array([r[0] for r in rows], dtype=int)
        if len(set(ns.tolist())) < 4:
            raise InsufficientVariation(f"{sampler}: need at least four distinct sizes")
        alphas = np.array([r[1] for r in rows], dtype=float)
        betas = np.array([r[2] for r in rows], dtype=float)
        fits[(sampler, "alpha")] = SIZE_MODEL_FORMS[(sampler, "alpha")](ns, alphas)
        fits[(sampler, "beta")] = SIZE_MODEL_FORMS[(sampler, "beta")](ns, betas)
    return CalibrationModel(fits=fits)
