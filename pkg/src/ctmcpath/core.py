"""Validated rate-matrix algebra for finite-state continuous-time Markov chains.

Everything here is a pure function of immutable inputs: construction and
validation of generators, stationary distributions, calibration to one
expected state change per unit time, spectral decomposition, transition
probabilities, path sufficient statistics, and the partition of a discretely
observed process into independent endpoint-conditioned subproblems.

All numerical tolerances are expressed relative to ``max|Q|`` so calibrated
and uncalibrated matrices behave identically.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    ComplexSpectrum,
    DetailedBalanceViolation,
    NegativeRate,
    NonMonotoneTimes,
    NumericalBreakdown,
    RowSumViolation,
    SingularSystem,
    ZeroExitRate,
)

ROW_SUM_RTOL = 1e-12
REPAIR_RTOL = 1e-9
SPECTRUM_IMAG_RTOL = 1e-10
RECONSTRUCTION_RTOL = 1e-9
ZERO_EIGENVALUE_RTOL = 1e-9
DETAILED_BALANCE_RTOL = 1e-9
PROB_CLAMP_ATOL = 1e-9
ROW_STOCHASTIC_ATOL = 1e-6


class _Counter:
    """Thread-safe instrumentation counter (used to observe decomposition reuse)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._value = 0

    @property
    def value(self) -> int:
        return self._value

    def increment(self):
        with self._lock:
            self._value += 1

    def reset(self):
        with self._lock:
            self._value = 0


#: Incremented once per eigendecomposition; lets callers verify that kernels
#: are reused across a batch instead of rebuilt per path.
decomposition_counter = _Counter()


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class StateSpace:
    """Ordered set of distinct state names."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("state space needs at least two states")
        if len(set(labels)) != len(labels):
            raise ValueError("state labels must be unique")
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(labels)})

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, state) -> int:
        """Resolve a label or integer index to an index, with bounds check."""
        if isinstance(state, str):
            try:
                return self._index[state]
            except KeyError:
                raise KeyError(f"unknown state label {state!r}") from None
        i = int(state)
        if not 0 <= i < self.size:
            raise IndexError(f"state index {i} out of range for {self.size} states")
        return i


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """A validated CTMC generator: off-diagonals >= 0, zero row sums,
    strictly positive exit rates."""

    states: StateSpace
    q: np.ndarray
    exit_rates: np.ndarray = field(init=False)

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        _check_generator(q)
        object.__setattr__(self, "q", _frozen(q))
        object.__setattr__(self, "exit_rates", _frozen(-np.diag(q)))
        if self.states.size != q.shape[0]:
            raise ValueError("label count does not match matrix size")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def scale(self) -> float:
        """max|Q|, the reference magnitude for relative tolerances."""
        return float(np.abs(self.q).max())


def _check_generator(q: np.ndarray):
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError("rate matrix must be square")
    n = q.shape[0]
    if n < 2:
        raise ValueError("rate matrix needs at least two states")
    if not np.all(np.isfinite(q)):
        raise ValueError("rate matrix entries must be finite")
    off = q.copy()
    np.fill_diagonal(off, 0.0)
    if off.min() < 0.0:
        i, j = np.unravel_index(np.argmin(off), off.shape)
        raise NegativeRate(f"negative rate Q[{i},{j}] = {q[i, j]!r}")
    scale = float(np.abs(q).max())
    if scale == 0.0:
        raise ZeroExitRate("all rates are zero")
    rowsum = q.sum(axis=1)
    worst = int(np.argmax(np.abs(rowsum)))
    if abs(rowsum[worst]) > ROW_SUM_RTOL * scale:
        raise RowSumViolation(
            f"row {worst} sums to {rowsum[worst]!r} (tolerance {ROW_SUM_RTOL * scale:g})"
        )
    exit_rates = -np.diag(q)
    if exit_rates.min() <= 0.0:
        raise ZeroExitRate(
            f"state {int(np.argmin(exit_rates))} has no exit rate (absorbing states unsupported)"
        )


def validate_rate_matrix(raw, labels, repair: bool = False) -> RateMatrix:
    """Validate a raw square matrix as a CTMC generator.

    With ``repair`` set, a diagonal that deviates from the negative
    off-diagonal row sum by more than ``1e-9 * max|Q|`` is recomputed from the
    off-diagonals; without it any deviation beyond roundoff is rejected.
    """
    q = np.array(raw, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError("rate matrix must be square")
    if repair:
        off = q.copy()
        np.fill_diagonal(off, 0.0)
        if off.size and off.min() < 0.0:
            i, j = np.unravel_index(np.argmin(off), off.shape)
            raise NegativeRate(f"negative rate Q[{i},{j}] = {q[i, j]!r}")
        scale = float(np.abs(q).max())
        deviation = np.abs(q.sum(axis=1))
        if scale > 0.0 and deviation.max() > REPAIR_RTOL * scale:
            np.fill_diagonal(q, 0.0)
            np.fill_diagonal(q, -q.sum(axis=1))
    return RateMatrix(StateSpace(tuple(labels)), q)


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    """Strictly positive probability vector with ``pi @ Q = 0``."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if pi.ndim != 1:
            raise ValueError("stationary distribution must be a vector")
        if pi.min() <= 0.0:
            raise SingularSystem("stationary distribution has non-positive entries")
        if abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("stationary distribution must sum to 1")
        object.__setattr__(self, "pi", _frozen(pi))


def stationary_distribution(q: RateMatrix) -> StationaryDistribution:
    """Solve ``pi Q = 0`` with the normalization row appended.

    Raises ``SingularSystem`` when the system is rank-deficient beyond the
    single expected null direction or the solution is not strictly positive
    (both signal reducibility).
    """
    n = q.n
    a = np.vstack([q.q.T, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < n:
        raise SingularSystem(f"stationary system has rank {rank} < {n}")
    resid = float(np.abs(pi @ q.q).max())
    if resid > 1e-10 * max(q.scale, 1.0):
        raise SingularSystem(f"stationary residual {resid:g} too large")
    if pi.min() <= 0.0:
        raise SingularSystem("solved distribution is not strictly positive (reducible chain?)")
    return StationaryDistribution(pi / pi.sum())


def calibrate_rate_matrix(
    q: RateMatrix, pi: StationaryDistribution | None = None
) -> tuple[RateMatrix, float]:
    """Rescale so one state change is expected per unit time at stationarity.

    Returns ``(Q / s, s)`` with ``s = sum_c pi_c Q_c``; the stationary
    distribution is unchanged and the operation is idempotent.
    """
    if pi is None:
        pi = stationary_distribution(q)
    s = float(pi.pi @ q.exit_rates)
    return RateMatrix(q.states, q.q / s), s


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigendecomposition ``Q = U diag(eigenvalues) U^-1`` with a real spectrum.

    Exactly one eigenvalue is snapped to 0; reconstruction is verified at
    construction time.
    """

    u: np.ndarray
    eigenvalues: np.ndarray
    u_inv: np.ndarray
    scale: float

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen(np.asarray(self.u, dtype=float)))
        object.__setattr__(self, "u_inv", _frozen(np.asarray(self.u_inv, dtype=float)))
        lam = np.asarray(self.eigenvalues, dtype=float).copy()
        near_zero = np.abs(lam) < ZERO_EIGENVALUE_RTOL * self.scale
        if near_zero.sum() != 1:
            raise ComplexSpectrum(
                f"expected exactly one zero eigenvalue, found {int(near_zero.sum())}"
            )
        lam[near_zero] = 0.0
        object.__setattr__(self, "eigenvalues", _frozen(lam))

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.eigenvalues) @ self.u_inv

    def transition_matrix_raw(self, t: float) -> np.ndarray:
        """``exp(tQ)`` from the spectral form, without probability clamping."""
        return (self.u * np.exp(t * self.eigenvalues)) @ self.u_inv


def spectral_decompose(
    q: RateMatrix, pi: StationaryDistribution | None = None, reversible: bool = False
) -> SpectralDecomposition:
    """Diagonalize a generator.

    The reversible path symmetrizes with ``diag(pi)^(1/2) Q diag(pi)^(-1/2)``
    and uses a symmetric eigensolver (exact real spectrum); it requires
    detailed balance and a stationary distribution. The general path accepts
    any real-diagonalizable matrix and raises ``ComplexSpectrum`` when the
    spectrum has a meaningful imaginary part or the eigenbasis is defective.
    """
    decomposition_counter.increment()
    scale = q.scale
    if reversible:
        if pi is None:
            pi = stationary_distribution(q)
        flux = pi.pi[:, None] * q.q
        imbalance = float(np.abs(flux - flux.T).max())
        if imbalance > DETAILED_BALANCE_RTOL * scale:
            raise DetailedBalanceViolation(
                f"detailed balance violated by {imbalance:g} (tolerance {DETAILED_BALANCE_RTOL * scale:g})"
            )
        root = np.sqrt(pi.pi)
        sym = (root[:, None] * q.q) / root[None, :]
        sym = 0.5 * (sym + sym.T)
        lam, v = np.linalg.eigh(sym)
        u = v / root[:, None]
        u_inv = v.T * root[None, :]
    else:
        lam_c, u_c = np.linalg.eig(q.q)
        if float(np.abs(lam_c.imag).max()) > SPECTRUM_IMAG_RTOL * scale:
            raise ComplexSpectrum(
                f"eigenvalue imaginary part {np.abs(lam_c.imag).max():g} exceeds tolerance"
            )
        lam = lam_c.real
        u = u_c.real
        try:
            u_inv = np.linalg.inv(u)
        except np.linalg.LinAlgError as exc:
            raise ComplexSpectrum("eigenvector matrix is singular (defective Q)") from exc
    dec = SpectralDecomposition(u=u, eigenvalues=lam, u_inv=u_inv, scale=scale)
    err = float(np.abs(dec.reconstruct() - q.q).max())
    if err > RECONSTRUCTION_RTOL * scale:
        raise ComplexSpectrum(f"spectral reconstruction error {err:g} exceeds tolerance")
    return dec


def decompose_auto(
    q: RateMatrix, pi: StationaryDistribution | None = None
) -> SpectralDecomposition:
    """Decompose via the reversible path when detailed balance holds, else
    fall back to the general eigensolver."""
    if pi is None:
        try:
            pi = stationary_distribution(q)
        except SingularSystem:
            pi = None
    if pi is not None:
        flux = pi.pi[:, None] * q.q
        if float(np.abs(flux - flux.T).max()) <= DETAILED_BALANCE_RTOL * q.scale:
            return spectral_decompose(q, pi, reversible=True)
    return spectral_decompose(q, pi, reversible=False)


def _clamp_probability_matrix(p: np.ndarray) -> np.ndarray:
    if float(p.min()) < -PROB_CLAMP_ATOL:
        i, j = np.unravel_index(np.argmin(p), p.shape)
        raise NumericalBreakdown(f"probability entry P[{i},{j}] = {p[i, j]!r} below -{PROB_CLAMP_ATOL}")
    rowsum = p.sum(axis=1)
    if float(np.abs(rowsum - 1.0).max()) > ROW_STOCHASTIC_ATOL:
        worst = int(np.argmax(np.abs(rowsum - 1.0)))
        raise NumericalBreakdown(f"row {worst} sums to {rowsum[worst]!r}")
    p = np.clip(p, 0.0, 1.0)
    return p / p.sum(axis=1, keepdims=True)


def transition_probability(d: SpectralDecomposition, t: float) -> np.ndarray:
    """Row-stochastic ``P(t) = exp(tQ)`` from the spectral form.

    Entries in ``[-1e-9, 0)`` are clamped to 0 and rows renormalized;
    anything further negative (or a row sum off by more than 1e-6) raises
    ``NumericalBreakdown``.
    """
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    if t == 0.0:
        return np.eye(d.n)
    return _clamp_probability_matrix(d.transition_matrix_raw(t))


def matrix_exponential_fallback(q: RateMatrix, t: float) -> np.ndarray:
    """``exp(tQ)`` via scaling-and-squaring; same contract as
    ``transition_probability``, available when the spectrum is complex."""
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    if t == 0.0:
        return np.eye(q.n)
    return _clamp_probability_matrix(scipy.linalg.expm(q.q * t))


class SamplePath:
    """A realized CTMC path on ``[0, horizon]``: piecewise-constant states
    with strictly increasing entry times, starting at time 0.

    The state occupying ``[times[-1], horizon]`` is the ending state.
    """

    __slots__ = ("horizon", "states", "times")

    def __init__(self, horizon: float, states, times, validate: bool = True):
        self.horizon = float(horizon)
        self.states = _frozen(np.asarray(states, dtype=np.int64))
        self.times = _frozen(np.asarray(times, dtype=float))
        if validate:
            self._validate()

    def _validate(self):
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if self.states.ndim != 1 or self.times.shape != self.states.shape:
            raise ValueError("states and entry times must be matching vectors")
        if len(self.states) == 0:
            raise ValueError("a path has at least its initial segment")
        if self.times[0] != 0.0:
            raise ValueError("first segment must enter at time 0")
        if len(self.times) > 1:
            dt = np.diff(self.times)
            if dt.min() <= 0.0:
                raise ValueError("entry times must be strictly increasing")
            if np.any(self.states[1:] == self.states[:-1]):
                raise ValueError("consecutive segment states must differ")
        if self.times[-1] >= self.horizon:
            raise ValueError("entry times must lie strictly before the horizon")

    @property
    def n_jumps(self) -> int:
        return len(self.states) - 1

    @property
    def start_state(self) -> int:
        return int(self.states[0])

    @property
    def end_state(self) -> int:
        return int(self.states[-1])

    def dwell_durations(self) -> np.ndarray:
        """Duration of each segment; closes the last segment at the horizon."""
        bounds = np.append(self.times, self.horizon)
        return np.diff(bounds)

    def state_at(self, t: float) -> int:
        """State occupied at time ``t`` (right-continuous)."""
        if not 0.0 <= t <= self.horizon:
            raise ValueError("time outside the path horizon")
        return int(self.states[np.searchsorted(self.times, t, side="right") - 1])

    def segments(self) -> list[tuple[int, float]]:
        """Ordered (state index, entry time) pairs."""
        return list(zip(self.states.tolist(), self.times.tolist()))

    def __eq__(self, other):
        return (
            isinstance(other, SamplePath)
            and self.horizon == other.horizon
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.times, other.times)
        )

    def __repr__(self):
        return f"SamplePath(horizon={self.horizon!r}, jumps={self.n_jumps})"


@dataclass(frozen=True, eq=False)
class EndpointProblem:
    """A single endpoint-conditioned sampling problem: start ``a``, end ``b``,
    over a horizon of length ``horizon``."""

    q: RateMatrix
    a: int
    b: int
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "a", self.q.states.index(self.a))
        object.__setattr__(self, "b", self.q.states.index(self.b))
        if self.horizon < 0.0:
            raise ValueError("horizon must be positive")
        if self.horizon == 0.0 and self.a != self.b:
            raise ValueError("zero horizon requires equal endpoints")


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """Realized transition counts N[i, j] and per-state dwell times D[i]."""

    jump_counts: np.ndarray
    dwell_times: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "jump_counts", _frozen(np.asarray(self.jump_counts, dtype=np.int64)))
        object.__setattr__(self, "dwell_times", _frozen(np.asarray(self.dwell_times, dtype=float)))

    @property
    def total_jumps(self) -> int:
        return int(self.jump_counts.sum())


def sufficient_stats(path: SamplePath, n: int) -> SufficientStats:
    """Count transitions between states and accumulate dwell time per state."""
    counts = np.zeros((n, n), dtype=np.int64)
    if path.n_jumps:
        np.add.at(counts, (path.states[:-1], path.states[1:]), 1)
    dwell = np.zeros(n)
    np.add.at(dwell, path.states, path.dwell_durations())
    return SufficientStats(counts, dwell)


def split_path(path: SamplePath, t: float) -> tuple[SamplePath, SamplePath]:
    """Split a path at an interior time into two valid sub-paths.

    The right half starts in the state occupied at ``t`` (right-continuous),
    so a jump landing exactly on ``t`` is visible in neither half's jump
    counts: the segment it ends belongs to the left half, the segment it
    starts opens the right half. Sufficient statistics of the halves sum to
    those of the whole path except in that measure-zero case.
    """
    if not 0.0 < t < path.horizon:
        raise ValueError("split time must lie strictly inside the horizon")
    cut_left = int(np.searchsorted(path.times, t, side="left"))
    occupant = int(np.searchsorted(path.times, t, side="right")) - 1
    left = SamplePath(t, path.states[:cut_left], path.times[:cut_left])
    right = SamplePath(
        path.horizon - t,
        np.concatenate(([path.states[occupant]], path.states[occupant + 1 :])),
        np.concatenate(([0.0], path.times[occupant + 1 :] - t)),
    )
    return left, right


def partition_observations(q: RateMatrix, observations) -> list[EndpointProblem]:
    """Turn discrete observations ``[(time, state), ...]`` into independent
    endpoint-conditioned problems over the gaps between them.

    Times must strictly increase starting from 0; a single observation has
    nothing to bridge and yields an empty list.
    """
    obs = [(float(t), q.states.index(s)) for t, s in observations]
    if not obs:
        return []
    if obs[0][0] != 0.0:
        raise NonMonotoneTimes("first observation must be at time 0")
    times = [t for t, _ in obs]
    if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
        raise NonMonotoneTimes("observation times must be strictly increasing")
    return [
        EndpointProblem(q, s0, s1, t1 - t0)
        for (t0, s0), (t1, s1) in zip(obs, obs[1:])
    ]
