"""Built-in rate matrices: nucleotide and codon substitution models plus
random reversible generators for calibration studies.

The nucleotide alphabet is ordered A, G, C, T (purines first). Codon states
are the 61 sense codons (stop codons TAA, TAG, TGA excluded) in lexicographic
A < C < G < T order, labeled by their triplet.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .core import RateMatrix, StateSpace, StationaryDistribution, calibrate_rate_matrix
from .errors import InvalidFrequencyVector
from .randomstream import RandomStream

NUCLEOTIDES = ("A", "G", "C", "T")
PURINES = frozenset({"A", "G"})
PYRIMIDINES = frozenset({"C", "T"})
STOP_CODONS = frozenset({"TAA", "TAG", "TGA"})

SENSE_CODONS: tuple[str, ...] = tuple(
    c for c in ("".join(t) for t in itertools.product("ACGT", repeat=3)) if c not in STOP_CODONS
)


def _load_data(name: str):
    with resources.files("ctmcpath.data").joinpath(name).open() as fh:
        return json.load(fh)


#: Standard nuclear genetic code, codon -> one-letter amino acid.
GENETIC_CODE: dict[str, str] = dict(_load_data("genetic_code.json"))

#: Bundled codon usage frequencies over the 61 sense codons. The table is a
#: human-usage-shaped profile adjusted so that GGG (0.0042) is the rarest
#: codon, GAG (0.0426) the most common, and AAG sits at 0.0396.
DEFAULT_CODON_FREQUENCIES: dict[str, float] = dict(_load_data("codon_frequencies.json"))


def is_transition(x: str, y: str) -> bool:
    """Purine<->purine or pyrimidine<->pyrimidine substitution."""
    return {x, y} <= PURINES or {x, y} <= PYRIMIDINES


def _check_freqs(freqs: np.ndarray, n: int, what: str) -> np.ndarray:
    freqs = np.asarray(freqs, dtype=float)
    if freqs.shape != (n,):
        raise InvalidFrequencyVector(f"{what} must have length {n}")
    if freqs.min() <= 0.0:
        raise InvalidFrequencyVector(f"{what} must be strictly positive")
    if abs(freqs.sum() - 1.0) > 1e-12:
        raise InvalidFrequencyVector(f"{what} must sum to 1 (got {freqs.sum()!r})")
    return freqs


@dataclass(frozen=True)
class HkyParams:
    """HKY nucleotide model: transition/transversion ratio ``kappa`` and base
    frequencies in A, G, C, T order."""

    kappa: float
    base_freqs: tuple[float, float, float, float]
    calibrate: bool = True

    def __post_init__(self):
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        _check_freqs(np.asarray(self.base_freqs, dtype=float), 4, "base_freqs")


@dataclass(frozen=True)
class GyParams:
    """GY codon model: ``kappa`` (ts/tv), ``omega`` (nonsynonymous multiplier),
    and sense-codon frequencies; defaults to the bundled usage table and the
    standard genetic code."""

    kappa: float
    omega: float
    codon_freqs: tuple[float, ...] = field(
        default_factory=lambda: tuple(DEFAULT_CODON_FREQUENCIES[c] for c in SENSE_CODONS)
    )
    genetic_code: tuple[tuple[str, str], ...] = field(
        default_factory=lambda: tuple(sorted(GENETIC_CODE.items()))
    )
    calibrate: bool = True

    def __post_init__(self):
        if self.kappa <= 0.0 or self.omega <= 0.0:
            raise ValueError("kappa and omega must be positive")
        _check_freqs(np.asarray(self.codon_freqs, dtype=float), 61, "codon_freqs")
        code = dict(self.genetic_code)
        if set(code) != set(SENSE_CODONS):
            raise ValueError("genetic code must cover exactly the 61 sense codons")

    def amino_acid(self, codon: str) -> str:
        return dict(self.genetic_code)[codon]


@dataclass(frozen=True)
class HkyCpgParams:
    """HKY with a CpG-context multiplier: unnormalized base rates ``nu``
    (A, G, C, T order) and a factor ``gamma`` >= 1 that inflates every rate
    out of C."""

    kappa: float
    nu: tuple[float, float, float, float]
    gamma: float
    calibrate: bool = False

    def __post_init__(self):
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        if self.gamma < 1.0:
            raise ValueError("gamma must be >= 1")
        nu = np.asarray(self.nu, dtype=float)
        if nu.shape != (4,) or nu.min() <= 0.0:
            raise InvalidFrequencyVector("nu must be four positive rates")


def _hky_offdiagonals(kappa: float, target: np.ndarray) -> np.ndarray:
    """Off-diagonal pattern shared by the HKY family: rate into state b is
    ``target[b]``, scaled by kappa for transitions."""
    a, g, c, t = range(4)
    q = np.zeros((4, 4))
    q[a, g] = kappa * target[g]
    q[a, c] = target[c]
    q[a, t] = target[t]
    q[g, a] = kappa * target[a]
    q[g, c] = target[c]
    q[g, t] = target[t]
    q[c, a] = target[a]
    q[c, g] = target[g]
    q[c, t] = kappa * target[t]
    q[t, a] = target[a]
    q[t, g] = target[g]
    q[t, c] = kappa * target[c]
    return q


def build_hky(p: HkyParams) -> tuple[RateMatrix, StationaryDistribution]:
    """HKY generator; reversible with stationary distribution equal to the
    base frequencies."""
    freqs = np.asarray(p.base_freqs, dtype=float)
    q = _hky_offdiagonals(p.kappa, freqs)
    np.fill_diagonal(q, -q.sum(axis=1))
    matrix = RateMatrix(StateSpace(NUCLEOTIDES), q)
    pi = StationaryDistribution(freqs)
    if p.calibrate:
        matrix, _ = calibrate_rate_matrix(matrix, pi)
    return matrix, pi


def build_hky_cpg(p: HkyCpgParams) -> tuple[RateMatrix, StationaryDistribution]:
    """HKY+CpG generator: the HKY pattern on ``nu`` with the C row multiplied
    by ``gamma``. Stationary distribution is
    ``(nu_A, nu_G, nu_C / gamma, nu_T)`` normalized. Uncalibrated by default."""
    nu = np.asarray(p.nu, dtype=float)
    q = _hky_offdiagonals(p.kappa, nu)
    q[2, :] *= p.gamma
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    matrix = RateMatrix(StateSpace(NUCLEOTIDES), q)
    pi_raw = np.array([nu[0], nu[1], nu[2] / p.gamma, nu[3]])
    pi = StationaryDistribution(pi_raw / pi_raw.sum())
    if p.calibrate:
        matrix, _ = calibrate_rate_matrix(matrix, pi)
    return matrix, pi


def _single_substitution(a: str, b: str) -> tuple[str, str] | None:
    """The (from, to) nucleotide pair when codons differ at exactly one
    position, else None."""
    diffs = [(x, y) for x, y in zip(a, b) if x != y]
    if len(diffs) != 1:
        return None
    return diffs[0]


def build_gy(p: GyParams) -> tuple[RateMatrix, StationaryDistribution]:
    """GY codon generator on the 61 sense codons.

    Codons more than one substitution apart never exchange directly; a single
    substitution into codon b has rate ``pi_b`` scaled by ``kappa`` for
    transitions and ``omega`` for amino-acid-changing substitutions.
    Reversible with stationary distribution ``codon_freqs``.
    """
    freqs = np.asarray(p.codon_freqs, dtype=float)
    code = dict(p.genetic_code)
    n = len(SENSE_CODONS)
    q = np.zeros((n, n))
    for i, ca in enumerate(SENSE_CODONS):
        for j, cb in enumerate(SENSE_CODONS):
            if i == j:
                continue
            sub = _single_substitution(ca, cb)
            if sub is None:
                continue
            rate = freqs[j]
            if is_transition(*sub):
                rate *= p.kappa
            if code[ca] != code[cb]:
                rate *= p.omega
            q[i, j] = rate
    np.fill_diagonal(q, -q.sum(axis=1))
    matrix = RateMatrix(StateSpace(SENSE_CODONS), q)
    pi = StationaryDistribution(freqs)
    if p.calibrate:
        matrix, _ = calibrate_rate_matrix(matrix, pi)
    return matrix, pi


def _draw_dirichlet_uniform(n: int, rng: RandomStream) -> np.ndarray:
    """Dirichlet(1, ..., 1) via normalized unit exponentials."""
    gammas = np.array([rng.exponential(1.0) for _ in range(n)])
    return gammas / gammas.sum()


def _reversible_from_parts(
    sym: np.ndarray, pi: np.ndarray, labels
) -> tuple[RateMatrix, StationaryDistribution]:
    q = sym * pi[None, :]
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    matrix = RateMatrix(StateSpace(labels), q)
    stat = StationaryDistribution(pi)
    matrix, _ = calibrate_rate_matrix(matrix, stat)
    return matrix, stat


def random_reversible(n: int, rng: RandomStream) -> tuple[RateMatrix, StationaryDistribution]:
    """Random reversible generator: symmetric Exp(1) interaction terms, a
    Dirichlet(1,...,1) stationary distribution, ``Q_ij = S_ij pi_j``;
    calibrated to one expected state change per unit time."""
    if n < 2:
        raise ValueError("need at least two states")
    sym = np.zeros((n, n))
    for i in range(1, n):
        for j in range(i):
            sym[i, j] = sym[j, i] = rng.exponential(1.0)
    pi = _draw_dirichlet_uniform(n, rng)
    labels = tuple(f"s{i}" for i in range(n))
    return _reversible_from_parts(sym, pi, labels)


def codon_adjacency_mask() -> np.ndarray:
    """Boolean 61x61 mask of codon pairs exactly one substitution apart
    (the structural-zero pattern of the GY model)."""
    n = len(SENSE_CODONS)
    mask = np.zeros((n, n), dtype=bool)
    for i, ca in enumerate(SENSE_CODONS):
        for j, cb in enumerate(SENSE_CODONS):
            if i != j and _single_substitution(ca, cb) is not None:
                mask[i, j] = True
    return mask


def random_sparse_codon(rng: RandomStream) -> tuple[RateMatrix, StationaryDistribution]:
    """Random reversible 61-state generator with the GY sparsity pattern:
    interaction terms are Exp(1) only between codons one substitution apart."""
    mask = codon_adjacency_mask()
    n = len(SENSE_CODONS)
    sym = np.zeros((n, n))
    for i in range(1, n):
        for j in range(i):
            if mask[i, j]:
                sym[i, j] = sym[j, i] = rng.exponential(1.0)
    pi = _draw_dirichlet_uniform(n, rng)
    return _reversible_from_parts(sym, pi, SENSE_CODONS)
