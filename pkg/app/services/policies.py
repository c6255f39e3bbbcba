"""Replacement-matrix samplers.

Each policy is an immutable ``ReplacementSpec``: it samples D_n for a step
index n from the caller's generator, exposes the analytic mean H_n when one
exists, and reports its structural nonzero pattern. Policies are built from
validated configuration models with ``build_policy``.

The matrix norm used throughout is the maximum absolute row sum.
"""

import functools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

from ..core.config import settings
from ..core.exceptions import MeanUnavailable, PolicySampleError, PreconditionViolation
from ..models.policies import (
    DeterministicPolicyConfig,
    DiagonalIidPolicyConfig,
    FiniteDiscretePolicyConfig,
    LogZetaPolicyConfig,
    MarkovAddPolicyConfig,
    NonhomogeneousPolicyConfig,
    PerturbedPolicyConfig,
)

# Set up logger
logger = logging.getLogger(__name__)

GROWTH_FLAG_RATIO = 0.25
LOG_MOMENT_EPS = 0.1
MIN_MOMENT_SAMPLES = 1000

RowLaw = List[Tuple[np.ndarray, float]]


def matrix_norm(matrix: np.ndarray) -> float:
    """Maximum absolute row sum."""
    return float(np.max(np.sum(np.abs(matrix), axis=-1)))


def _batch_norms(batch: np.ndarray) -> np.ndarray:
    return np.max(np.sum(np.abs(batch), axis=-1), axis=-1)


def _inverse_cdf(cdf: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cdf, u, side="right")), cdf.size - 1)


def _merge_rows(rows: RowLaw) -> RowLaw:
    """Adds up probabilities of identical rows, dropping zero-probability ones."""
    merged: Dict[Tuple[float, ...], float] = {}
    for row, p in rows:
        if p > 0:
            key = tuple(float(x) for x in row)
            merged[key] = merged.get(key, 0.0) + p
    return [(np.array(key), p) for key, p in merged.items()]


@dataclass(frozen=True)
class MomentFiniteness:
    """Analytic finiteness of E||D||, E||D|| log^{1+eps} ||D||, E||D|| log ||D|| and E||D||^2."""

    m1: bool
    m_llogl: bool
    m_llogl_eps: bool
    m2: bool


ALL_FINITE = MomentFiniteness(True, True, True, True)


class ReplacementSpec(ABC):
    """A replacement policy: sampler for D_n, optional analytic mean schedule H_n, nonzero pattern."""

    kind: str = "abstract"

    def __init__(self, d: int):
        self.d = int(d)

    @abstractmethod
    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """One d x d replacement matrix for step n."""

    def sample_many(self, count: int, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        return np.stack([self.sample(n, rng) for _ in range(count)])

    def mean(self, n: int) -> np.ndarray:
        raise MeanUnavailable(f"{self.kind} policy has no analytic mean")

    @property
    def has_analytic_mean(self) -> bool:
        return True

    @property
    @abstractmethod
    def integer_valued(self) -> bool:
        """Whether every sample is an integer matrix."""

    @property
    @abstractmethod
    def nonnegative(self) -> bool:
        """Whether every sampled entry is nonnegative."""

    @property
    def nonnegative_off_diagonal(self) -> bool:
        return self.nonnegative

    @abstractmethod
    def structure(self) -> np.ndarray:
        """Boolean pattern, entry (k, q) true iff P(D_kq != 0) > 0."""

    def row_support(self, k: int, n: int) -> RowLaw:
        """Finite law of row k of D_n as (row, probability) pairs."""
        raise PreconditionViolation(f"{self.kind} policy has no finite row support")

    @property
    def finite_support(self) -> bool:
        return False

    def moment_finiteness(self) -> Optional[MomentFiniteness]:
        """Analytic moment finiteness, or None when the family does not determine it."""
        return ALL_FINITE if self.finite_support else None


class DeterministicPolicy(ReplacementSpec):
    kind = "deterministic"

    def __init__(self, H: Sequence[Sequence[float]]):
        matrix = np.array(H, dtype=float)
        super().__init__(matrix.shape[0])
        matrix.setflags(write=False)
        self._H = matrix

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._H

    def sample_many(self, count: int, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        return np.broadcast_to(self._H, (count, self.d, self.d)).copy()

    def mean(self, n: int) -> np.ndarray:
        return self._H.copy()

    @property
    def integer_valued(self) -> bool:
        return bool(np.all(self._H == np.round(self._H)))

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self._H >= 0))

    @property
    def nonnegative_off_diagonal(self) -> bool:
        return bool(np.all(self._H[~np.eye(self.d, dtype=bool)] >= 0))

    def structure(self) -> np.ndarray:
        return self._H != 0

    def row_support(self, k: int, n: int) -> RowLaw:
        return [(self._H[k].copy(), 1.0)]

    @property
    def finite_support(self) -> bool:
        return True


class FiniteDiscretePolicy(ReplacementSpec):
    kind = "finite_discrete"

    def __init__(self, outcomes: Sequence, probs: Sequence[float]):
        stack = np.array(outcomes, dtype=float)
        super().__init__(stack.shape[1])
        self._outcomes = stack
        self._probs = np.array(probs, dtype=float)
        self._cdf = np.cumsum(self._probs)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._outcomes[_inverse_cdf(self._cdf, rng.random())]

    def sample_many(self, count: int, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        picks = np.minimum(np.searchsorted(self._cdf, rng.random(count), side="right"), self._probs.size - 1)
        return self._outcomes[picks]

    def mean(self, n: int) -> np.ndarray:
        return np.tensordot(self._probs, self._outcomes, axes=1)

    @property
    def integer_valued(self) -> bool:
        return bool(np.all(self._outcomes == np.round(self._outcomes)))

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self._outcomes[self._probs > 0] >= 0))

    @property
    def nonnegative_off_diagonal(self) -> bool:
        off = ~np.eye(self.d, dtype=bool)
        return bool(np.all(self._outcomes[self._probs > 0][:, off] >= 0))

    def structure(self) -> np.ndarray:
        return np.any(self._outcomes[self._probs > 0] != 0, axis=0)

    def row_support(self, k: int, n: int) -> RowLaw:
        return _merge_rows([(o[k], float(p)) for o, p in zip(self._outcomes, self._probs)])

    @property
    def finite_support(self) -> bool:
        return True


class DiagonalIidPolicy(ReplacementSpec):
    """Diagonal reinforcement: D = diag(X_1, ..., X_d) with independent X_k."""

    kind = "diagonal_iid"

    def __init__(self, outcomes: Sequence[Sequence[float]], probs: Sequence[Sequence[float]]):
        super().__init__(len(outcomes))
        self._values = [np.array(v, dtype=float) for v in outcomes]
        self._probs = [np.array(p, dtype=float) for p in probs]
        self._cdfs = [np.cumsum(p) for p in self._probs]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(self.d)
        return np.diag([values[_inverse_cdf(cdf, x)] for values, cdf, x in zip(self._values, self._cdfs, u)])

    def mean(self, n: int) -> np.ndarray:
        return np.diag([float(v @ p) for v, p in zip(self._values, self._probs)])

    @property
    def integer_valued(self) -> bool:
        return all(np.all(v == np.round(v)) for v in self._values)

    @property
    def nonnegative(self) -> bool:
        return all(np.all(v[p > 0] >= 0) for v, p in zip(self._values, self._probs))

    @property
    def nonnegative_off_diagonal(self) -> bool:
        return True

    def structure(self) -> np.ndarray:
        present = [bool(np.any(v[p > 0] != 0)) for v, p in zip(self._values, self._probs)]
        return np.diag(present)

    def row_support(self, k: int, n: int) -> RowLaw:
        rows = []
        for value, p in zip(self._values[k], self._probs[k]):
            row = np.zeros(self.d)
            row[k] = value
            rows.append((row, float(p)))
        return _merge_rows(rows)

    @property
    def finite_support(self) -> bool:
        return True


class MarkovAddPolicy(ReplacementSpec):
    """Row k of D is the indicator of a column drawn from row k of the transition matrix P."""

    kind = "markov_add"

    def __init__(self, P: Sequence[Sequence[float]]):
        matrix = np.array(P, dtype=float)
        super().__init__(matrix.shape[0])
        self._P = matrix
        self._cdf = np.cumsum(matrix, axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(self.d)
        columns = np.minimum(np.sum(self._cdf <= u[:, None], axis=1), self.d - 1)
        D = np.zeros((self.d, self.d))
        D[np.arange(self.d), columns] = 1.0
        return D

    def mean(self, n: int) -> np.ndarray:
        return self._P.copy()

    @property
    def integer_valued(self) -> bool:
        return True

    @property
    def nonnegative(self) -> bool:
        return True

    def structure(self) -> np.ndarray:
        return self._P > 0

    def row_support(self, k: int, n: int) -> RowLaw:
        return [(np.eye(self.d)[q], float(self._P[k, q])) for q in range(self.d) if self._P[k, q] > 0]

    @property
    def finite_support(self) -> bool:
        return True


@dataclass(frozen=True)
class LogZetaTable:
    """Explicit weights 1 / (j^2 log^beta j) for 2 <= j <= size + 1, with integral tails.

    Attributes:
        beta: Log exponent.
        last: Largest tabulated value j.
        normalizer: c_beta, so that P(D = j) = c_beta / (j^2 log^beta j).
        head_cdf: Cumulative probabilities of the tabulated values.
        tail_mass: Probability of D > last.
        mean: E[D] when beta > 1, otherwise None.
    """

    beta: float
    last: int
    normalizer: float
    head_cdf: np.ndarray
    tail_mass: float
    mean: Optional[float]

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(size)
        values = np.searchsorted(self.head_cdf, u, side="right").astype(float) + 2.0
        for i in np.nonzero(u >= self.head_cdf[-1])[0]:
            values[i] = self._tail_value(float(u[i]))
        return values

    def _tail_value(self, u: float) -> float:
        """Invert the survival c * integral_x^inf dt / (t^2 log^beta t) beyond the table."""
        survival = max(1.0 - u, np.finfo(float).tiny)
        target = math.log(survival) - math.log(self.normalizer)

        def excess(y: float) -> float:
            return log_tail_integral(y, self.beta, log_scale=True) - target

        low, high = math.log(self.last + 0.5), 700.0
        if excess(low) <= 0:
            return float(self.last + 1)
        if excess(high) >= 0:
            return math.exp(high)
        x = math.exp(optimize.brentq(excess, low, high, xtol=1e-12))
        return float(max(self.last + 1, round(x)))


def log_tail_integral(log_x: float, beta: float, log_scale: bool = False) -> float:
    """integral_x^inf dt / (t^2 log^beta t), written in s = log t - log x.

    The substituted integrand exp(-s) (log x + s)^-beta is O(1) near s = 0, so the
    quadrature sees no underflow however large x is.
    """
    shape, _ = integrate.quad(
        lambda s: math.exp(-s) * (log_x + s) ** -beta, 0.0, np.inf, epsabs=0.0, epsrel=1e-10, limit=200
    )
    if log_scale:
        return math.log(shape) - log_x
    return math.exp(-log_x) * shape


@functools.lru_cache(maxsize=16)
def log_zeta_table(beta: float, size: int) -> LogZetaTable:
    """Normalizer, mean and inverse-CDF table of the log-zeta family."""
    j = np.arange(2, size + 2, dtype=float)
    log_j = np.log(j)
    weights = 1.0 / (j * j * log_j ** beta)
    cut = size + 1.5

    # Midpoint rule tail: sum_{j > last} f(j) ~ integral from last + 1/2
    tail_weight = log_tail_integral(math.log(cut), beta)
    head_weight = math.fsum(weights)
    normalizer = 1.0 / (head_weight + tail_weight)

    mean = None
    if beta > 1:
        mean_tail = math.log(cut) ** (1.0 - beta) / (beta - 1.0)
        mean = normalizer * (math.fsum(j * weights) + mean_tail)

    head_cdf = normalizer * np.cumsum(weights)
    logger.debug(f"log-zeta table beta={beta}: c={normalizer:.12g}, tail mass={normalizer * tail_weight:.3g}")
    return LogZetaTable(
        beta=float(beta),
        last=size + 1,
        normalizer=normalizer,
        head_cdf=head_cdf,
        tail_mass=normalizer * tail_weight,
        mean=mean,
    )


class LogZetaDiagonalPolicy(ReplacementSpec):
    """Diagonal D with i.i.d. heavy-tailed entries P(D_kk = j) = c_beta / (j^2 log^beta j), j >= 2.

    The mean is finite iff beta > 1 and the L log L moment iff beta > 2. The
    second moment is infinite for every beta.
    """

    kind = "log_zeta_diagonal"

    def __init__(self, beta: float, d: int, table_size: Optional[int] = None):
        super().__init__(d)
        self.beta = float(beta)
        self.table = log_zeta_table(self.beta, int(table_size or settings.numerics.log_zeta_table_size))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.diag(self.table.sample(self.d, rng))

    def sample_many(self, count: int, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        values = self.table.sample(count * self.d, rng).reshape(count, self.d)
        batch = np.zeros((count, self.d, self.d))
        idx = np.arange(self.d)
        batch[:, idx, idx] = values
        return batch

    def mean(self, n: int) -> np.ndarray:
        if self.table.mean is None:
            raise MeanUnavailable(f"log-zeta mean is infinite for beta = {self.beta} <= 1")
        return self.table.mean * np.eye(self.d)

    @property
    def has_analytic_mean(self) -> bool:
        return self.table.mean is not None

    @property
    def integer_valued(self) -> bool:
        return True

    @property
    def nonnegative(self) -> bool:
        return True

    def structure(self) -> np.ndarray:
        return np.eye(self.d, dtype=bool)

    def moment_finiteness(self) -> Optional[MomentFiniteness]:
        return MomentFiniteness(
            m1=self.beta > 1,
            m_llogl=self.beta > 2,
            m_llogl_eps=self.beta > 2 + LOG_MOMENT_EPS,
            m2=False,
        )


DRIFT_MODES: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "none": lambda n: np.zeros_like(n, dtype=float),
    "cesaro_o1": lambda n: 1.0 / np.sqrt(n),
    "summable": lambda n: 1.0 / n,
    "cesaro_log": lambda n: 1.0 / np.log(n + 1.0),
}

# Whether sum_m |g(m)| / m converges for each mode.
WEIGHTED_SUM_CONVERGES = {"none": True, "cesaro_o1": True, "summable": True, "cesaro_log": False}


@dataclass(frozen=True)
class DriftSchedule:
    """Deterministic mean schedule H_n = H + g(n) E."""

    base: np.ndarray
    mode: str
    E: np.ndarray

    def factor(self, n) -> np.ndarray:
        return DRIFT_MODES[self.mode](np.asarray(n, dtype=float))

    def mean_at(self, n: int) -> np.ndarray:
        return self.base + float(self.factor(n)) * self.E

    @property
    def weighted_sum_converges(self) -> bool:
        return WEIGHTED_SUM_CONVERGES[self.mode] or not np.any(self.E)


class NonhomogeneousPolicy(ReplacementSpec):
    """D_n = base sample + g(n) E."""

    kind = "nonhomogeneous"

    def __init__(self, base: ReplacementSpec, mode: str, E: Optional[Sequence[Sequence[float]]] = None):
        super().__init__(base.d)
        if mode not in DRIFT_MODES:
            raise PreconditionViolation(f"unknown drift mode {mode}")
        self.base = base
        self.mode = mode
        self.E = np.zeros((base.d, base.d)) if E is None else np.array(E, dtype=float)

    def _shift(self, n: int) -> float:
        return float(DRIFT_MODES[self.mode](np.asarray(float(n))))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.base.sample(n, rng) + self._shift(n) * self.E

    def mean(self, n: int) -> np.ndarray:
        return self.base.mean(n) + self._shift(n) * self.E

    @property
    def has_analytic_mean(self) -> bool:
        return self.base.has_analytic_mean

    @property
    def schedule(self) -> DriftSchedule:
        return DriftSchedule(base=self.base.mean(1), mode=self.mode, E=self.E)

    @property
    def integer_valued(self) -> bool:
        return self.base.integer_valued and not np.any(self.E)

    @property
    def nonnegative(self) -> bool:
        return self.base.nonnegative and bool(np.all(self.E >= 0))

    @property
    def nonnegative_off_diagonal(self) -> bool:
        off = ~np.eye(self.d, dtype=bool)
        return self.base.nonnegative_off_diagonal and bool(np.all(self.E[off] >= 0))

    def structure(self) -> np.ndarray:
        return self.base.structure() | (self.E != 0)

    def row_support(self, k: int, n: int) -> RowLaw:
        shift = self._shift(n) * self.E[k]
        return _merge_rows([(row + shift, p) for row, p in self.base.row_support(k, n)])

    @property
    def finite_support(self) -> bool:
        return self.base.finite_support

    def moment_finiteness(self) -> Optional[MomentFiniteness]:
        return self.base.moment_finiteness()


class PerturbedPolicy(ReplacementSpec):
    """Base sample plus sigma * N(0, 1) errors on the base's nonzero pattern; the mean is unchanged."""

    kind = "perturbed"

    def __init__(self, base: ReplacementSpec, sigma: float):
        super().__init__(base.d)
        if sigma <= 0:
            raise PreconditionViolation(f"sigma must be positive, got {sigma}")
        self.base = base
        self.sigma = float(sigma)
        self._mask = base.structure().astype(float)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        noise = rng.standard_normal((self.d, self.d))
        return self.base.sample(n, rng) + self.sigma * noise * self._mask

    def mean(self, n: int) -> np.ndarray:
        return self.base.mean(n)

    @property
    def has_analytic_mean(self) -> bool:
        return self.base.has_analytic_mean

    @property
    def integer_valued(self) -> bool:
        return False

    @property
    def nonnegative(self) -> bool:
        return False

    @property
    def nonnegative_off_diagonal(self) -> bool:
        return not np.any(self._mask[~np.eye(self.d, dtype=bool)]) and self.base.nonnegative_off_diagonal

    def structure(self) -> np.ndarray:
        return self.base.structure()

    def moment_finiteness(self) -> Optional[MomentFiniteness]:
        return self.base.moment_finiteness()


class RescaledPolicy(ReplacementSpec):
    """Samples D diag(alpha): the urn on weighted counts alpha_k Z_k of a branching process with rates alpha."""

    kind = "rescaled"

    def __init__(self, base: ReplacementSpec, alpha: Sequence[float]):
        super().__init__(base.d)
        rates = np.array(alpha, dtype=float)
        if rates.shape != (base.d,) or np.any(rates <= 0):
            raise PreconditionViolation(f"alpha must be {base.d} positive rates")
        self.base = base
        self.alpha = rates

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.base.sample(n, rng) * self.alpha[None, :]

    def mean(self, n: int) -> np.ndarray:
        return self.base.mean(n) * self.alpha[None, :]

    @property
    def has_analytic_mean(self) -> bool:
        return self.base.has_analytic_mean

    @property
    def integer_valued(self) -> bool:
        return self.base.integer_valued and bool(np.all(self.alpha == np.round(self.alpha)))

    @property
    def nonnegative(self) -> bool:
        return self.base.nonnegative

    @property
    def nonnegative_off_diagonal(self) -> bool:
        return self.base.nonnegative_off_diagonal

    def structure(self) -> np.ndarray:
        return self.base.structure()

    def row_support(self, k: int, n: int) -> RowLaw:
        return [(row * self.alpha, p) for row, p in self.base.row_support(k, n)]

    @property
    def finite_support(self) -> bool:
        return self.base.finite_support

    def moment_finiteness(self) -> Optional[MomentFiniteness]:
        return self.base.moment_finiteness()


# --- Construction from configuration ---

def build_policy(config, table_size: Optional[int] = None) -> ReplacementSpec:
    """Runtime policy for a validated policy configuration model."""
    if isinstance(config, DeterministicPolicyConfig):
        return DeterministicPolicy(config.H)
    if isinstance(config, FiniteDiscretePolicyConfig):
        return FiniteDiscretePolicy(config.outcomes, config.probs)
    if isinstance(config, DiagonalIidPolicyConfig):
        return DiagonalIidPolicy(config.outcomes, config.probs)
    if isinstance(config, MarkovAddPolicyConfig):
        return MarkovAddPolicy(config.P)
    if isinstance(config, LogZetaPolicyConfig):
        return LogZetaDiagonalPolicy(config.beta, config.d, table_size)
    if isinstance(config, NonhomogeneousPolicyConfig):
        base = build_policy(config.base, table_size) if config.base is not None else DeterministicPolicy(config.H)
        return NonhomogeneousPolicy(base, config.drift.mode, config.drift.E)
    if isinstance(config, PerturbedPolicyConfig):
        return PerturbedPolicy(build_policy(config.base, table_size), config.sigma)
    raise PreconditionViolation(f"Unknown policy configuration: {type(config).__name__}")


# --- Module-level operations ---

def sample(policy: ReplacementSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """One replacement matrix for step n."""
    try:
        return policy.sample(n, rng)
    except (ValueError, FloatingPointError, ArithmeticError) as e:
        raise PolicySampleError(f"{policy.kind} policy failed to sample at n={n}: {e}") from e


def mean_matrix(policy: ReplacementSpec, n: int) -> np.ndarray:
    """Exact H_n; raises MeanUnavailable when the policy has no finite analytic mean."""
    return policy.mean(n)


def structure(policy: ReplacementSpec) -> np.ndarray:
    return policy.structure()


def row_support(policy: ReplacementSpec, k: int, n: int) -> RowLaw:
    return policy.row_support(k, n)


def empirical_structure(policy: ReplacementSpec, N: int, rng: np.random.Generator) -> np.ndarray:
    """Nonzero pattern observed in N samples."""
    return np.any(policy.sample_many(N, rng) != 0, axis=0)


def moment_finiteness(policy: ReplacementSpec) -> Optional[MomentFiniteness]:
    return policy.moment_finiteness()


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo estimate of one moment of ||D||.

    ``growth_flag`` is set when the estimate on all N samples differs from the
    estimate on the first N/4 by more than 25%. ``divergent`` prefers the
    analytic verdict when the family provides one.
    """

    name: str
    estimate: float
    std_error: float
    quarter_estimate: float
    growth_flag: bool
    analytic_finite: Optional[bool]
    divergent: bool


def _estimate(name: str, values: np.ndarray, analytic_finite: Optional[bool]) -> MomentEstimate:
    quarter = values[: max(1, values.size // 4)]
    estimate = float(np.mean(values))
    quarter_estimate = float(np.mean(quarter))
    std_error = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    scale = max(abs(quarter_estimate), np.finfo(float).tiny)
    growth_flag = abs(estimate - quarter_estimate) > GROWTH_FLAG_RATIO * scale
    divergent = (not analytic_finite) if analytic_finite is not None else growth_flag
    return MomentEstimate(name, estimate, std_error, quarter_estimate, bool(growth_flag), analytic_finite, bool(divergent))


def moment_diagnostics(policy: ReplacementSpec, N: int, rng: np.random.Generator) -> Dict[str, MomentEstimate]:
    """Estimates of E||D||, E||D|| log+ ||D||, E||D|| log+^{1+eps} ||D|| and E||D||^2 from N samples.

    Raises:
        PreconditionViolation: If N < 1000.
    """
    if N < MIN_MOMENT_SAMPLES:
        raise PreconditionViolation(f"moment_diagnostics needs N >= {MIN_MOMENT_SAMPLES}, got {N}")
    norms = _batch_norms(policy.sample_many(N, rng))
    log_plus = np.log(np.maximum(norms, 1.0))
    analytic = policy.moment_finiteness()

    def flag(field: str) -> Optional[bool]:
        return getattr(analytic, field) if analytic is not None else None

    report = {
        "m1": _estimate("m1", norms, flag("m1")),
        "m_llogl": _estimate("m_llogl", norms * log_plus, flag("m_llogl")),
        "m_llogl_eps": _estimate("m_llogl_eps", norms * log_plus ** (1.0 + LOG_MOMENT_EPS), flag("m_llogl_eps")),
        "m2": _estimate("m2", norms * norms, flag("m2")),
    }
    for name, entry in report.items():
        if entry.analytic_finite is not None and entry.growth_flag != entry.divergent:
            logger.debug(f"{name}: doubling heuristic ({entry.growth_flag}) disagrees with analytic verdict")
    return report


def drift_cesaro_diagnostics(schedule: DriftSchedule, n: int) -> Tuple[float, float]:
    """Exact partial sums (1/n) sum_{m<=n} ||H_m - H|| and sum_{m<=n} ||H_m - H|| / m."""
    if n < 1:
        raise PreconditionViolation(f"n must be at least 1, got {n}")
    m = np.arange(1, n + 1, dtype=float)
    deviations = np.abs(schedule.factor(m)) * matrix_norm(schedule.E)
    return float(np.sum(deviations) / n), float(np.sum(deviations / m))


def rate_rescaled(policy: ReplacementSpec, alpha: Sequence[float]) -> ReplacementSpec:
    """Urn policy on weighted counts alpha_k Z_k equivalent to branching with lifetime rates alpha."""
    return RescaledPolicy(policy, alpha)


def rate_weighted_mean(policy: ReplacementSpec, alpha: Sequence[float]) -> np.ndarray:
    """Mean generator M = diag(alpha) H of the branching process with rates alpha."""
    return np.asarray(alpha, dtype=float)[:, None] * policy.mean(1)
