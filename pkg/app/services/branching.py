"""Continuous-time multitype branching with exponential lifetimes.

A particle of type k lives an exponential time with rate alpha_k. At death it
is replaced by D_kk + 1 particles of type k and D_kq particles of type q, so
the count vector changes by row k of D. Observed at its split times, the
process with unit rates has the same law as the urn started from Y_0 = Z_0;
``exact_urn_law`` enumerates that law for small n so the embedding can be
tested with a chi-square statistic.

Only type counts are tracked; particles of one type are exchangeable.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..core.config import settings
from ..core.exceptions import Extinction, PreconditionViolation, StateSpaceTooLarge
from .policies import ReplacementSpec, rate_rescaled, sample
from .urn import UrnState, draw_color, run_trajectory

# Set up logger
logger = logging.getLogger(__name__)

MAX_EMBED_STEPS = 6

State = Tuple[float, ...]


@dataclass
class BranchingState:
    """Particle counts Z, clock t, number of splits and per-type lifetime rates."""

    Z: np.ndarray
    t: float
    splits: int
    alpha: np.ndarray
    deaths: np.ndarray

    @classmethod
    def initial(cls, Z0: Sequence[float], alpha: Optional[Sequence[float]] = None) -> "BranchingState":
        Z = np.array(Z0, dtype=float)
        if Z.ndim != 1 or np.any(Z < 0) or np.any(Z != np.round(Z)):
            raise PreconditionViolation("Z0 must be a vector of nonnegative integers")
        rates = np.ones(Z.size) if alpha is None else np.array(alpha, dtype=float)
        if rates.shape != Z.shape or np.any(rates <= 0):
            raise PreconditionViolation(f"alpha must be {Z.size} positive rates")
        return cls(Z=Z, t=0.0, splits=0, alpha=rates, deaths=np.zeros(Z.size, dtype=np.int64))

    @property
    def total_rate(self) -> float:
        return float(self.alpha @ self.Z)


@dataclass(frozen=True)
class SplitRecord:
    """One death event: counts after the split and the total rate that timed it."""

    index: int
    t: float
    Z: np.ndarray
    rate: float
    dying: int


def jump_probabilities(Z: Sequence[float], alpha: Sequence[float]) -> np.ndarray:
    """alpha_k Z_k / sum_j alpha_j Z_j."""
    weights = np.asarray(alpha, dtype=float) * np.asarray(Z, dtype=float)
    total = float(np.sum(weights))
    if total <= 0:
        raise Extinction("no living particle has a positive rate")
    return weights / total


def _check_branching_policy(policy: ReplacementSpec) -> None:
    if not (policy.integer_valued and policy.nonnegative):
        raise PreconditionViolation(f"branching needs a nonnegative integer policy; {policy.kind} is not")


def simulate_splits(
    state: BranchingState, policy: ReplacementSpec, n_splits: int, rng: np.random.Generator
) -> List[SplitRecord]:
    """Runs n_splits death events, mutating ``state``.

    Each event draws the exponential wait first, then one uniform for the dying
    type, then the replacement matrix.

    Raises:
        Extinction: If the total rate is zero before n_splits events.
    """
    _check_branching_policy(policy)
    records: List[SplitRecord] = []
    for _ in range(n_splits):
        rate = state.total_rate
        if rate <= 0:
            raise Extinction(f"population died out after {state.splits} splits")
        state.t += float(rng.exponential(1.0 / rate))
        k = draw_color(jump_probabilities(state.Z, state.alpha), float(rng.random()))
        D = sample(policy, state.splits + 1, rng)
        state.Z = state.Z + D[k]
        state.splits += 1
        state.deaths[k] += 1
        records.append(SplitRecord(index=state.splits, t=state.t, Z=state.Z.copy(), rate=rate, dying=k))
    return records


def scaled_waiting_times(records: Sequence[SplitRecord], start_time: float = 0.0) -> np.ndarray:
    """Waits times the total rate in force before each event; Exp(1) under the model."""
    times = np.array([start_time] + [r.t for r in records])
    rates = np.array([r.rate for r in records])
    return np.diff(times) * rates


def split_rows(records: Sequence[SplitRecord]) -> Tuple[List[str], List[List[float]]]:
    """CSV header and rows split_index, t, Z_1..Z_d."""
    if not records:
        return ["split_index", "t"], []
    d = records[0].Z.size
    header = ["split_index", "t"] + [f"Z_{k + 1}" for k in range(d)]
    return header, [[r.index, r.t, *r.Z.tolist()] for r in records]


def exact_urn_law(
    Y0: Sequence[float], policy: ReplacementSpec, n: int, state_limit: Optional[int] = None
) -> Dict[State, float]:
    """Law of Y_n by breadth-first enumeration over n draws.

    Raises:
        StateSpaceTooLarge: If a level holds more states than the limit.
        PreconditionViolation: If the policy has no finite row support.
    """
    limit = state_limit or settings.numerics.enumeration_state_limit
    law: Dict[State, float] = {tuple(float(y) for y in Y0): 1.0}
    fallback = np.full(len(Y0), 1.0 / len(Y0))
    for m in range(1, n + 1):
        following: Dict[State, float] = {}
        for state, mass in law.items():
            y = np.array(state)
            p = np.maximum(y, 0.0)
            p = p / p.sum() if p.sum() > 0 else fallback
            for k in np.nonzero(p > 0)[0]:
                for row, prob in policy.row_support(int(k), m):
                    nxt = tuple((y + row).tolist())
                    following[nxt] = following.get(nxt, 0.0) + mass * p[k] * prob
        if len(following) > limit:
            raise StateSpaceTooLarge(f"{len(following)} reachable states at n={m} exceed the limit of {limit}")
        law = following
    return law


def pearson_against_law(samples: Sequence[State], law: Dict[State, float]) -> Tuple[float, int, float]:
    """Pearson chi-square of sample frequencies against an exact law over its support.

    Samples outside the support make the statistic infinite. A single-state law
    gives statistic 0 and p-value 1.
    """
    counts = Counter(tuple(float(x) for x in s) for s in samples)
    total = sum(counts.values())
    if any(state not in law for state in counts):
        return float("inf"), max(len(law) - 1, 1), 0.0
    states = [s for s, p in law.items() if p > 0]
    if len(states) < 2:
        return 0.0, 0, 1.0
    observed = np.array([counts.get(s, 0) for s in states], dtype=float)
    expected = np.array([law[s] for s in states]) * total
    expected *= observed.sum() / expected.sum()
    statistic, p_value = stats.chisquare(observed, expected)
    return float(statistic), len(states) - 1, float(p_value)


def embedding_distribution_test(
    Y0: Sequence[float],
    policy: ReplacementSpec,
    n: int,
    reps: int,
    rng: np.random.Generator,
) -> Tuple[float, int, float]:
    """Chi-square of branching Z(tau_n) samples (unit rates) against the exact urn law of Y_n."""
    if n > MAX_EMBED_STEPS:
        raise PreconditionViolation(f"embedding test enumerates at most {MAX_EMBED_STEPS} steps, got {n}")
    law = exact_urn_law(Y0, policy, n)
    samples = []
    for _ in range(reps):
        state = BranchingState.initial(Y0)
        records = simulate_splits(state, policy, n, rng)
        samples.append(tuple(records[-1].Z.tolist()) if records else tuple(state.Z.tolist()))
    statistic, dof, p_value = pearson_against_law(samples, law)
    logger.debug(f"Embedding test n={n}, reps={reps}: chi2={statistic:.4g}, dof={dof}, p={p_value:.4g}")
    return statistic, dof, p_value


def state_fractions(state: BranchingState) -> Tuple[np.ndarray, np.ndarray]:
    """Composition Z / sum Z and death fractions N_k / sum N."""
    composition = state.Z / float(np.sum(state.Z))
    deaths = state.deaths / float(max(np.sum(state.deaths), 1))
    return composition, deaths


def long_run_composition(
    state: BranchingState, policy: ReplacementSpec, T_splits: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Composition Z / sum Z and per-type death fractions after T_splits more events."""
    simulate_splits(state, policy, T_splits, rng)
    return state_fractions(state)


def rescaled_urn_fractions(
    Z0: Sequence[float],
    alpha: Sequence[float],
    policy: ReplacementSpec,
    n: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """Composition and draw fractions of the urn on weighted counts alpha_k Z_k.

    Its draw fractions estimate the branching death fractions, and dividing
    its composition by alpha recovers the particle composition.
    """
    rates = np.asarray(alpha, dtype=float)
    state = UrnState.initial(rates * np.asarray(Z0, dtype=float), rng)
    run_trajectory(state, rate_rescaled(policy, rates), n, [n] if n else [])
    counts = state.Y / rates
    return counts / float(np.sum(counts)), state.N / float(max(state.n, 1))


def ks_exponential(waits: np.ndarray) -> Tuple[float, float]:
    """Kolmogorov-Smirnov statistic and p-value against Exp(1)."""
    result = stats.kstest(waits, "expon")
    return float(result.statistic), float(result.pvalue)
