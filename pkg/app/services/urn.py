"""Urn state machine with the stochastic-approximation bookkeeping.

Drawing color k adds row k of the sampled replacement matrix to the urn. Ball
counts are reals with no flooring; only the selection rule uses positive
parts. Alongside the composition the module tracks the martingale terms
M1, M2, the remainder s, the compensator and the inverse-mass clock q that
decompose Y_n^+ as

    Y_n^+ = Y_0^+ + compensator_n + s_n

where compensator_n = sum_m selection_probabilities(Y_{m-1}) H_m.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import MeanUnavailable, PreconditionViolation
from .policies import ReplacementSpec, sample

# Set up logger
logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9


def _check_simplex(p: np.ndarray, name: str) -> None:
    if np.any(p < 0) or abs(float(np.sum(p)) - 1.0) > SIMPLEX_TOL:
        raise PreconditionViolation(f"{name} must be a probability vector, got {p.tolist()}")


@dataclass
class UrnState:
    """Mutable urn composition, draw counts and generator.

    A state is confined to one thread; all of its randomness comes from ``rng``.
    """

    Y: np.ndarray
    N: np.ndarray
    n: int
    fallback_p: np.ndarray
    rng: np.random.Generator

    @classmethod
    def initial(
        cls,
        Y0: Sequence[float],
        rng: np.random.Generator,
        fallback_p: Optional[Sequence[float]] = None,
    ) -> "UrnState":
        Y = np.array(Y0, dtype=float)
        if Y.ndim != 1 or Y.size < 1 or not np.all(np.isfinite(Y)):
            raise PreconditionViolation("Y0 must be a finite non-empty vector")
        d = Y.size
        p = np.full(d, 1.0 / d) if fallback_p is None else np.array(fallback_p, dtype=float)
        if p.shape != (d,):
            raise PreconditionViolation(f"fallback_p must have {d} entries")
        _check_simplex(p, "fallback_p")
        return cls(Y=Y, N=np.zeros(d, dtype=np.int64), n=0, fallback_p=p, rng=rng)

    @property
    def d(self) -> int:
        return int(self.Y.size)


@dataclass(frozen=True)
class StepRecord:
    drawn: int
    D: np.ndarray
    Y_after: np.ndarray


@dataclass(frozen=True)
class Diagnostics:
    """Running sums of the stochastic-approximation decomposition after n steps."""

    n: int
    M1: np.ndarray
    M2: np.ndarray
    s: np.ndarray
    compensator: np.ndarray
    q: float
    q_skipped: int
    theta: np.ndarray

    @classmethod
    def zero(cls, d: int) -> "Diagnostics":
        return cls(
            n=0,
            M1=np.zeros(d),
            M2=np.zeros(d),
            s=np.zeros(d),
            compensator=np.zeros(d),
            q=0.0,
            q_skipped=0,
            theta=np.zeros(d),
        )


@dataclass(frozen=True)
class Snapshot:
    n: int
    Y: np.ndarray
    N: np.ndarray
    diagnostics: Optional[Diagnostics] = None


def selection_probabilities(Y: Sequence[float], fallback_p: Sequence[float]) -> np.ndarray:
    """Y_k^+ / sum_j Y_j^+, or fallback_p when no color has a positive count."""
    positive = np.maximum(np.asarray(Y, dtype=float), 0.0)
    total = float(np.sum(positive))
    if total <= 0.0:
        return np.array(fallback_p, dtype=float)
    return positive / total


def draw_color(p: np.ndarray, u: float) -> int:
    """Inverse CDF over colors 0..d-1 on one uniform variate.

    A cumulative sum that rounds below 1 falls back to the last color with
    positive probability, never to a trailing zero-probability color.
    """
    k = int(np.searchsorted(np.cumsum(p), u, side="right"))
    if k < p.size and p[k] > 0:
        return k
    return int(np.flatnonzero(p > 0)[-1])


def step(state: UrnState, policy: ReplacementSpec) -> StepRecord:
    """Draws a color, samples D_{n+1} and adds its drawn row to the urn.

    The first uniform of the step picks the color; the policy then samples
    from the same generator.
    """
    p = selection_probabilities(state.Y, state.fallback_p)
    k = draw_color(p, float(state.rng.random()))
    D = sample(policy, state.n + 1, state.rng)
    state.Y = state.Y + D[k]
    state.N[k] += 1
    state.n += 1
    return StepRecord(drawn=k, D=D, Y_after=state.Y.copy())


def update_diagnostics(
    diag: Diagnostics,
    Y_before: Sequence[float],
    fallback_p: Sequence[float],
    drawn: int,
    D: np.ndarray,
    H_n: np.ndarray,
) -> Diagnostics:
    """Adds one step's martingale, remainder, compensator and clock increments.

    Args:
        diag: Diagnostics after n - 1 steps.
        Y_before: Composition before the step.
        fallback_p: Fallback selection law of the urn.
        drawn: Color drawn at this step.
        D: Sampled replacement matrix.
        H_n: Analytic mean of D at this step.

    Returns:
        Diagnostics after n steps.
    """
    y_before = np.asarray(Y_before, dtype=float)
    p = selection_probabilities(y_before, fallback_p)
    X = np.zeros(y_before.size)
    X[drawn] = 1.0

    dM1 = X - p
    dM2 = D[drawn] - H_n[drawn]
    y_after = y_before + D[drawn]
    dPositive = np.maximum(y_after, 0.0) - np.maximum(y_before, 0.0)
    ds = dM1 @ H_n + dM2 + (dPositive - D[drawn])

    alpha = float(np.sum(y_before))
    q, skipped = diag.q, diag.q_skipped
    if alpha > 0:
        q += 1.0 / alpha
    else:
        skipped += 1

    n = diag.n + 1
    return Diagnostics(
        n=n,
        M1=diag.M1 + dM1,
        M2=diag.M2 + dM2,
        s=diag.s + ds,
        compensator=diag.compensator + p @ H_n,
        q=q,
        q_skipped=skipped,
        theta=np.maximum(y_after, 0.0) / n,
    )


def run_trajectory(
    state: UrnState,
    policy: ReplacementSpec,
    n_steps: int,
    checkpoints: Iterable[int],
    diagnostics: bool = False,
) -> List[Snapshot]:
    """Applies ``step`` n_steps times and snapshots at the checkpoints.

    Raises:
        PreconditionViolation: If checkpoints are unsorted or outside [1, n_steps].
        MeanUnavailable: If diagnostics are requested for a policy without an analytic mean.
    """
    marks = list(checkpoints)
    if n_steps < 0:
        raise PreconditionViolation(f"n_steps must be nonnegative, got {n_steps}")
    if marks != sorted(marks) or (marks and (marks[0] < 1 or marks[-1] > n_steps)):
        raise PreconditionViolation("checkpoints must be sorted and lie in [1, n_steps]")
    if diagnostics and not policy.has_analytic_mean:
        raise MeanUnavailable(f"diagnostics need an analytic mean; {policy.kind} policy has none")

    wanted = set(marks)
    snapshots: List[Snapshot] = []
    diag = Diagnostics.zero(state.d) if diagnostics else None
    start = state.n
    for _ in range(n_steps):
        y_before = state.Y
        record = step(state, policy)
        if diag is not None:
            diag = update_diagnostics(diag, y_before, state.fallback_p, record.drawn, record.D, policy.mean(state.n))
        if state.n - start in wanted:
            snapshots.append(Snapshot(n=state.n, Y=state.Y.copy(), N=state.N.copy(), diagnostics=diag))

    if diag is not None and diag.q_skipped:
        logger.warning(f"Skipped {diag.q_skipped} q increments where alpha(Y) <= 0")
    return snapshots


def reconstruction_gap(Y0: Sequence[float], snapshot: Snapshot) -> float:
    """Relative gap in Y_n^+ = Y_0^+ + compensator + s."""
    if snapshot.diagnostics is None:
        raise PreconditionViolation("snapshot has no diagnostics")
    lhs = np.maximum(snapshot.Y, 0.0)
    rhs = np.maximum(np.asarray(Y0, dtype=float), 0.0) + snapshot.diagnostics.compensator + snapshot.diagnostics.s
    return float(np.max(np.abs(lhs - rhs)) / max(1.0, float(np.max(np.abs(lhs)))))


def conditional_mean_identity(
    Y: Sequence[float], H: np.ndarray, u: Sequence[float], lambda_h: float
) -> Tuple[float, float]:
    """Analytic E[Y_{n+1} u^t | F_n] next to Y u^t (1 + lambda_H / alpha(Y)).

    Raises:
        PreconditionViolation: If Y has a negative entry, alpha(Y) <= 0 or H u^t != lambda_H u^t.
    """
    y = np.asarray(Y, dtype=float)
    h = np.asarray(H, dtype=float)
    right = np.asarray(u, dtype=float)
    if np.any(y < 0):
        raise PreconditionViolation("Y must be nonnegative")
    alpha = float(np.sum(y))
    if alpha <= 0:
        raise PreconditionViolation("alpha(Y) must be positive")
    Hu = h @ right
    if not np.allclose(Hu, lambda_h * right, rtol=1e-9, atol=1e-9):
        raise PreconditionViolation("u is not a right eigenvector of H for lambda_H")
    base = float(y @ right)
    lhs = base + float((y / alpha) @ Hu)
    rhs = base * (1.0 + lambda_h / alpha)
    return lhs, rhs


def trajectory_header(d: int, diagnostics: bool) -> List[str]:
    header = ["n"] + [f"Y_{k + 1}" for k in range(d)] + [f"N_{k + 1}" for k in range(d)]
    if diagnostics:
        header += ["q"] + [f"s_{k + 1}" for k in range(d)]
    return header


def trajectory_to_rows(snapshots: Sequence[Snapshot]) -> Tuple[List[str], List[List[float]]]:
    """Header and rows n, Y_1..Y_d, N_1..N_d[, q, s_1..s_d]; diagnostic columns only when present."""
    if not snapshots:
        return ["n"], []
    d = snapshots[0].Y.size
    with_diag = snapshots[0].diagnostics is not None
    rows = []
    for snap in snapshots:
        row: List[float] = [snap.n, *snap.Y.tolist(), *snap.N.tolist()]
        if with_diag:
            row += [snap.diagnostics.q, *snap.diagnostics.s.tolist()]
        rows.append(row)
    return trajectory_header(d, with_diag), rows
