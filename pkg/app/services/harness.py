"""Ensemble runner and statistical verdicts.

Replication r draws from its own generator, seeded by the 64-bit avalanche
mix of (master_seed, r), and results are stored by replication index, so a
summary depends only on the configuration and never on thread scheduling.
Failures of single replications are recorded in the summary instead of
aborting the ensemble.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..core.config import settings
from ..core.exceptions import InsufficientCheckpoints, NotReducible, PreconditionViolation, UrnLabError
from ..core.seeding import replication_rng
from ..models.experiments import (
    CheckpointStats,
    EnsembleSummary,
    ExperimentConfig,
    RateFit,
    ReplicationFailure,
    Verdict,
)
from .branching import exact_urn_law, pearson_against_law
from .policies import NonhomogeneousPolicy, ReplacementSpec, build_policy, drift_cesaro_diagnostics
from .spectral import SpectralProfile, analyze, dist_to_limit_set, profile_from_model
from .urn import Snapshot, UrnState, run_trajectory

# Set up logger
logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 6
MIN_FIT_SPAN = 100.0
MIN_ATOM_SAMPLES = 500
ATOM_DECIMALS = 12
VARPI_SUM_TOL = 1e-9
ZERO_DISTANCE = 1e-12


@dataclass(frozen=True)
class Replication:
    """Snapshots of one replication, or the error that stopped it."""

    index: int
    snapshots: List[Snapshot]
    error_code: Optional[str] = None
    error_message: Optional[str] = None


def resolve_threads(threads: Optional[int]) -> int:
    count = threads if threads else settings.default_threads
    return max(1, count or os.cpu_count() or 1)


def profile_for(config: ExperimentConfig, policy: ReplacementSpec) -> Optional[SpectralProfile]:
    """Spectral profile of the policy's mean at step 1 (the limit mean for drift schedules).

    A profile given in the configuration (the output of an earlier analyze run)
    is used as is. Otherwise policies without a finite mean have no profile and
    their summaries carry no distances.
    """
    if config.profile is not None:
        return profile_from_model(config.profile)
    if not policy.has_analytic_mean:
        logger.info(f"{policy.kind} policy has no finite mean; distances to the limit set are skipped")
        return None
    H = policy.schedule.base if isinstance(policy, NonhomogeneousPolicy) else policy.mean(1)
    structure = config.structure if config.structure is not None else policy.structure()
    return analyze(H, structure, config.nu_sec_override)


def _run_one(config: ExperimentConfig, policy: ReplacementSpec, index: int) -> Replication:
    try:
        state = UrnState.initial(config.Y0, replication_rng(config.master_seed, index), config.fallback_p)
        snapshots = run_trajectory(state, policy, config.n_max, config.checkpoints)
        return Replication(index=index, snapshots=snapshots)
    except UrnLabError as e:
        logger.warning(f"Replication {index} failed: {e}")
        return Replication(index=index, snapshots=[], error_code=e.__class__.__name__, error_message=str(e))


def run_replications(
    config: ExperimentConfig, policy: ReplacementSpec, threads: Optional[int] = None
) -> List[Replication]:
    """All replications of an experiment, ordered by replication index."""
    workers = min(resolve_threads(threads), config.replications)
    logger.debug(f"Running {config.replications} replications on {workers} threads")
    if workers == 1:
        return [_run_one(config, policy, r) for r in range(config.replications)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: _run_one(config, policy, r), range(config.replications)))


def _mean_and_se(values: np.ndarray) -> Tuple[float, float]:
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return mean, se


def _proportions(Y: np.ndarray) -> np.ndarray:
    positive = np.maximum(Y, 0.0)
    total = float(np.sum(positive))
    return positive / total if total > 0 else np.full(Y.size, 1.0 / Y.size)


def _checkpoint_stats(n: int, snaps: Sequence[Snapshot], profile: Optional[SpectralProfile]) -> CheckpointStats:
    y_over_n = np.array([s.Y / n for s in snaps])
    draws = np.array([s.N / n for s in snaps])
    fields = dict(
        n=n,
        mean_y_over_n=np.mean(y_over_n, axis=0).tolist(),
        median_y_over_n=np.median(y_over_n, axis=0).tolist(),
        q05_y_over_n=np.quantile(y_over_n, 0.05, axis=0).tolist(),
        q95_y_over_n=np.quantile(y_over_n, 0.95, axis=0).tolist(),
        mean_draw_fractions=np.mean(draws, axis=0).tolist(),
    )
    if profile is None:
        return CheckpointStats(**fields)
    dist_limit = np.array([dist_to_limit_set(y, profile, profile.lambda_h) for y in y_over_n])
    dist_prop = np.array([dist_to_limit_set(_proportions(s.Y), profile, 1.0) for s in snaps])
    dist_draws = np.array([dist_to_limit_set(x, profile, 1.0) for x in draws])
    limit_mean, limit_se = _mean_and_se(dist_limit)
    prop_mean, prop_se = _mean_and_se(dist_prop)
    draws_mean, draws_se = _mean_and_se(dist_draws)
    return CheckpointStats(
        **fields,
        dist_limit_mean=limit_mean,
        dist_limit_se=limit_se,
        dist_proportion_mean=prop_mean,
        dist_proportion_se=prop_se,
        dist_draws_mean=draws_mean,
        dist_draws_se=draws_se,
    )


def summarize(
    config: ExperimentConfig, replications: Sequence[Replication], profile: Optional[SpectralProfile]
) -> EnsembleSummary:
    """Aggregates replications (sorted by index) into an immutable summary."""
    ordered = sorted(replications, key=lambda r: r.index)
    done = [r for r in ordered if r.error_code is None]
    failures = [
        ReplicationFailure(index=r.index, error_code=r.error_code, error_message=r.error_message or "")
        for r in ordered
        if r.error_code is not None
    ]
    checkpoints = []
    if done:
        for i, n in enumerate(config.checkpoints):
            checkpoints.append(_checkpoint_stats(n, [r.snapshots[i] for r in done], profile))

    flags = []
    if failures:
        flags.append("replication_failures")
    terminal = [r.snapshots[-1].Y.tolist() for r in done]
    varpi = None
    if profile is not None and profile.nu1 >= 2 and done:
        varpi = varpi_from_terminal(np.array(terminal), profile).tolist()

    rate_fit = None
    span = config.checkpoints[-1] / config.checkpoints[0]
    if profile is not None and len(checkpoints) >= MIN_FIT_POINTS and span >= MIN_FIT_SPAN:
        rate_fit = fit_rate_from_distances(
            [c.n for c in checkpoints], [c.dist_limit_mean for c in checkpoints], expected_slope(profile)
        )
        if rate_fit.degenerate:
            flags.append("degenerate_rate_fit")

    return EnsembleSummary(
        replications=config.replications,
        completed=len(done),
        failures=failures,
        checkpoints=checkpoints,
        terminal_y=terminal,
        varpi=varpi,
        rate_fit=rate_fit,
        flags=flags,
    )


def run_ensemble(
    config: ExperimentConfig,
    threads: Optional[int] = None,
    policy: Optional[ReplacementSpec] = None,
    profile: Optional[SpectralProfile] = None,
) -> Tuple[EnsembleSummary, Optional[SpectralProfile]]:
    """Runs every replication and summarizes them against the spectral profile."""
    policy = policy or build_policy(config.policy)
    if profile is None:
        profile = profile_for(config, policy)
    summary = summarize(config, run_replications(config, policy, threads), profile)
    logger.info(f"Ensemble finished: {summary.completed}/{summary.replications} replications")
    return summary, profile


# --- Reducible limit law ---

def varpi_from_terminal(terminal_y: np.ndarray, profile: SpectralProfile) -> np.ndarray:
    """varpi_j = (Y . u_j) / sum_i (Y . u_i) per row of terminal compositions."""
    weights = np.maximum(terminal_y, 0.0) @ profile.u_basis.T
    return weights / np.sum(weights, axis=1, keepdims=True)


def varpi_samples(summary: EnsembleSummary, profile: SpectralProfile) -> np.ndarray:
    """Class weights at the final checkpoint, one row per completed replication.

    Raises:
        NotReducible: If only one class attains lambda_H.
    """
    if profile.nu1 < 2:
        raise NotReducible("varpi needs at least two classes attaining lambda_H")
    samples = varpi_from_terminal(np.array(summary.terminal_y, dtype=float), profile)
    if np.any(np.abs(np.sum(samples, axis=1) - 1.0) > VARPI_SUM_TOL):
        raise PreconditionViolation("varpi rows do not sum to 1")
    return samples


def atom_and_positivity_test(
    samples: Sequence[float], max_multiplicity: Optional[int] = None
) -> Tuple[int, float, bool]:
    """Largest count of equal values after rounding to 12 decimals, smallest value, and the verdict.

    Raises:
        PreconditionViolation: With fewer than 500 samples.
    """
    values = np.asarray(samples, dtype=float)
    if values.size < MIN_ATOM_SAMPLES:
        raise PreconditionViolation(f"atom test needs at least {MIN_ATOM_SAMPLES} samples, got {values.size}")
    limit = max_multiplicity if max_multiplicity is not None else settings.verdicts.atom_max_multiplicity
    _, counts = np.unique(np.round(values, ATOM_DECIMALS), return_counts=True)
    multiplicity = int(np.max(counts))
    minimum = float(np.min(values))
    return multiplicity, minimum, bool(multiplicity <= limit and minimum > 0)


def varpi_verdict(samples: np.ndarray, reference: str = "none") -> List[Verdict]:
    """Positivity and atom checks on every varpi_j, plus KS of varpi_1 against Uniform(0, 1) when asked."""
    verdicts = []
    for j in range(samples.shape[1]):
        multiplicity, minimum, passed = atom_and_positivity_test(samples[:, j])
        verdicts.append(
            Verdict(
                name=f"atoms_and_positivity_varpi_{j + 1}",
                passed=passed,
                metrics={"max_multiplicity": multiplicity, "min_value": minimum},
            )
        )
    if reference == "uniform":
        result = stats.kstest(samples[:, 0], "uniform")
        threshold = settings.verdicts.ks_threshold
        verdicts.append(
            Verdict(
                name="ks_uniform_varpi_1",
                passed=bool(result.statistic < threshold),
                metrics={"statistic": float(result.statistic), "p_value": float(result.pvalue), "threshold": threshold},
            )
        )
    return verdicts


def urn_law_test(
    Y0: Sequence[float],
    policy: ReplacementSpec,
    n: int,
    reps: int,
    master_seed: int,
    fallback_p: Optional[Sequence[float]] = None,
) -> Tuple[float, int, float]:
    """Chi-square of simulated Y_n against the exact enumerated urn law."""
    law = exact_urn_law(Y0, policy, n)
    samples = []
    for r in range(reps):
        state = UrnState.initial(Y0, replication_rng(master_seed, r), fallback_p)
        run_trajectory(state, policy, n, [n])
        samples.append(tuple(state.Y.tolist()))
    return pearson_against_law(samples, law)


# --- Rate law ---

def expected_slope(profile: SpectralProfile) -> float:
    """Dominant exponent of b_n: rho - 1 above one half, -1/2 otherwise."""
    if profile.rho is not None and profile.rho > 0.5:
        return profile.rho - 1.0
    return -0.5


def fit_rate_from_distances(ns: Sequence[float], distances: Sequence[float], expected: float) -> RateFit:
    """Least-squares slope of log distance against log n.

    Zero distances make the fit degenerate; it is then reported with slope 0
    and the degenerate flag set.

    Raises:
        InsufficientCheckpoints: With fewer than 6 points or a span below 100x.
    """
    x = np.asarray(ns, dtype=float)
    y = np.asarray(distances, dtype=float)
    if x.size < MIN_FIT_POINTS or x.max() / x.min() < MIN_FIT_SPAN:
        raise InsufficientCheckpoints(
            f"rate fit needs {MIN_FIT_POINTS} checkpoints spanning {MIN_FIT_SPAN:g}x, got {x.size}"
        )
    if np.any(y <= ZERO_DISTANCE):
        logger.warning("Rate fit is degenerate: some mean distances are zero")
        return RateFit(
            slope=0.0, intercept=0.0, expected_slope=expected, residual=0.0, n_points=int(x.size), degenerate=True
        )
    log_x, log_y = np.log(x), np.log(y)
    slope, intercept = np.polyfit(log_x, log_y, 1)
    residual = float(np.sqrt(np.mean((log_y - (slope * log_x + intercept)) ** 2)))
    return RateFit(
        slope=float(slope), intercept=float(intercept), expected_slope=expected, residual=residual, n_points=int(x.size)
    )


def fit_rate(summary: EnsembleSummary, profile: SpectralProfile) -> RateFit:
    ns = [c.n for c in summary.checkpoints]
    distances = [c.dist_limit_mean for c in summary.checkpoints]
    return fit_rate_from_distances(ns, distances, expected_slope(profile))


def rate_verdict(fit: RateFit) -> Verdict:
    tolerance = settings.verdicts.rate_slope_tolerance
    metrics = fit.model_dump()
    if fit.degenerate:
        return Verdict(name="rate_exponent", passed=None, metrics=metrics, message="distances reached zero")
    return Verdict(
        name="rate_exponent",
        passed=bool(abs(fit.slope - fit.expected_slope) <= tolerance),
        metrics={**metrics, "tolerance": tolerance},
    )


# --- Convergence ---

def convergence_verdict(summary: EnsembleSummary) -> List[Verdict]:
    """Final-checkpoint mean distances of Y_n / n and N_n / n against their tolerances."""
    if not summary.checkpoints:
        return [Verdict(name="convergence", passed=None, message="no replication completed")]
    final = summary.checkpoints[-1]
    if final.dist_limit_mean is None:
        return [Verdict(name="convergence", passed=None, message="policy has no finite mean, so no limit set")]
    tolerance = settings.verdicts.convergence_tolerance
    draw_tolerance = settings.verdicts.draw_fraction_tolerance
    return [
        Verdict(
            name="limit_distance",
            passed=final.dist_limit_mean < tolerance,
            metrics={"n": final.n, "mean": final.dist_limit_mean, "se": final.dist_limit_se, "tolerance": tolerance},
        ),
        Verdict(
            name="draw_fraction_distance",
            passed=final.dist_draws_mean < draw_tolerance,
            metrics={"n": final.n, "mean": final.dist_draws_mean, "se": final.dist_draws_se, "tolerance": draw_tolerance},
        ),
    ]


# --- Necessity probe ---

def divergence_probe(summary: EnsembleSummary, probe_points: Sequence[int], color: int = 0) -> Dict[str, Any]:
    """Medians of Y_{n,color}/n at the probe points and the growth ratio last / first."""
    by_n = {c.n: c for c in summary.checkpoints}
    missing = [p for p in probe_points if p not in by_n]
    if missing:
        raise PreconditionViolation(f"probe points {missing} are not checkpoints of the ensemble")
    medians = {str(p): by_n[p].median_y_over_n[color] for p in probe_points}
    first, last = medians[str(probe_points[0])], medians[str(probe_points[-1])]
    ratio = last / first if first != 0 else float("inf")
    return {"medians": medians, "growth_ratio": ratio}


def probe_verdict(report: Dict[str, Any], mean_finite: Optional[bool]) -> Verdict:
    """Classifies the growth ratio as divergent, finite or inconclusive and compares with the analytic mean."""
    ratio = report["growth_ratio"]
    threshold = settings.verdicts.divergence_growth_threshold
    low, high = settings.verdicts.finite_growth_band
    if ratio > threshold:
        observed = "divergent"
    elif low <= ratio <= high:
        observed = "finite"
    else:
        observed = "inconclusive"
    metrics = {**report, "observed": observed, "threshold": threshold, "finite_band": [low, high]}
    if mean_finite is None or observed == "inconclusive":
        return Verdict(name="divergence_probe", passed=None, metrics=metrics)
    expected = "finite" if mean_finite else "divergent"
    metrics["expected"] = expected
    return Verdict(name="divergence_probe", passed=observed == expected, metrics=metrics)


# --- Drift schedules ---

def nonhomogeneous_verdict(
    summary: EnsembleSummary, policy: NonhomogeneousPolicy, profile: SpectralProfile
) -> Tuple[Dict[str, Any], List[Verdict]]:
    """Distance trace with drift partial sums and the drift conditions the schedule satisfies."""
    schedule = policy.schedule
    trace = []
    for c in summary.checkpoints:
        cesaro, weighted = drift_cesaro_diagnostics(schedule, c.n)
        trace.append({"n": c.n, "dist_limit_mean": c.dist_limit_mean, "cesaro": cesaro, "weighted": weighted})

    # Every schedule here has g(n) -> 0, so the Cesaro average always vanishes.
    labels = ["cesaro_drift"]
    if schedule.weighted_sum_converges:
        labels.append("summable_drift")
    report = {"mode": schedule.mode, "labels": labels, "trace": trace}

    verdicts = convergence_verdict(summary)
    if len(summary.checkpoints) >= 2:
        first, last = summary.checkpoints[0], summary.checkpoints[-1]
        verdicts.append(
            Verdict(
                name="distance_shrinks",
                passed=last.dist_limit_mean < first.dist_limit_mean,
                metrics={"first": first.dist_limit_mean, "last": last.dist_limit_mean},
            )
        )
    logger.debug(f"Drift mode {schedule.mode} labeled {labels}")
    return report, verdicts
