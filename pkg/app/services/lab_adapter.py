"""LabAdapter for bridging the command router to the simulation services.

The adapter is responsible for:
1. Building runtime policies and spectral profiles from validated configurations
2. Translating each command into calls on the spectral, urn, branching and harness services
3. Handling domain exceptions and returning consistent success/error dictionaries
4. Shaping results (profiles, reports, summaries, verdicts) for persistence

Every ``*_tool`` method returns::

    {"success": True, "data": {...}}
    {"success": False, "error_message": str, "error_code": str}

where ``error_code`` is the exception class name, or "UNEXPECTED_ADAPTER_ERROR"
for anything outside the domain hierarchy. Successful verdict commands put the
verdict list and the resulting exit code into ``data``.
"""

import logging
from typing import Any, Dict, List, Optional

import numpy as np

from ..core.config import settings
from ..core.exceptions import UrnLabError
from ..core.seeding import replication_rng
from ..models.experiments import (
    AnalyzeConfig,
    EmbedConfig,
    ProbeDivergenceConfig,
    SimulateConfig,
    Verdict,
    VerdictReport,
    VerifyConvergenceConfig,
    VerifyDriftConfig,
    VerifyRateConfig,
    VerifyVarpiConfig,
)
from . import branching as branching_service
from . import harness as harness_service
from . import policies as policies_service
from . import spectral as spectral_service
from . import urn as urn_service

# Set up logger
logger = logging.getLogger(__name__)

MOMENT_SAMPLES = 10_000


def _failure(tool: str, e: Exception) -> Dict[str, Any]:
    if isinstance(e, UrnLabError):
        logger.error(f"Error in {tool}: {e}", exc_info=True)
        return {"success": False, "error_message": str(e), "error_code": e.__class__.__name__}
    logger.error(f"Unexpected error in {tool}: {e}", exc_info=True)
    return {"success": False, "error_message": f"Unexpected error: {str(e)}", "error_code": "UNEXPECTED_ADAPTER_ERROR"}


def _verdict_data(command: str, verdicts: List[Verdict], **extra: Any) -> Dict[str, Any]:
    report = VerdictReport(command=command, verdicts=verdicts)
    return {**extra, "verdicts": [v.model_dump() for v in verdicts], "exit_code": report.exit_code}


class LabAdapter:
    """Adapter class between the command router and the simulation services.

    Service modules are held as attributes so tests can replace them.

    Attributes:
        spectral: Spectral analysis service.
        policies: Policy construction and moment diagnostics.
        urn: Urn state machine.
        branching: Branching simulator and exact urn laws.
        harness: Ensemble runner and verdicts.
    """

    def __init__(self):
        self.spectral = spectral_service
        self.policies = policies_service
        self.urn = urn_service
        self.branching = branching_service
        self.harness = harness_service

    def _profile_data(self, profile) -> Optional[Dict[str, Any]]:
        return self.spectral.profile_to_model(profile).model_dump() if profile is not None else None

    async def analyze_tool(self, config: AnalyzeConfig) -> Dict[str, Any]:
        """Spectral profile of a mean matrix or of a policy's mean."""
        try:
            if config.policy is not None:
                policy = self.policies.build_policy(config.policy)
                H = policy.schedule.base if isinstance(policy, self.policies.NonhomogeneousPolicy) else policy.mean(1)
                structure = config.structure if config.structure is not None else policy.structure()
            else:
                H, structure = np.array(config.H, dtype=float), config.structure
            profile = self.spectral.analyze(H, structure, config.nu_sec_override)
            logger.debug(f"Analyzed H with lambda_H={profile.lambda_h:.6g}, nu1={profile.nu1}")
            return {"success": True, "data": {"profile": self._profile_data(profile), "class_roots": profile.class_roots}}
        except Exception as e:
            return _failure("analyze_tool", e)

    async def simulate_tool(self, config: SimulateConfig) -> Dict[str, Any]:
        """One trajectory from replication 0 of the master seed, as CSV rows."""
        try:
            policy = self.policies.build_policy(config.policy)
            state = self.urn.UrnState.initial(config.Y0, replication_rng(config.master_seed, 0), config.fallback_p)
            snapshots = self.urn.run_trajectory(state, policy, config.n_steps, config.checkpoints, config.diagnostics)
            header, rows = self.urn.trajectory_to_rows(snapshots)
            data: Dict[str, Any] = {
                "header": header,
                "rows": rows,
                "final": {"n": state.n, "Y": state.Y.tolist(), "N": state.N.tolist()},
            }
            if config.diagnostics and snapshots:
                last = snapshots[-1]
                data["final"]["q"] = last.diagnostics.q
                data["final"]["q_skipped"] = last.diagnostics.q_skipped
                data["final"]["reconstruction_gap"] = self.urn.reconstruction_gap(config.Y0, last)
            return {"success": True, "data": data}
        except Exception as e:
            return _failure("simulate_tool", e)

    async def embed_tool(self, config: EmbedConfig) -> Dict[str, Any]:
        """Chi-square embedding test, plus composition and waiting-time checks when composition_splits > 0."""
        try:
            policy = self.policies.build_policy(config.policy)
            alpha_level = settings.verdicts.chi_square_alpha
            statistic, dof, p_value = self.branching.embedding_distribution_test(
                config.Y0, policy, config.n, config.reps, replication_rng(config.master_seed, 0)
            )
            verdicts = [
                Verdict(
                    name="embedding_chi_square",
                    passed=p_value > alpha_level,
                    metrics={"statistic": statistic, "dof": dof, "p_value": p_value, "alpha": alpha_level},
                )
            ]
            extra: Dict[str, Any] = {}
            if config.composition_splits > 0:
                extra, more = self._composition_checks(config, policy)
                verdicts.extend(more)
            return {"success": True, "data": _verdict_data("embed", verdicts, **extra)}
        except Exception as e:
            return _failure("embed_tool", e)

    def _composition_checks(self, config: EmbedConfig, policy) -> tuple:
        alpha = np.array(config.alpha, dtype=float)
        rng = replication_rng(config.master_seed, 1)
        state = self.branching.BranchingState.initial(config.Y0, alpha)
        records = self.branching.simulate_splits(state, policy, config.composition_splits, rng)
        composition, deaths = self.branching.state_fractions(state)

        tolerance = settings.verdicts.draw_fraction_tolerance
        particle_profile = self.spectral.analyze(self.policies.rate_weighted_mean(policy, alpha), policy.structure())
        weighted_profile = self.spectral.analyze(policy.mean(1) * alpha[None, :], policy.structure())
        dist_composition = self.spectral.dist_to_limit_set(composition, particle_profile, 1.0)
        dist_deaths = self.spectral.dist_to_limit_set(deaths, weighted_profile, 1.0)

        urn_composition, urn_draws = self.branching.rescaled_urn_fractions(
            config.Y0, alpha, policy, config.composition_splits, replication_rng(config.master_seed, 2)
        )
        ks_statistic, ks_p = self.branching.ks_exponential(self.branching.scaled_waiting_times(records))
        alpha_level = settings.verdicts.chi_square_alpha

        extra = {
            "composition": composition.tolist(),
            "death_fractions": deaths.tolist(),
            "urn_composition": urn_composition.tolist(),
            "urn_draw_fractions": urn_draws.tolist(),
            "splits": config.composition_splits,
            "time": state.t,
        }
        verdicts = [
            Verdict(name="composition", passed=dist_composition < tolerance, metrics={"distance": dist_composition, "tolerance": tolerance}),
            Verdict(name="death_fractions", passed=dist_deaths < tolerance, metrics={"distance": dist_deaths, "tolerance": tolerance}),
            Verdict(name="exponential_waits", passed=ks_p > alpha_level, metrics={"statistic": ks_statistic, "p_value": ks_p, "alpha": alpha_level}),
        ]
        return extra, verdicts

    async def verify_convergence_tool(self, config: VerifyConvergenceConfig, threads: Optional[int] = None) -> Dict[str, Any]:
        try:
            summary, profile = self.harness.run_ensemble(config, threads)
            verdicts = self.harness.convergence_verdict(summary)
            data = _verdict_data("verify-convergence", verdicts, profile=self._profile_data(profile), summary=summary.model_dump())
            return {"success": True, "data": data}
        except Exception as e:
            return _failure("verify_convergence_tool", e)

    async def verify_varpi_tool(self, config: VerifyVarpiConfig, threads: Optional[int] = None) -> Dict[str, Any]:
        """Positivity, atom and reference-law checks on the class weights of a reducible urn."""
        try:
            policy = self.policies.build_policy(config.policy)
            summary, profile = self.harness.run_ensemble(config, threads, policy=policy)
            samples = self.harness.varpi_samples(summary, profile)
            verdicts = self.harness.varpi_verdict(samples, config.reference)
            if config.law_check_n is not None:
                statistic, dof, p_value = self.harness.urn_law_test(
                    config.Y0, policy, config.law_check_n, config.law_check_reps, config.master_seed, config.fallback_p
                )
                alpha_level = settings.verdicts.chi_square_alpha
                verdicts.append(
                    Verdict(
                        name="exact_law_chi_square",
                        passed=p_value > alpha_level,
                        metrics={"n": config.law_check_n, "statistic": statistic, "dof": dof, "p_value": p_value},
                    )
                )
            data = _verdict_data("verify-varpi", verdicts, profile=self._profile_data(profile), summary=summary.model_dump())
            return {"success": True, "data": data}
        except Exception as e:
            return _failure("verify_varpi_tool", e)

    async def verify_rate_tool(self, config: VerifyRateConfig, threads: Optional[int] = None) -> Dict[str, Any]:
        try:
            policy = self.policies.build_policy(config.policy)
            moments = policy.moment_finiteness()
            if moments is not None and not moments.m2:
                logger.warning(f"{policy.kind} policy has an infinite second moment; the rate law may not apply")
            summary, profile = self.harness.run_ensemble(config, threads, policy=policy)
            fit = self.harness.fit_rate(summary, profile)
            verdicts = [self.harness.rate_verdict(fit)]
            data = _verdict_data("verify-rate", verdicts, profile=self._profile_data(profile), summary=summary.model_dump())
            return {"success": True, "data": data}
        except Exception as e:
            return _failure("verify_rate_tool", e)

    async def probe_divergence_tool(self, config: ProbeDivergenceConfig, threads: Optional[int] = None) -> Dict[str, Any]:
        """Growth of normalized counts, compared with the policy's analytic mean finiteness."""
        try:
            policy = self.policies.build_policy(config.policy)
            moments = self.policies.moment_diagnostics(
                policy, MOMENT_SAMPLES, replication_rng(config.master_seed, config.replications)
            )
            analytic = policy.moment_finiteness()
            mean_finite = analytic.m1 if analytic is not None else not moments["m1"].divergent
            summary, profile = self.harness.run_ensemble(config, threads, policy=policy)
            report = self.harness.divergence_probe(summary, config.probe_points, config.color)
            verdicts = [self.harness.probe_verdict(report, mean_finite)]
            data = _verdict_data(
                "probe-divergence",
                verdicts,
                report=report,
                moments={name: vars(m) for name, m in moments.items()},
                profile=self._profile_data(profile),
                summary=summary.model_dump(),
            )
            return {"success": True, "data": data}
        except Exception as e:
            return _failure("probe_divergence_tool", e)

    async def verify_drift_tool(self, config: VerifyDriftConfig, threads: Optional[int] = None) -> Dict[str, Any]:
        try:
            policy = self.policies.build_policy(config.policy)
            summary, profile = self.harness.run_ensemble(config, threads, policy=policy)
            report, verdicts = self.harness.nonhomogeneous_verdict(summary, policy, profile)
            data = _verdict_data("verify-drift", verdicts, report=report, profile=self._profile_data(profile), summary=summary.model_dump())
            return {"success": True, "data": data}
        except Exception as e:
            return _failure("verify_drift_tool", e)
