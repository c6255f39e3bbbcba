"""Pydantic models for command configurations, ensemble summaries and verdicts.

Each command validates its JSON configuration against one model here. Defaults
are filled during validation, so a validated model is also the normalized
configuration echoed into every output directory:

- fallback_p defaults to the uniform vector
- checkpoints default to a geometric schedule with ratio 10^(1/4) from 100, ending at n_max
"""

import math
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .policies import PolicyConfig
from .structures import SpectralProfileModel, check_finite, check_nonnegative_off_diagonal, check_square

MASK64 = (1 << 64) - 1
CHECKPOINT_START = 100
CHECKPOINT_RATIO = 10 ** 0.25


def geometric_checkpoints(n_max: int, start: int = CHECKPOINT_START, ratio: float = CHECKPOINT_RATIO) -> List[int]:
    """Rounded geometric schedule start, start*ratio, ... strictly below n_max, then n_max."""
    points: List[int] = []
    i = 0
    while True:
        value = int(round(start * ratio ** i))
        if value >= n_max:
            break
        if not points or value > points[-1]:
            points.append(value)
        i += 1
    points.append(n_max)
    return points


class UrnSetup(BaseModel):
    """Policy, initial composition and fallback selection law shared by urn-driven commands."""

    policy: PolicyConfig
    Y0: List[float] = Field(..., min_length=1, description="Initial composition; reals, may be non-integer.")
    fallback_p: Optional[List[float]] = Field(
        default=None, description="Selection law when no color has a positive count; uniform by default."
    )
    master_seed: int = Field(default=0, ge=0, le=MASK64, description="Master seed of all randomness.")

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_urn(self) -> "UrnSetup":
        d = self.policy.d
        if len(self.Y0) != d:
            raise ValueError(f"Y0 has {len(self.Y0)} entries but the policy has d = {d}")
        if not all(math.isfinite(y) for y in self.Y0):
            raise ValueError("Y0 must be finite")
        if self.fallback_p is None:
            self.fallback_p = [1.0 / d] * d
        if len(self.fallback_p) != d:
            raise ValueError(f"fallback_p has {len(self.fallback_p)} entries, expected {d}")
        if any(p < 0 for p in self.fallback_p) or abs(math.fsum(self.fallback_p) - 1.0) > 1e-9:
            raise ValueError("fallback_p must be nonnegative and sum to 1")
        return self


class ExperimentConfig(UrnSetup):
    """Ensemble experiment: replications of one urn up to n_max, snapshotted at checkpoints."""

    n_max: int = Field(..., ge=1, description="Horizon of every replication.")
    checkpoints: Optional[List[int]] = Field(default=None, description="Strictly increasing, last = n_max.")
    replications: int = Field(default=1, ge=1)
    nu_sec_override: Optional[int] = Field(default=None, ge=1, description="Replaces the estimated nu_sec.")
    structure: Optional[List[List[bool]]] = Field(
        default=None, description="Nonzero pattern; defaults to the policy's structural pattern."
    )
    profile: Optional[SpectralProfileModel] = Field(
        default=None, description="Profile written by an earlier analyze run; replaces the analysis of the policy mean."
    )

    def default_checkpoints(self) -> List[int]:
        return geometric_checkpoints(self.n_max)

    @model_validator(mode="after")
    def check_schedule(self) -> "ExperimentConfig":
        if self.checkpoints is None:
            self.checkpoints = self.default_checkpoints()
        marks = self.checkpoints
        if not marks or any(b <= a for a, b in zip(marks, marks[1:])):
            raise ValueError("checkpoints must be non-empty and strictly increasing")
        if marks[0] < 1 or marks[-1] != self.n_max:
            raise ValueError(f"checkpoints must lie in [1, n_max] and end at n_max = {self.n_max}")
        if self.structure is not None:
            check_square(self.structure, "structure")
            if len(self.structure) != self.policy.d:
                raise ValueError(f"structure must be {self.policy.d}x{self.policy.d}")
        if self.profile is not None and any(len(v) != self.policy.d for v in self.profile.v_basis):
            raise ValueError(f"profile vectors must have d = {self.policy.d} entries")
        return self


class AnalyzeConfig(BaseModel):
    """Spectral analysis of a mean matrix H or of a policy's mean."""

    H: Optional[List[List[float]]] = None
    policy: Optional[PolicyConfig] = None
    structure: Optional[List[List[bool]]] = None
    nu_sec_override: Optional[int] = Field(default=None, ge=1)

    model_config = ConfigDict(extra="forbid", json_schema_extra={"example": {"H": [[5, 1], [1, 5]]}})

    @model_validator(mode="after")
    def check_source(self) -> "AnalyzeConfig":
        if (self.H is None) == (self.policy is None):
            raise ValueError("exactly one of H or policy must be given")
        if self.H is not None:
            check_square(self.H, "H")
            check_finite(self.H, "H")
            check_nonnegative_off_diagonal(self.H, "H")
        d = len(self.H) if self.H is not None else self.policy.d
        if self.structure is not None:
            check_square(self.structure, "structure")
            if len(self.structure) != d:
                raise ValueError(f"structure must be {d}x{d}")
        return self


class SimulateConfig(UrnSetup):
    """Single trajectory written as CSV."""

    n_steps: int = Field(..., ge=0)
    checkpoints: Optional[List[int]] = None
    diagnostics: bool = Field(default=False, description="Track M1, M2, s and q; needs an analytic mean.")

    @model_validator(mode="after")
    def check_marks(self) -> "SimulateConfig":
        if self.checkpoints is None:
            self.checkpoints = geometric_checkpoints(self.n_steps, start=1) if self.n_steps else []
        marks = self.checkpoints
        if any(b <= a for a, b in zip(marks, marks[1:])) or (marks and (marks[0] < 1 or marks[-1] > self.n_steps)):
            raise ValueError("checkpoints must be strictly increasing and lie in [1, n_steps]")
        return self


class EmbedConfig(UrnSetup):
    """Branching embedding check against the exact urn law, optionally with a long composition run."""

    n: int = Field(..., ge=1, le=6, description="Number of splits compared with n urn draws.")
    reps: int = Field(default=10_000, ge=1)
    alpha: Optional[List[float]] = Field(default=None, description="Lifetime rates for the composition run.")
    composition_splits: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_branching(self) -> "EmbedConfig":
        if any(y < 0 or y != round(y) for y in self.Y0):
            raise ValueError("Y0 must hold nonnegative integers for the branching embedding")
        if self.alpha is None:
            self.alpha = [1.0] * self.policy.d
        if len(self.alpha) != self.policy.d or any(a <= 0 for a in self.alpha):
            raise ValueError(f"alpha must be {self.policy.d} positive rates")
        return self


class VerifyConvergenceConfig(ExperimentConfig):
    pass


class VerifyVarpiConfig(ExperimentConfig):
    """Reducible limit law: positivity, no atoms and an optional reference law."""

    reference: Literal["none", "uniform"] = Field(default="none", description="Reference law for varpi_1.")
    law_check_n: Optional[int] = Field(default=None, ge=1, le=6, description="Small n for the exact-law cross-check.")
    law_check_reps: int = Field(default=10_000, ge=1)


class VerifyRateConfig(ExperimentConfig):
    pass


class ProbeDivergenceConfig(ExperimentConfig):
    """Growth of the median of Y_{n,color}/n across probe points."""

    probe_points: List[int] = Field(default_factory=lambda: [1_000, 10_000, 100_000], min_length=2)
    color: int = Field(default=0, ge=0)

    def default_checkpoints(self) -> List[int]:
        return sorted(set(self.probe_points) | {self.n_max})

    @model_validator(mode="after")
    def check_probe(self) -> "ProbeDivergenceConfig":
        if self.color >= self.policy.d:
            raise ValueError(f"color must be below d = {self.policy.d}")
        marks = self.checkpoints or self.default_checkpoints()
        missing = [p for p in self.probe_points if p not in marks]
        if missing:
            raise ValueError(f"probe points {missing} are not checkpoints")
        return self


class VerifyDriftConfig(ExperimentConfig):
    """Convergence under a deterministic drift schedule."""

    @model_validator(mode="after")
    def check_drift(self) -> "VerifyDriftConfig":
        if self.policy.kind != "nonhomogeneous":
            raise ValueError("verify-drift needs a nonhomogeneous policy")
        return self


# --- Results ---

class CheckpointStats(BaseModel):
    """Ensemble statistics at one checkpoint; every distance is a mean of per-replication distances."""

    n: int
    mean_y_over_n: List[float]
    median_y_over_n: List[float]
    q05_y_over_n: List[float]
    q95_y_over_n: List[float]
    mean_draw_fractions: List[float]
    dist_limit_mean: Optional[float] = Field(default=None, description="Mean of dist(Y_n / n, lambda_H S_H).")
    dist_limit_se: Optional[float] = None
    dist_proportion_mean: Optional[float] = Field(default=None, description="Mean of dist(Y_n^+ / sum Y_n^+, S_H).")
    dist_proportion_se: Optional[float] = None
    dist_draws_mean: Optional[float] = Field(default=None, description="Mean of dist(N_n / n, S_H).")
    dist_draws_se: Optional[float] = None

    model_config = ConfigDict(frozen=True)


class RateFit(BaseModel):
    slope: float
    intercept: float
    expected_slope: float
    residual: float
    n_points: int
    degenerate: bool = False

    model_config = ConfigDict(frozen=True)


class ReplicationFailure(BaseModel):
    index: int
    error_code: str
    error_message: str

    model_config = ConfigDict(frozen=True)


class EnsembleSummary(BaseModel):
    """Aggregated ensemble, independent of the order in which replications finished."""

    replications: int
    completed: int
    failures: List[ReplicationFailure] = Field(default_factory=list)
    checkpoints: List[CheckpointStats] = Field(default_factory=list)
    terminal_y: List[List[float]] = Field(default_factory=list, description="Final composition per replication.")
    varpi: Optional[List[List[float]]] = Field(default=None, description="Per-replication class weights.")
    rate_fit: Optional[RateFit] = None
    flags: List[str] = Field(default_factory=list)

    model_config = ConfigDict(frozen=True)


class Verdict(BaseModel):
    """One statistical check; passed is None when the check is inconclusive."""

    name: str
    passed: Optional[bool]
    metrics: Dict[str, Any] = Field(default_factory=dict)
    message: str = ""


class VerdictReport(BaseModel):
    command: str
    verdicts: List[Verdict]

    @property
    def exit_code(self) -> int:
        if any(v.passed is False for v in self.verdicts):
            return 1
        if any(v.passed is None for v in self.verdicts):
            return 2
        return 0
