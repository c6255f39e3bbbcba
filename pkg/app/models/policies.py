"""Pydantic models for replacement-policy configuration.

A policy configuration is a JSON object discriminated on ``kind``:

1. deterministic - the same matrix H every step
2. finite_discrete - one of several outcome matrices with fixed probabilities
3. diagonal_iid - independent diagonal reinforcements per color
4. markov_add - row k is one-hot at column q with probability P[k][q]
5. log_zeta_diagonal - heavy-tailed diagonal, P(D = j) proportional to 1 / (j^2 log^beta j), j >= 2
6. nonhomogeneous - a base policy plus a deterministic drift g(n) E
7. perturbed - a base policy plus mean-zero Gaussian errors on its nonzero pattern

Every model checks its own shape constraints against ``d``. Models that
declare ``nonnegative_off_diagonal`` (the default) also reject negative
off-diagonal entries in every matrix they can emit.
"""

import math
from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .structures import check_finite, check_nonnegative_off_diagonal, check_square

PROBABILITY_TOL = 1e-9


def _check_distribution(probs: List[float], name: str) -> None:
    if any(p < 0 for p in probs):
        raise ValueError(f"{name} must be nonnegative")
    total = math.fsum(probs)
    if abs(total - 1.0) > PROBABILITY_TOL:
        raise ValueError(f"{name} must sum to 1, got {total}")


def _check_matrix(matrix: List[List[float]], d: int, name: str, nonnegative_off_diagonal: bool) -> None:
    check_square(matrix, name)
    if len(matrix) != d:
        raise ValueError(f"{name} must be {d}x{d}, got {len(matrix)}x{len(matrix)}")
    check_finite(matrix, name)
    if nonnegative_off_diagonal:
        check_nonnegative_off_diagonal(matrix, name)


class PolicyConfigBase(BaseModel):
    """Fields shared by every policy kind."""

    d: int = Field(..., ge=1, le=64, description="Number of colors.")
    nonnegative_off_diagonal: bool = Field(
        default=True,
        description="Declares that every emitted matrix is nonnegative off the diagonal; violations are rejected.",
    )

    model_config = ConfigDict(extra="forbid")


class DeterministicPolicyConfig(PolicyConfigBase):
    """Replacement matrix H at every step."""

    kind: Literal["deterministic"] = "deterministic"
    H: List[List[float]] = Field(..., description="Replacement matrix, row k added when color k is drawn.")

    @model_validator(mode="after")
    def check_shape(self) -> "DeterministicPolicyConfig":
        _check_matrix(self.H, self.d, "H", self.nonnegative_off_diagonal)
        return self

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={"example": {"kind": "deterministic", "d": 2, "H": [[0, 1], [1, 0]]}},
    )


class FiniteDiscretePolicyConfig(PolicyConfigBase):
    """D equals outcomes[i] with probability probs[i]."""

    kind: Literal["finite_discrete"] = "finite_discrete"
    outcomes: List[List[List[float]]] = Field(..., min_length=1, description="Candidate replacement matrices.")
    probs: List[float] = Field(..., min_length=1, description="Probability of each outcome.")

    @model_validator(mode="after")
    def check_outcomes(self) -> "FiniteDiscretePolicyConfig":
        if len(self.outcomes) != len(self.probs):
            raise ValueError(f"outcomes has {len(self.outcomes)} entries but probs has {len(self.probs)}")
        _check_distribution(self.probs, "probs")
        for i, outcome in enumerate(self.outcomes):
            _check_matrix(outcome, self.d, f"outcomes[{i}]", self.nonnegative_off_diagonal)
        return self

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "kind": "finite_discrete",
                "d": 2,
                "outcomes": [[[4, 2], [2, 4]], [[6, 0], [0, 6]]],
                "probs": [0.5, 0.5],
            }
        },
    )


class DiagonalIidPolicyConfig(PolicyConfigBase):
    """Diagonal D with D_kk drawn independently from a per-color finite law."""

    kind: Literal["diagonal_iid"] = "diagonal_iid"
    outcomes: List[List[float]] = Field(..., description="outcomes[k] lists the possible values of D_kk.")
    probs: List[List[float]] = Field(..., description="probs[k][i] is the probability of outcomes[k][i].")

    @model_validator(mode="after")
    def check_laws(self) -> "DiagonalIidPolicyConfig":
        if len(self.outcomes) != self.d or len(self.probs) != self.d:
            raise ValueError(f"outcomes and probs must each have d = {self.d} rows")
        for k, (values, probs) in enumerate(zip(self.outcomes, self.probs)):
            if not values or len(values) != len(probs):
                raise ValueError(f"outcomes[{k}] and probs[{k}] must be non-empty and of equal length")
            if not all(math.isfinite(v) for v in values):
                raise ValueError(f"outcomes[{k}] has non-finite values")
            _check_distribution(probs, f"probs[{k}]")
        return self

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {"kind": "diagonal_iid", "d": 2, "outcomes": [[1, 2], [1, 3]], "probs": [[0.5, 0.5], [0.5, 0.5]]}
        },
    )


class MarkovAddPolicyConfig(PolicyConfigBase):
    """Drawing color k adds one ball of color q with probability P[k][q]."""

    kind: Literal["markov_add"] = "markov_add"
    P: List[List[float]] = Field(..., description="Row-stochastic transition matrix.")

    @model_validator(mode="after")
    def check_stochastic(self) -> "MarkovAddPolicyConfig":
        _check_matrix(self.P, self.d, "P", True)
        for k, row in enumerate(self.P):
            _check_distribution(row, f"P[{k}]")
        return self

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={"example": {"kind": "markov_add", "d": 2, "P": [[0.5, 0.5], [0.0, 1.0]]}},
    )


class LogZetaPolicyConfig(PolicyConfigBase):
    """Diagonal D with i.i.d. entries, P(D_kk = j) proportional to 1 / (j^2 log^beta j) for j >= 2."""

    kind: Literal["log_zeta_diagonal"] = "log_zeta_diagonal"
    beta: float = Field(..., ge=0, le=50, description="Log exponent; the mean is finite iff beta > 1.")

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={"example": {"kind": "log_zeta_diagonal", "d": 2, "beta": 3.0}},
    )


BasePolicyConfig = Annotated[
    Union[
        DeterministicPolicyConfig,
        FiniteDiscretePolicyConfig,
        DiagonalIidPolicyConfig,
        MarkovAddPolicyConfig,
        LogZetaPolicyConfig,
    ],
    Field(discriminator="kind"),
]


class DriftConfig(BaseModel):
    """Drift g(n) E added to the base replacement at step n."""

    mode: Literal["none", "cesaro_o1", "summable", "cesaro_log"] = Field(
        default="none",
        description="g(n) = 0, n^-1/2, 1/n or 1/log(n + 1) respectively.",
    )
    E: Optional[List[List[float]]] = Field(default=None, description="Perturbation matrix; required unless mode is none.")

    model_config = ConfigDict(extra="forbid")


class NonhomogeneousPolicyConfig(PolicyConfigBase):
    """Base replacement (a policy or a fixed matrix H) plus a deterministic drift schedule."""

    kind: Literal["nonhomogeneous"] = "nonhomogeneous"
    base: Optional[BasePolicyConfig] = Field(default=None, description="Base policy; mutually exclusive with H.")
    H: Optional[List[List[float]]] = Field(default=None, description="Deterministic base matrix.")
    drift: DriftConfig = Field(default_factory=DriftConfig)

    @model_validator(mode="after")
    def check_schedule(self) -> "NonhomogeneousPolicyConfig":
        if (self.base is None) == (self.H is None):
            raise ValueError("exactly one of base or H must be given")
        if self.base is not None and self.base.d != self.d:
            raise ValueError(f"base has d = {self.base.d}, expected {self.d}")
        if self.H is not None:
            _check_matrix(self.H, self.d, "H", self.nonnegative_off_diagonal)
        if self.drift.mode != "none" and self.drift.E is None:
            raise ValueError(f"drift.E is required for drift mode {self.drift.mode}")
        if self.drift.E is not None:
            _check_matrix(self.drift.E, self.d, "drift.E", self.nonnegative_off_diagonal)
        return self

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "kind": "nonhomogeneous",
                "d": 2,
                "H": [[5, 1], [1, 5]],
                "drift": {"mode": "summable", "E": [[1, 0], [0, 1]]},
            }
        },
    )


class PerturbedPolicyConfig(PolicyConfigBase):
    """Base policy plus sigma times standard normal errors on the base's nonzero pattern."""

    kind: Literal["perturbed"] = "perturbed"
    base: BasePolicyConfig
    sigma: float = Field(..., gt=0, description="Standard deviation of the additive errors.")

    @model_validator(mode="after")
    def check_base(self) -> "PerturbedPolicyConfig":
        if self.base.d != self.d:
            raise ValueError(f"base has d = {self.base.d}, expected {self.d}")
        return self

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "kind": "perturbed",
                "d": 2,
                "base": {"kind": "deterministic", "d": 2, "H": [[1, 1], [1, 1]]},
                "sigma": 0.5,
            }
        },
    )


PolicyConfig = Annotated[
    Union[
        DeterministicPolicyConfig,
        FiniteDiscretePolicyConfig,
        DiagonalIidPolicyConfig,
        MarkovAddPolicyConfig,
        LogZetaPolicyConfig,
        NonhomogeneousPolicyConfig,
        PerturbedPolicyConfig,
    ],
    Field(discriminator="kind"),
]
