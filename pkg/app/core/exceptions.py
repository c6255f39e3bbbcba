"""Exception hierarchy for the urn lab.

Services raise these; the adapter layer turns them into error results whose
``error_code`` is the exception class name.
"""

from typing import List, Optional


class UrnLabError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigError(UrnLabError):
    """A configuration file or manifest failed validation.

    Attributes:
        errors: One message per violated invariant, in the order they were found.
    """

    def __init__(self, message: str, errors: Optional[List[str]] = None):
        super().__init__(message)
        self.errors: List[str] = list(errors or [message])


class NoPositiveRightEigenvector(UrnLabError):
    """The mean matrix has no strictly positive right eigenvector for lambda_H."""


class NonPositiveLambda(UrnLabError):
    """The largest real eigenvalue part lambda_H is not positive."""


class DomainError(UrnLabError):
    """An argument lies outside the domain of a formula."""


class BlowUp(UrnLabError):
    """The mean ODE left the admissible range of total mass."""


class PolicySampleError(UrnLabError):
    """A replacement policy could not produce a sample."""


class MeanUnavailable(UrnLabError):
    """The policy has no finite analytic mean schedule."""


class PreconditionViolation(UrnLabError):
    """An operation was called outside its documented preconditions."""


class Extinction(UrnLabError):
    """The branching population has no living particle with a positive rate."""


class StateSpaceTooLarge(UrnLabError):
    """Exact enumeration would exceed the configured state limit."""


class NotReducible(UrnLabError):
    """A reducible-case statistic was requested for an irreducible profile."""


class InsufficientCheckpoints(UrnLabError):
    """A rate fit needs more checkpoints or a wider span of n."""
