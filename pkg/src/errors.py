"""
Exception hierarchy shared by every module.

Bound operations report soft failures through a status field; the
exceptions below are reserved for invalid input and numerical breakdowns.
"""


class RiskBoundError(Exception):
    """Base class for all toolkit errors."""


class InvalidSpec(RiskBoundError, ValueError):
    """A model, test function or config violates its preconditions."""


class ConfigError(InvalidSpec):
    """A run config is malformed. `key` is the dotted path of the offending key."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class DomainError(RiskBoundError, ValueError):
    """An observation or parameter lies outside the declared space."""


class NumericalError(RiskBoundError):
    """A computation produced no usable number."""


class NonFinite(NumericalError):
    """An integrand produced NaN or infinity at a quadrature node."""


class ZeroEvidence(NumericalError):
    """The marginal density of an observation is numerically zero."""


class AllDegenerate(NumericalError):
    """Every seed point of an optimization has a non-ok status."""


class UnsupportedSampling(RiskBoundError):
    """The model has no ancestral sampler."""


class ConditionViolated(RiskBoundError):
    """E[psi | y] = 0 failed for a test function that should satisfy it."""


class NotSPD(InvalidSpec):
    """A covariance matrix is not symmetric positive definite."""


class NotSymmetric(InvalidSpec):
    """A matrix handed to a Loewner comparison is not symmetric."""
