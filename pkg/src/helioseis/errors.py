"""Exception hierarchy.

Validation problems (bad input documents, models that break the Herglotz
condition, arguments outside a regime window) derive from
:class:`ValidationError`; failures of the numerics themselves (quadrature,
root bracketing, continuation) derive from :class:`NumericalError`.  The CLI
maps the two families to distinct exit codes.
"""

from __future__ import annotations


class HelioseisError(Exception):
    pass


class ValidationError(HelioseisError, ValueError):
    pass


class SchemaError(ValidationError):
    pass


class NonPositiveSpeed(ValidationError):
    pass


class HerglotzViolation(ValidationError):
    """d/dr(r/c) is not positive somewhere on the check grid."""

    def __init__(self, message, radius=None, margin=None):
        super().__init__(message)
        self.radius = radius
        self.margin = margin


class OriginSlopeError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class RegimeError(ValidationError):
    pass


class ImaginaryRegime(RegimeError):
    """beta^2 < 0: the ray parameter is evanescent at this radius."""


class MetricError(ValidationError):
    pass


class NumericalError(HelioseisError, ArithmeticError):
    pass


class QuadratureError(NumericalError):
    pass


class NoRootError(NumericalError):
    pass


class ContinuationError(NumericalError):
    def __init__(self, message, last_good_tau=None):
        super().__init__(message)
        self.last_good_tau = last_good_tau
