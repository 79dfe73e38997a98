"""Semantic exceptions shared across the package."""


class ContrastDomainError(ValueError):
    """An argument lies outside the mathematical domain of a contrast operation."""


class QuadratureError(ArithmeticError):
    """Adaptive integration failed to reach the requested tolerance."""

    def __init__(self, message, achieved_tolerance=None):
        super().__init__(message)
        self.achieved_tolerance = achieved_tolerance


class AdmissibilityError(ValueError):
    """A contrast family fails a structural condition an optimizer requires."""


class VerificationError(RuntimeError):
    """A numerical audit reached a state that invalidates the check itself."""
