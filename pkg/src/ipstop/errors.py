"""Exception types shared across the package."""


class IpstopError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(IpstopError):
    """Operand shape does not match the operator."""


class CapabilityError(IpstopError):
    """Operation not supported by this operator (e.g. missing adjoint)."""


class NotPositiveDefiniteError(IpstopError):
    """Matrix handed to an SPD factorization is not positive definite."""


class IndefinitenessError(IpstopError):
    """CG detected a non-SPD operator or preconditioner."""


class BreakdownError(IpstopError):
    """Krylov recurrence broke down (zero denominator)."""


class NotSpdPreconditionerError(BreakdownError):
    """MINRES preconditioner produced a negative inner product."""


class IndicatorError(IpstopError):
    """An IPM convergence indicator evaluated to NaN."""


class ModeError(IpstopError):
    """Requested linear-system mode is invalid for the problem structure."""


class ConfigError(IpstopError):
    """Invalid solver or algorithm configuration."""


class IterationLimit(IpstopError):
    """Outer IPM loop exhausted its iteration budget."""

    def __init__(self, msg, stats=None):
        super().__init__(msg)
        self.stats = stats


class InnerFailure(IpstopError):
    """Inner solver returned an unusable direction."""


class NumericalBreakdown(IpstopError):
    """Inner solver broke down irrecoverably inside the IPM loop."""
