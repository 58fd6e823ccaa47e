"""Exception and warning types raised across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class PreconditionError(InvalidInputError):
    """A mathematical hypothesis of the requested check does not hold."""


class UndefinedRateError(ArithmeticError):
    """A rate or ratio has a zero denominator."""


class DegenerateInstanceError(InvalidInputError):
    """The instance has no well-defined answer (e.g. a zero direction)."""


class ContractViolation(RuntimeError):
    """A caller broke an oracle or solver contract (e.g. signed weights)."""


class UnsupportedAuditError(TypeError):
    """The mechanism exposes no analytic output distribution."""


class DegenerateWeightWarning(RuntimeWarning):
    """A zero weight vector made the linear subproblem trivial."""


class CapWarning(RuntimeWarning):
    """A resolved constant exceeded its configured hard limit and was capped."""


class SensitivityWarning(RuntimeWarning):
    """The declared sensitivity assumes row-average losses, which this loss is not."""
