"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end and an
optional ``stage`` tag that :func:`sparlow.pipeline.train` fills in.
"""


class SparLowError(Exception):
    exit_code = 1

    def __init__(self, message, *, stage=None):
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


class ValidationError(SparLowError, ValueError):
    """Bad arguments, shapes or configuration."""

    exit_code = 2


class DimensionError(ValidationError):
    pass


class DegenerateLabelsError(ValidationError):
    pass


class SeedingError(ValidationError):
    pass


class NumericalError(SparLowError, ArithmeticError):
    """A numerical guard tripped."""

    exit_code = 3


class SingularStepError(NumericalError):
    pass


class FactorizationError(NumericalError):
    pass


class GuardViolationError(NumericalError):
    pass


class BarrierDomainError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    """Coordinate descent did not certify; ``residuals`` maps sample index to KKT residual."""

    def __init__(self, message, residuals=None, *, stage=None):
        super().__init__(message, stage=stage)
        self.residuals = dict(residuals or {})


class DataFormatError(SparLowError, IOError):
    exit_code = 4
