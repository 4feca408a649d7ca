"""Exception types raised across the package."""


class RadflowError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(RadflowError, ValueError):
    """Invalid user input (bad parameter, malformed family, ...)."""


class NumericalFailure(RadflowError, ArithmeticError):
    """A computation broke down (overflow, NaN, rejected step, ...)."""


class AmbiguousRegime(ValidationError):
    pass


class UnknownRegime(ValidationError):
    pass


class DegenerateSplit(ValidationError):
    pass


class PreconditionViolated(ValidationError):
    pass


class SchemaError(ValidationError):
    def __init__(self, key: str, message: str, line: int | None = None):
        self.key = key
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{key}{where}: {message}")


class MissingArtifacts(ValidationError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing artifacts: " + ", ".join(self.missing))


class DegenerateFit(ValidationError):
    pass


class EigensolverFailure(NumericalFailure):
    pass


class OverflowAtLargeT(NumericalFailure):
    pass


class DissipationViolation(NumericalFailure):
    def __init__(self, worst_time: float, violation: float):
        self.worst_time = worst_time
        self.violation = violation
        super().__init__(f"dissipation inequality violated by {violation:.3e} at t={worst_time:.6g}")


class SingularTransform(NumericalFailure):
    pass


class NaNDetected(NumericalFailure):
    def __init__(self, field: str):
        self.field = field
        super().__init__(f"non-finite values in field '{field}'")


class StepRejected(NumericalFailure):
    pass
