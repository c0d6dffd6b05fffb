"""Exception hierarchy shared by the services and the command layer.

Input problems map to exit code 2, numerical failures to exit code 3.
"""


class InsulationLabError(Exception):
    pass


# --- Input errors (exit code 2) ---
class InputError(InsulationLabError):
    pass


class DomainError(InputError):
    pass


class SourceValidationError(InputError):
    """Raised when a radial source violates its invariants.

    ``point`` holds the offending radius when the violation is pointwise.
    """

    def __init__(self, message: str, point: float | None = None):
        super().__init__(message)
        self.point = point


class UnsupportedDimensionError(InputError):
    pass


class UsageError(InputError):
    pass


# --- Numerical failures (exit code 3) ---
class NumericalFailure(InsulationLabError):
    pass


class BracketError(NumericalFailure):
    pass


class EvaluationError(NumericalFailure):
    pass


class RegimeError(NumericalFailure):
    pass


class MeshError(NumericalFailure):
    pass


class NumericalError(NumericalFailure):
    pass


class DegenerateDistributionError(NumericalFailure):
    pass


class VerificationError(NumericalFailure):
    pass
