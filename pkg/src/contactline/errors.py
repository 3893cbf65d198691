"""Exception hierarchy.

Validation errors map to CLI exit code 1, numerical failures to exit code 2.
"""


class ContactLineError(Exception):
    exit_code = 2


class ValidationError(ContactLineError):
    exit_code = 1


class NumericalError(ContactLineError):
    exit_code = 2


class ConfigError(ValidationError):
    pass


class ChainViolation(ValidationError):
    def __init__(self, inequality):
        super().__init__(inequality)
        self.inequality = inequality


class IndexOutOfRange(ValidationError):
    pass


class CompatibilityFailure(ValidationError):
    def __init__(self, condition, residual=None):
        msg = condition if residual is None else f"{condition} (residual {residual:.3e})"
        super().__init__(msg)
        self.condition = condition
        self.residual = residual


class SmallnessViolation(ValidationError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, iterations, residual):
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class PinchOff(NumericalError):
    pass


class DegenerateMap(NumericalError):
    def __init__(self, min_j):
        super().__init__(f"flattening map degenerate: min J = {min_j:.3e}")
        self.min_j = min_j


class EigensolveFailure(NumericalError):
    pass


class SubspaceTooSmall(NumericalError):
    pass


class SingularStepMatrix(NumericalError):
    def __init__(self, cond):
        super().__init__(f"singular step matrix (condition estimate {cond:.3e})")
        self.cond = cond


class HistoryGap(NumericalError):
    pass


class SaddlePointSolveFailure(NumericalError):
    pass


class NotContracting(NumericalError):
    def __init__(self, ratios):
        super().__init__("fixed-point map not contracting: ratios " + ", ".join(f"{r:.3g}" for r in ratios))
        self.ratios = list(ratios)


class MaxIterExceeded(NumericalError):
    def __init__(self, iterations, distance):
        super().__init__(f"fixed point not reached in {iterations} iterations (distance {distance:.3e})")
        self.iterations = iterations
        self.distance = distance


class DegenerateSeries(NumericalError):
    pass


class CheckpointMismatch(ValidationError):
    pass
