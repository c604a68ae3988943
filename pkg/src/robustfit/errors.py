"""Exception types raised across the package."""


class RobustFitError(Exception):
    pass


class InvalidArgument(RobustFitError, ValueError):
    pass


class InvalidScale(InvalidArgument):
    pass


class NotLiftable(RobustFitError):
    """Kernel has no closed-form half-quadratic bias function."""


class EvaluationFailure(RobustFitError):
    def __init__(self, residual_index: int, message: str = "non-finite residual"):
        super().__init__(f"{message} (residual block {residual_index})")
        self.residual_index = residual_index


class SingularSystem(RobustFitError):
    pass


class StepFailed(RobustFitError):
    """Raised when the damped step loop exhausts its retry budget.

    ``damping`` is the damping value after the last rejection and
    ``predicted`` the model decrease of the first (least damped) trial.
    """

    def __init__(self, damping: float, predicted: float, objective: float):
        super().__init__(f"no decrease after retries (damping={damping:g})")
        self.damping = damping
        self.predicted = predicted
        self.objective = objective


class InvalidHandle(RobustFitError, KeyError):
    pass


class ParseError(RobustFitError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


class ValidationError(RobustFitError, ValueError):
    pass
