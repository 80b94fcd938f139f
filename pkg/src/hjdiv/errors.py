"""Exception hierarchy shared by all modules."""


class HJDivError(Exception):
    """Base class for every error raised by this package."""


class DomainError(HJDivError, ValueError):
    """A point lies outside (or too close to the boundary of) a model domain."""

    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (t={time:.6g})")
        self.time = time


class DefinitenessError(HJDivError):
    pass


class SingularMetricError(HJDivError):
    pass


class SymmetryError(HJDivError):
    pass


class UnknownModelError(HJDivError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown model"


class ParseError(HJDivError, ValueError):
    """Malformed expression source; ``position`` is a 0-based character offset."""

    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position
        self.reason = message


class EvalError(HJDivError, ArithmeticError):
    pass


class ConfigError(HJDivError):
    pass


class DegenerateLagrangianError(HJDivError):
    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (t={time:.6g})")
        self.time = time


class NoConvergence(HJDivError):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularShootingJacobian(HJDivError):
    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class NaNError(HJDivError):
    pass


class ShapeMismatch(HJDivError, ValueError):
    pass


class NotPureError(HJDivError, ValueError):
    pass


class DegenerateEndpointsError(HJDivError, ValueError):
    pass


class NonUnitaryError(HJDivError, ValueError):
    pass
