""" Exceptions raised by the swimmer library

The CLI maps these onto exit codes, see run.py.
"""


class SwimmerError(Exception):
    """Base class for all library errors."""


class SingularResistanceError(SwimmerError, ArithmeticError):
    """The 3x3 resistance solve is singular to working precision (invalid design params)."""


class StrokeError(SwimmerError, ValueError):
    pass


class DegenerateStrokeError(StrokeError):
    pass


class OutOfRegimeError(StrokeError):
    pass


class ScheduleError(StrokeError):
    pass


class SelfIntersectionError(StrokeError):
    pass


class IntegrationError(SwimmerError, RuntimeError):

    def __init__(self, message, step=None):
        super(IntegrationError, self).__init__(message)
        self.step = step


class SolverError(SwimmerError, RuntimeError):
    pass


class InfeasibleError(SolverError):

    def __init__(self, message, best_violation=None):
        super(InfeasibleError, self).__init__(message)
        self.best_violation = best_violation


class MaxIterationsError(SolverError):
    pass
