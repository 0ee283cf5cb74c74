"""Exception types shared across the package."""


class VakonomicError(Exception):
    pass


class SingularRegularity(VakonomicError):
    """The regularity matrix is (numerically) singular.

    ``det`` and ``condition_estimate`` describe the offending matrix; when
    raised from an integration, ``trajectory`` holds the samples recorded
    up to ``last_time``.
    """

    def __init__(self, message, det=float("nan"), condition_estimate=float("inf"),
                 trajectory=None, last_time=None):
        super().__init__(message)
        self.det = det
        self.condition_estimate = condition_estimate
        self.trajectory = trajectory
        self.last_time = last_time


class NoConvergence(VakonomicError):
    def __init__(self, message, iterations=0, residual=float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class StepUnderflow(VakonomicError):
    def __init__(self, message, trajectory=None, last_time=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.last_time = last_time


class OriginSingularity(VakonomicError, ValueError):
    """A model evaluated at the singular point of its force field."""
