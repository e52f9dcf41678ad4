"""Exception and warning types raised across the package."""


class RbfControlError(Exception):
    """Base class for all solver errors."""


class SingularMatrix(RbfControlError):
    def __init__(self, message="matrix is singular", index=None):
        super().__init__(message)
        self.index = index


class DimensionMismatch(RbfControlError, ValueError):
    pass


class NoConvergence(RbfControlError):
    def __init__(self, iterations, residual, message=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            message
            or f"no convergence after {iterations} iterations (relative residual {residual:.3e})"
        )


class InvalidLayout(RbfControlError, ValueError):
    pass


class TooFewNodes(RbfControlError, ValueError):
    pass


class UnsupportedBoundaryOperator(RbfControlError, ValueError):
    pass


class DegenerateStencil(RbfControlError):
    pass


class InconsistentLayout(RbfControlError, ValueError):
    pass


class MissingStateValue(RbfControlError, ValueError):
    pass


class ConditionOverflow(RuntimeWarning):
    """Condition number beyond 1/u of the working precision; results are unreliable."""
