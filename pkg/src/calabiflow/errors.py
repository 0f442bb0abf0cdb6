"""Exception hierarchy.

Everything that the command line maps to "numerical failure" (exit code 2)
derives from :class:`NumericalError`.
"""


class CalabiFlowError(Exception):
    """Base class for all package errors."""


class NumericalError(CalabiFlowError):
    """A computation could not be carried out on the given data."""


class UnsupportedOrderError(CalabiFlowError, ValueError):
    pass


class NonFiniteSampleError(CalabiFlowError, ValueError):
    def __init__(self, point, value):
        self.point = tuple(float(p) for p in point)
        self.value = value
        super().__init__(f"non-finite sample {value!r} at grid point {self.point}")


class AliasedModeError(CalabiFlowError, ValueError):
    pass


class PreconditionError(CalabiFlowError, ValueError):
    pass


class ConvexityError(NumericalError):
    """Hessian lost positive definiteness at some grid node."""

    def __init__(self, point, eig_min):
        self.point = tuple(float(p) for p in point)
        self.eig_min = float(eig_min)
        super().__init__(
            f"convexity lost: eig_min={self.eig_min:.6g} at x={self.point}"
        )


class FormulaAnomalyError(NumericalError):
    def __init__(self, point, value):
        self.point = tuple(float(p) for p in point)
        self.value = float(value)
        super().__init__(
            f"|Rm|^2 summand is {self.value:.6g} < 0 at x={self.point}"
        )


class NonConvergenceError(NumericalError):
    def __init__(self, node, residual):
        self.node = tuple(float(p) for p in node)
        self.residual = float(residual)
        super().__init__(
            f"Newton did not converge at node {self.node} "
            f"(residual {self.residual:.3g})"
        )


class StepRejectedError(NumericalError):
    """A single time step produced a non-convex or non-finite state."""


class StiffnessError(NumericalError):
    """Step size fell below ``dt_min`` after repeated rejections."""

    def __init__(self, message, state=None, trace=None):
        super().__init__(message)
        self.state = state
        self.trace = trace


class BlowupSuspectedError(NumericalError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NothingToBlowUpError(NumericalError):
    pass


class InsufficientSnapshotsError(CalabiFlowError, ValueError):
    pass
