"""Exception types shared by the solvers."""


class SolverError(Exception):
    """Base class for numerical failures raised by the solvers."""


class CholeskyFailure(SolverError):
    """A control-space Hessian was not positive-definite at some stage."""

    def __init__(self, stage, message=None):
        self.stage = stage
        super().__init__(message or f"Cholesky failed at stage {stage}")


class FactorizationFailure(SolverError):
    """A pivot block of the multiplier normal equations was singular.

    This signals linearly dependent boundary/dynamics constraints, under
    which the Lagrange multipliers of an endpoint-constrained problem are
    not unique.
    """

    def __init__(self, block, message=None):
        self.block = block
        super().__init__(message or f"singular pivot block {block} in normal equations")


class LinkSingular(SolverError):
    """The link-point system could not be factorized."""


class SingularKkt(SolverError):
    """The dense KKT matrix is singular (infeasible or non-convex problem)."""


class Infeasible(SolverError):
    """No trajectory satisfies the endpoint constraints.

    ``residual`` is the infinity norm of the violated feasibility rows;
    ``segment`` identifies the offending sub-problem when raised by the
    partitioned solver.
    """

    def __init__(self, residual, segment=None, message=None):
        self.residual = float(residual)
        self.segment = segment
        if message is None:
            where = "" if segment is None else f" in segment {segment}"
            message = f"endpoint constraints unsatisfiable{where} (residual {residual:.3e})"
        super().__init__(message)
