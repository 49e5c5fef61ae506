"""Endpoint-constrained LQR with solutions explicit in both boundary states.

Solves

    min  cost_T(x_T) + sum_t cost_t(x_t, u_t)
    s.t. x_{t+1} = Fx x_t + Fu u_t + f1,   x_0 = x_init,   x_T = x_term

while keeping every policy, trajectory point and Lagrange multiplier an
affine function of ``(x_init, x_term)``.  The backward sweep carries two
objects: a quadratic cost-to-go in ``(x, x_term)`` and an affine
constraint-to-go collecting the endpoint-constraint rows that future
controls can no longer influence.  At each stage the control is split into
a range-space component (drives the constraint residual to its least-squares
minimum) and a null-space component (minimizes cost among residual
minimizers); the split comes from one rank-revealing SVD of the constraint's
control Jacobian, which also supplies the pseudo-inverse and the residual
projector.

Multipliers are recovered afterwards from the stationarity conditions,
stacked as an overdetermined linear system in the multipliers whose normal
equations have a block-tridiagonal Gram matrix: one factorization with a
``2n+1``-column right-hand side yields all multipliers as affine functions
of the two endpoints.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.linalg

from .errors import CholeskyFailure, FactorizationFailure, Infeasible
from .problem import (
    DEFAULT_TOLERANCES,
    AffinePolicy,
    LqrSolution,
    TerminalCost,
    evaluate_objective,
    kkt_residual,
)

__all__ = [
    "ValueFunction",
    "ConstraintToGo",
    "BackwardResult",
    "TrajectoryMaps",
    "NormalEquations",
    "MultiplierMaps",
    "EndpointAffineSolution",
    "backward_pass",
    "forward_pass",
    "assemble_normal_equations",
    "multiplier_pass",
    "solve_endpoint_affine",
    "solve_endpoint",
]


@dataclasses.dataclass(frozen=True, eq=False, repr=False)
class ValueFunction:
    """Cost-to-go quadratic in the state and the terminal endpoint.

    value(x, z) = 1/2 x'Vxx x + z'Vzx x + 1/2 z'Vzz z + vx1'x + vz1'z + const
    """

    Vxx: np.ndarray
    Vzx: np.ndarray
    Vzz: np.ndarray
    vx1: np.ndarray
    vz1: np.ndarray
    const: float = 0.0

    def gradient_x(self, x, z):
        return self.Vxx @ x + self.Vzx.T @ z + self.vx1

    def gradient_z(self, x, z):
        return self.Vzx @ x + self.Vzz @ z + self.vz1

    def value(self, x, z):
        return float(0.5 * x @ (self.Vxx @ x) + z @ (self.Vzx @ x)
                     + 0.5 * z @ (self.Vzz @ z) + self.vx1 @ x + self.vz1 @ z
                     + self.const)


@dataclasses.dataclass(frozen=True, eq=False, repr=False)
class ConstraintToGo:
    """Affine constraint rows ``Hx x + Hz x_term + h1 = 0`` still pending."""

    Hx: np.ndarray
    Hz: np.ndarray
    h1: np.ndarray

    @property
    def rows(self):
        return self.Hx.shape[0]

    def residual(self, x, z):
        if self.rows == 0:
            return np.zeros(0)
        return self.Hx @ x + self.Hz @ z + self.h1

    @classmethod
    def empty(cls, n):
        return cls(np.zeros((0, n)), np.zeros((0, n)), np.zeros(0))


@dataclasses.dataclass(eq=False, repr=False)
class StageDiagnostics:
    """Worst-case numerical defects accumulated over a backward sweep."""

    basis_defect: float = 0.0       # |Py Py' + Zw Zw' - I|
    projector_defect: float = 0.0   # idempotence defect of the residual projector
    max_rows: int = 0               # largest constraint-to-go row count seen


@dataclasses.dataclass(frozen=True, eq=False, repr=False)
class BackwardResult:
    policies: tuple
    values: tuple
    constraints: tuple
    diagnostics: StageDiagnostics = None

    @property
    def feasibility(self):
        """Constraint rows any ``(x_init, x_term)`` pair must satisfy."""
        return self.constraints[0]


def _compress_rows(Hx, Hz, h1, rank_tol, scale, cert_scale):
    """Reduce constraint rows to a maximal linearly independent set.

    Singular values are thresholded against ``scale``, the magnitude of
    the rows *before* the range-space projection, so directions that the
    projection annihilated in exact arithmetic are dropped instead of
    surviving as roundoff noise.  Any component of ``h1`` outside the
    retained row space is kept as a single zero-coefficient row, an
    infeasibility certificate that propagates to the feasibility triple.
    Rows that are already independent at full scale are returned untouched
    so residual entries keep their original meaning.
    """
    r = Hx.shape[0]
    if r == 0:
        return Hx, Hz, h1
    C = np.concatenate([Hx, Hz], axis=1)
    U, s, _ = np.linalg.svd(C, full_matrices=False)
    threshold = rank_tol * max(scale, s[0] if s.size else 0.0)
    q = int(np.sum(s > threshold))
    if q == r:
        return Hx, Hz, h1
    Uq = U[:, :q]
    n = Hx.shape[1]
    if q:
        body = Uq.T @ np.concatenate([Hx, Hz, h1[:, None]], axis=1)
        Hx_new, Hz_new, h1_new = body[:, :n], body[:, n:2 * n], body[:, 2 * n]
        leftover = h1 - Uq @ (Uq.T @ h1)
    else:
        Hx_new, Hz_new, h1_new = np.zeros((0, n)), np.zeros((0, n)), np.zeros(0)
        leftover = h1
    resid = float(np.linalg.norm(leftover))
    if resid > rank_tol * cert_scale:
        Hx_new = np.concatenate([Hx_new, np.zeros((1, n))], axis=0)
        Hz_new = np.concatenate([Hz_new, np.zeros((1, n))], axis=0)
        h1_new = np.concatenate([h1_new, [resid]])
    return Hx_new, Hz_new, h1_new


def backward_pass(stages, terminal=None, *, terminal_constrained=True,
                  tolerances=DEFAULT_TOLERANCES, collect_diagnostics=False):
    """Backward sweep producing endpoint-conditioned policies.

    ``terminal`` may be None for the pure boundary-value case (zero
    terminal cost).  With ``terminal_constrained=False`` no endpoint rows
    are seeded and the sweep reduces to the plain Riccati recursion.
    Raises :class:`CholeskyFailure` when the cost Hessian restricted to the
    constraint null space is not positive-definite.
    """
    T = len(stages)
    n = stages[0][0].n
    m = stages[0][0].m
    rank_tol = tolerances.rank_tol
    if terminal is None:
        terminal = TerminalCost.zero(n)
    Vxx = terminal.Qxx
    vx1 = terminal.qx1
    Vzx = np.zeros((n, n))
    Vzz = np.zeros((n, n))
    vz1 = np.zeros(n)
    const = 0.0
    if terminal_constrained:
        Hx, Hz, h1 = np.eye(n), -np.eye(n), np.zeros(n)
    else:
        Hx, Hz, h1 = np.zeros((0, n)), np.zeros((0, n)), np.zeros(0)

    values = [None] * (T + 1)
    constraints = [None] * (T + 1)
    policies = [None] * T
    values[T] = ValueFunction(Vxx, Vzx, Vzz, vx1, vz1, const)
    constraints[T] = ConstraintToGo(Hx, Hz, h1)
    diag = StageDiagnostics(max_rows=Hx.shape[0]) if collect_diagnostics else None
    eye_m = np.eye(m)

    for t in range(T - 1, -1, -1):
        cost, dyn = stages[t]
        Fx, Fu, f1 = dyn.Fx, dyn.Fu, dyn.f1
        VFx = Vxx @ Fx
        VFu = Vxx @ Fu
        w = vx1 + Vxx @ f1
        Mxx = cost.Qxx + Fx.T @ VFx
        Muu = cost.Quu + Fu.T @ VFu
        Mux = cost.Qux + Fu.T @ VFx
        Mzx = Vzx @ Fx
        Mzu = Vzx @ Fu
        Mzz = Vzz
        mx1 = cost.qx1 + Fx.T @ w
        mu1 = cost.qu1 + Fu.T @ w
        mz1 = vz1 + Vzx @ f1

        r = Hx.shape[0]
        p = 0
        if r:
            Nx = Hx @ Fx
            Nu = Hx @ Fu
            Nz = Hz
            n1 = Hx @ f1 + h1
            U, s, Vt = np.linalg.svd(Nu)
            # rank judged against the product of the factor norms: entries of
            # Nu that are pure cancellation noise must not be inverted
            nu_scale = float(np.linalg.norm(Hx)) * float(np.linalg.norm(Fu))
            if s.size:
                p = int(np.sum(s > rank_tol * max(nu_scale, s[0])))

        # gains stacked as [Kx | Kz | k1], an m x (2n+1) block
        if p:
            G = (Vt[:p].T / s[:p]) @ U[:, :p].T
            base = G @ np.concatenate([Nx, Nz, n1[:, None]], axis=1)
        else:
            base = np.zeros((m, 2 * n + 1))
        if p < m:
            Zw = Vt[p:].T if p else eye_m
            W = Zw.T @ Muu @ Zw
            try:
                Lw = np.linalg.cholesky(W)
            except np.linalg.LinAlgError as exc:
                raise CholeskyFailure(t) from exc
            C = np.concatenate([Mux, Mzu.T, mu1[:, None]], axis=1)
            if p:
                C = C - Muu @ base
            gains = -(base + Zw @ scipy.linalg.cho_solve(
                (Lw, True), Zw.T @ C, check_finite=False))
        else:
            gains = -base
        Kx = gains[:, :n]
        Kz = gains[:, n:2 * n]
        k1 = gains[:, 2 * n]
        policies[t] = AffinePolicy(Kx, Kz, k1)

        if collect_diagnostics:
            if p:
                Py = Vt[:p].T
                Zfull = Vt[p:].T if p < m else np.zeros((m, 0))
                comp = Py @ Py.T + Zfull @ Zfull.T - eye_m
            else:
                comp = np.zeros((m, m))
            diag.basis_defect = max(diag.basis_defect, float(np.abs(comp).max()))

        if r:
            pre_scale = float(np.linalg.norm(np.concatenate([Nx, Nz], axis=1)))
            cert_scale = max(1.0, float(np.abs(n1).max(initial=0.0)))
            if p:
                Up = U[:, :p]
                stack = np.concatenate([Nx, Nz, n1[:, None]], axis=1)
                stack = stack - Up @ (Up.T @ stack)
                Hx, Hz, h1 = stack[:, :n], stack[:, n:2 * n], stack[:, 2 * n]
                if collect_diagnostics:
                    P = np.eye(r) - Up @ Up.T
                    diag.projector_defect = max(
                        diag.projector_defect, float(np.abs(P @ P - P).max()))
            else:
                Hx, Hz, h1 = Nx, Nz, n1
            Hx, Hz, h1 = _compress_rows(Hx, Hz, h1, rank_tol, pre_scale, cert_scale)

        const = const + 0.5 * f1 @ (Vxx @ f1) + vx1 @ f1 \
            + 0.5 * k1 @ (Muu @ k1) + mu1 @ k1
        MuuKx = Muu @ Kx
        MuuKz = Muu @ Kz
        MuxTKx = Mux.T @ Kx
        Vxx = Mxx + MuxTKx + MuxTKx.T + Kx.T @ MuuKx
        Vxx = 0.5 * (Vxx + Vxx.T)
        Vzx = Mzx + Mzu @ Kx + Kz.T @ Mux + Kz.T @ MuuKx
        Vzz = Mzz + Mzu @ Kz + (Mzu @ Kz).T + Kz.T @ MuuKz
        Vzz = 0.5 * (Vzz + Vzz.T)
        vx1 = mx1 + Kx.T @ mu1 + (Mux.T + Kx.T @ Muu) @ k1
        vz1 = mz1 + Mzu @ k1 + Kz.T @ mu1 + Kz.T @ (Muu @ k1)

        values[t] = ValueFunction(Vxx, Vzx, Vzz, vx1, vz1, const)
        constraints[t] = ConstraintToGo(Hx, Hz, h1)
        if collect_diagnostics:
            diag.max_rows = max(diag.max_rows, Hx.shape[0])

    return BackwardResult(tuple(policies), tuple(values), tuple(constraints), diag)


@dataclasses.dataclass(frozen=True, eq=False, repr=False)
class TrajectoryMaps:
    """States and controls as affine maps of ``(x_init, x_term)``.

    x_t = Ra[t] x_init + Rz[t] x_term + r1[t]
    u_t = Sa[t] x_init + Sz[t] x_term + s1[t]
    """

    Ra: np.ndarray
    Rz: np.ndarray
    r1: np.ndarray
    Sa: np.ndarray
    Sz: np.ndarray
    s1: np.ndarray

    def states(self, x_init, x_term):
        return self.Ra @ x_init + self.Rz @ x_term + self.r1

    def controls(self, x_init, x_term):
        return self.Sa @ x_init + self.Sz @ x_term + self.s1


def forward_pass(policies, stages):
    """Propagate the policies to affine state/control maps."""
    T = len(stages)
    n = stages[0][0].n
    m = stages[0][0].m
    Ra = np.empty((T + 1, n, n))
    Rz = np.empty((T + 1, n, n))
    r1 = np.empty((T + 1, n))
    Sa = np.empty((T, m, n))
    Sz = np.empty((T, m, n))
    s1 = np.empty((T, m))
    Ra[0] = np.eye(n)
    Rz[0] = 0.0
    r1[0] = 0.0
    for t in range(T):
        pol = policies[t]
        _, dyn = stages[t]
        Sa[t] = pol.Kx @ Ra[t]
        Sz[t] = pol.Kx @ Rz[t] + pol.Kz
        s1[t] = pol.Kx @ r1[t] + pol.k1
        Ra[t + 1] = dyn.Fx @ Ra[t] + dyn.Fu @ Sa[t]
        Rz[t + 1] = dyn.Fx @ Rz[t] + dyn.Fu @ Sz[t]
        r1[t + 1] = dyn.Fx @ r1[t] + dyn.Fu @ s1[t] + dyn.f1
    return TrajectoryMaps(Ra, Rz, r1, Sa, Sz, s1)


@dataclasses.dataclass(frozen=True, eq=False, repr=False)
class NormalEquations:
    """Gram system of the stacked stationarity conditions.

    Block-tridiagonal, symmetric positive-definite when the problem's
    constraints are linearly independent.  Unknown blocks are
    ``lam_0 .. lam_T, mu_T``; ``diag`` holds the diagonal blocks
    (identity, then ``I + Fx Fx' + Fu Fu'`` per stage, then identity),
    ``sub`` the subdiagonal blocks, and ``rhs`` the right-hand side with
    one column per ``x_init`` component, one per ``x_term`` component and a
    final constant column.
    """

    diag: np.ndarray
    sub: np.ndarray
    rhs: np.ndarray


def assemble_normal_equations(stages, terminal, maps):
    """Form the multiplier normal equations with an affine right-hand side."""
    T = len(stages)
    n = stages[0][0].n
    if terminal is None:
        terminal = TerminalCost.zero(n)
    width = 2 * n + 1
    eye_n = np.eye(n)

    # stationarity right-hand rows, affine in (x_init, x_term):
    # bx[t] = -(Qxx x_t + Qux'u_t + qx1), bu[t] = -(Qux x_t + Quu u_t + qu1)
    X = np.concatenate(
        [maps.Ra, maps.Rz, maps.r1[:, :, None]], axis=2)       # (T+1, n, width)
    Uc = np.concatenate(
        [maps.Sa, maps.Sz, maps.s1[:, :, None]], axis=2)       # (T, m, width)
    bx = np.empty((T + 1, n, width))
    bu = np.empty((T, stages[0][0].m, width))
    for t, (cost, _) in enumerate(stages):
        bx[t] = -(cost.Qxx @ X[t] + cost.Qux.T @ Uc[t])
        bx[t, :, -1] -= cost.qx1
        bu[t] = -(cost.Qux @ X[t] + cost.Quu @ Uc[t])
        bu[t, :, -1] -= cost.qu1
    bx[T] = -(terminal.Qxx @ X[T])
    bx[T, :, -1] -= terminal.qx1

    diag = np.empty((T + 2, n, n))
    sub = np.empty((T + 1, n, n))
    rhs = np.empty((T + 2, n, width))
    diag[0] = eye_n
    diag[T + 1] = eye_n
    rhs[0] = bx[0]
    for t, (_, dyn) in enumerate(stages):
        diag[t + 1] = eye_n + dyn.Fx @ dyn.Fx.T + dyn.Fu @ dyn.Fu.T
        sub[t] = -dyn.Fx
        rhs[t + 1] = -dyn.Fx @ bx[t] - dyn.Fu @ bu[t] + bx[t + 1]
    sub[T] = eye_n
    rhs[T + 1] = bx[T]
    return NormalEquations(diag, sub, rhs)


def solve_block_tridiagonal(diag, sub, rhs):
    """Solve a symmetric positive-definite block-tridiagonal system.

    ``sub[i]`` couples block row ``i+1`` to block row ``i``; the
    superdiagonal is its transpose.  Block Cholesky elimination without
    pivoting across blocks; raises :class:`FactorizationFailure` when a
    pivot block is not positive-definite.
    """
    K = len(diag)
    X = [None] * K
    d = [None] * K
    P = diag[0]
    for i in range(K):
        if i:
            P = diag[i] - sub[i - 1] @ X[i - 1]
        try:
            L = np.linalg.cholesky(P)
        except np.linalg.LinAlgError as exc:
            raise FactorizationFailure(i) from exc
        factor = (L, True)
        g = rhs[i] if not i else rhs[i] - sub[i - 1] @ d[i - 1]
        d[i] = scipy.linalg.cho_solve(factor, g, check_finite=False)
        if i < K - 1:
            X[i] = scipy.linalg.cho_solve(factor, sub[i].T, check_finite=False)
    out = [None] * K
    out[K - 1] = d[K - 1]
    for i in range(K - 2, -1, -1):
        out[i] = d[i] - X[i] @ out[i + 1]
    return np.array(out)


@dataclasses.dataclass(frozen=True, eq=False, repr=False)
class MultiplierMaps:
    """All multipliers as affine maps of ``(x_init, x_term)``.

    lam_t = La[t] x_init + Lz[t] x_term + l1[t];  mu = Ea x_init + Ez x_term + e1.
    """

    La: np.ndarray
    Lz: np.ndarray
    l1: np.ndarray
    Ea: np.ndarray
    Ez: np.ndarray
    e1: np.ndarray

    def lambdas(self, x_init, x_term):
        return self.La @ x_init + self.Lz @ x_term + self.l1

    def mu(self, x_init, x_term):
        return self.Ea @ x_init + self.Ez @ x_term + self.e1


def multiplier_pass(stages, terminal, maps):
    """Recover every multiplier from the stationarity normal equations.

    Raises :class:`FactorizationFailure` when the boundary and dynamics
    constraints are linearly dependent (the multipliers are then not
    unique and the Gram matrix is singular).
    """
    n = stages[0][0].n
    eqs = assemble_normal_equations(stages, terminal, maps)
    sol = solve_block_tridiagonal(eqs.diag, eqs.sub, eqs.rhs)
    lam = sol[:-1]
    mu = sol[-1]
    return MultiplierMaps(
        La=lam[:, :, :n], Lz=lam[:, :, n:2 * n], l1=lam[:, :, 2 * n],
        Ea=mu[:, :n], Ez=mu[:, n:2 * n], e1=mu[:, 2 * n])


@dataclasses.dataclass(frozen=True, eq=False, repr=False)
class EndpointAffineSolution:
    """Solution of the endpoint-constrained problem in symbolic form.

    ``multipliers`` is None when the multiplier Gram system was singular
    (linearly dependent constraints); :meth:`evaluate` then falls back to
    value-function gradients plus a backward stationarity recursion, which
    selects the multiplier representative consistent with the relaxed
    value function.
    """

    stages: tuple
    terminal: TerminalCost
    policies: tuple
    values: tuple
    constraints: tuple
    maps: TrajectoryMaps
    multipliers: MultiplierMaps
    diagnostics: StageDiagnostics = None

    @property
    def feasibility(self):
        return self.constraints[0]

    def feasibility_residual(self, x_init, x_term):
        res = self.feasibility.residual(np.asarray(x_init, float),
                                        np.asarray(x_term, float))
        return float(np.abs(res).max()) if res.size else 0.0

    def evaluate(self, x_init, x_term, tolerances=DEFAULT_TOLERANCES):
        """Numeric solution at concrete endpoints.

        Raises :class:`Infeasible` when the feasibility rows reject the
        endpoint pair.
        """
        x_init = np.asarray(x_init, dtype=float)
        x_term = np.asarray(x_term, dtype=float)
        residual = self.feasibility_residual(x_init, x_term)
        scale = 1.0 + float(np.abs(x_init).max(initial=0.0)) \
            + float(np.abs(x_term).max(initial=0.0))
        if residual > tolerances.feas_tol * scale:
            raise Infeasible(residual)
        states = self.maps.states(x_init, x_term)
        controls = self.maps.controls(x_init, x_term)
        if self.multipliers is not None:
            lambdas = self.multipliers.lambdas(x_init, x_term)
            mu = self.multipliers.mu(x_init, x_term)
        else:
            lambdas, mu = gradient_duals(
                self.stages, self.terminal, self.values, states, controls,
                x_init, x_term)
        problem_like = _ProblemView(self.stages, self.terminal, x_init)
        solution = LqrSolution(
            states=states,
            controls=controls,
            lambdas=lambdas,
            policies=self.policies,
            objective=evaluate_objective(problem_like, states, controls),
            kkt_residual_inf=0.0,
            mu=mu,
            x_term=x_term,
        )
        return dataclasses.replace(
            solution, kkt_residual_inf=kkt_residual(problem_like, solution))


class _ProblemView:
    """Minimal problem-shaped adapter for cost and residual evaluation."""

    def __init__(self, stages, terminal, x_init):
        self.stages = stages
        self.terminal = terminal
        self.x_init = np.asarray(x_init, dtype=float)

    @property
    def n(self):
        return self.stages[0][0].n

    @property
    def m(self):
        return self.stages[0][0].m

    @property
    def T(self):
        return len(self.stages)


def gradient_duals(stages, terminal, values, states, controls, x_init, x_term):
    """Multipliers from value-function gradients and a stationarity recursion.

    The endpoint multiplier is minus the gradient of the initial cost-to-go
    with respect to the endpoint; the dynamics multipliers then follow the
    stationarity recursion backwards.  Valid for any reachability pattern;
    in degenerate directions it picks the representative with no response
    to unreachable endpoint movement.
    """
    if terminal is None:
        terminal = TerminalCost.zero(stages[0][0].n)
    v0 = values[0]
    mu = -(v0.Vzx @ x_init + v0.Vzz @ x_term + v0.vz1)
    T = len(stages)
    lambdas = np.empty((T + 1, stages[0][0].n))
    lambdas[T] = -(terminal.Qxx @ states[T] + terminal.qx1) - mu
    for t in range(T - 1, -1, -1):
        cost, dyn = stages[t]
        lambdas[t] = dyn.Fx.T @ lambdas[t + 1] - (
            cost.Qxx @ states[t] + cost.Qux.T @ controls[t] + cost.qx1)
    return lambdas, mu


def solve_endpoint_affine(problem, tolerances=DEFAULT_TOLERANCES,
                          collect_diagnostics=False, require_multipliers=False):
    """Run all passes and return the solution as affine maps.

    Multiplier maps are only computed when the feasibility triple is empty:
    nonzero feasibility rows mean the boundary constraints are linearly
    dependent, the Gram system is singular and the multipliers are not
    unique, so :meth:`EndpointAffineSolution.evaluate` uses value-function
    gradients instead.
    """
    bw = backward_pass(problem.stages, problem.terminal,
                       tolerances=tolerances,
                       collect_diagnostics=collect_diagnostics)
    maps = forward_pass(bw.policies, problem.stages)
    mult = None
    if bw.feasibility.rows == 0:
        mult = multiplier_pass(problem.stages, problem.terminal, maps)
    elif require_multipliers:
        raise FactorizationFailure(
            None, "boundary constraints are linearly dependent "
            f"({bw.feasibility.rows} unreachable endpoint rows)")
    return EndpointAffineSolution(
        stages=problem.stages,
        terminal=problem.terminal,
        policies=bw.policies,
        values=bw.values,
        constraints=bw.constraints,
        maps=maps,
        multipliers=mult,
        diagnostics=bw.diagnostics,
    )


def solve_endpoint(problem, x_init, x_term, tolerances=DEFAULT_TOLERANCES):
    """Solve the endpoint-constrained problem at concrete endpoints.

    ``problem.x_init`` is ignored in favor of the ``x_init`` argument.
    Feasibility of the endpoint pair is checked before any multiplier
    work; an unreachable endpoint raises :class:`Infeasible` carrying the
    residual of the violated rows.
    """
    x_init = np.asarray(x_init, dtype=float)
    x_term = np.asarray(x_term, dtype=float)
    bw = backward_pass(problem.stages, problem.terminal, tolerances=tolerances)
    res = bw.feasibility.residual(x_init, x_term)
    residual = float(np.abs(res).max()) if res.size else 0.0
    scale = 1.0 + float(np.abs(x_init).max(initial=0.0)) \
        + float(np.abs(x_term).max(initial=0.0))
    if residual > tolerances.feas_tol * scale:
        raise Infeasible(residual)
    maps = forward_pass(bw.policies, problem.stages)
    mult = None
    if bw.feasibility.rows == 0:
        mult = multiplier_pass(problem.stages, problem.terminal, maps)
    affine = EndpointAffineSolution(
        stages=problem.stages,
        terminal=problem.terminal,
        policies=bw.policies,
        values=bw.values,
        constraints=bw.constraints,
        maps=maps,
        multipliers=mult,
        diagnostics=bw.diagnostics,
    )
    return affine.evaluate(x_init, x_term, tolerances)
