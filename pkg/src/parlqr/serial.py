"""Baseline serial Riccati solver for the unconstrained problem.

One backward dynamic-programming sweep produces state-feedback policies and
quadratic cost-to-go functions; a forward rollout recovers the trajectory
and the multipliers follow from the value-function gradient,
``lam_t = -(Vxx_t x_t + vx1_t)``.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.linalg

from .errors import CholeskyFailure
from .problem import (
    AffinePolicy,
    LqrSolution,
    evaluate_objective,
    kkt_residual,
    rollout,
)

__all__ = ["PlainValueFunction", "backward_pass", "solve"]


@dataclasses.dataclass(frozen=True, eq=False, repr=False)
class PlainValueFunction:
    """Cost-to-go ``1/2 x'Vxx x + vx1'x + const`` in the state alone."""

    Vxx: np.ndarray
    vx1: np.ndarray
    const: float = 0.0


def backward_pass(stages, terminal):
    """Riccati sweep over ``stages`` ending in ``terminal``.

    Returns ``(policies, values)`` where ``values`` has one entry per time
    point including the terminal one.  The control-space Hessian is
    factorized by Cholesky with no regularization: a failure means the
    problem is not strictly convex and raises :class:`CholeskyFailure`.
    """
    T = len(stages)
    Vxx = terminal.Qxx
    vx1 = terminal.qx1
    const = 0.0
    values = [None] * (T + 1)
    values[T] = PlainValueFunction(Vxx, vx1, const)
    policies = [None] * T
    for t in range(T - 1, -1, -1):
        cost, dyn = stages[t]
        Fx, Fu, f1 = dyn.Fx, dyn.Fu, dyn.f1
        VFx = Vxx @ Fx
        VFu = Vxx @ Fu
        w = vx1 + Vxx @ f1
        Mxx = cost.Qxx + Fx.T @ VFx
        Muu = cost.Quu + Fu.T @ VFu
        Mux = cost.Qux + Fu.T @ VFx
        mx1 = cost.qx1 + Fx.T @ w
        mu1 = cost.qu1 + Fu.T @ w
        try:
            L = np.linalg.cholesky(Muu)
        except np.linalg.LinAlgError as exc:
            raise CholeskyFailure(t) from exc
        gains = -scipy.linalg.cho_solve(
            (L, True), np.column_stack([Mux, mu1]), check_finite=False)
        Kx = gains[:, :-1]
        k1 = gains[:, -1]
        policies[t] = AffinePolicy.state_feedback(Kx, k1)
        # drift cost and control offset enter only the constant term
        const = const + 0.5 * f1 @ (Vxx @ f1) + vx1 @ f1 \
            + 0.5 * k1 @ (Muu @ k1) + mu1 @ k1
        Vxx = Mxx + Mux.T @ Kx + Kx.T @ Mux + Kx.T @ (Muu @ Kx)
        Vxx = 0.5 * (Vxx + Vxx.T)
        vx1 = mx1 + Kx.T @ mu1 + (Mux.T + Kx.T @ Muu) @ k1
        values[t] = PlainValueFunction(Vxx, vx1, const)
    return tuple(policies), tuple(values)


def solve(problem):
    """Solve the full problem: backward sweep, rollout, multipliers."""
    policies, values = backward_pass(problem.stages, problem.terminal)
    states, controls = rollout(problem, policies, problem.x_init)
    lambdas = np.empty_like(states)
    for t, value in enumerate(values):
        lambdas[t] = -(value.Vxx @ states[t] + value.vx1)
    solution = LqrSolution(
        states=states,
        controls=controls,
        lambdas=lambdas,
        policies=policies,
        objective=evaluate_objective(problem, states, controls),
        kkt_residual_inf=0.0,
        details=values,
    )
    return dataclasses.replace(solution, kkt_residual_inf=kkt_residual(problem, solution))
