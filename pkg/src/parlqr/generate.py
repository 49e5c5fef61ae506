"""Deterministic random problem generation for tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .problem import LqrProblem, StageCost, StageDynamics, TerminalCost

__all__ = ["generate"]

MAX_SPECTRAL_RADIUS = 1.05


def generate(n, m, T, seed):
    """Random strictly convex problem, reproducible from the seed.

    ``Quu = B B' + I`` for a standard-normal ``B``; the state-cost cross
    term is shrunk until the control-eliminated state cost is positive
    semi-definite; ``Fx`` is rescaled to spectral radius at most 1.05 so
    rollouts stay bounded over long horizons.
    """
    if min(n, m, T) < 1:
        raise ValueError("n, m and T must all be at least 1")
    rng = np.random.default_rng(seed)
    stages = []
    for _ in range(T):
        B = rng.standard_normal((m, m))
        Quu = B @ B.T + np.eye(m)
        C = rng.standard_normal((n, n))
        Qxx = C @ C.T
        Qux = 0.3 * rng.standard_normal((m, n))
        while np.linalg.eigvalsh(
                Qxx - Qux.T @ np.linalg.solve(Quu, Qux)).min() < 0.0:
            Qux *= 0.5
        qx1 = rng.standard_normal(n)
        qu1 = rng.standard_normal(m)
        Fx = rng.standard_normal((n, n))
        rho = float(np.abs(np.linalg.eigvals(Fx)).max())
        if rho > MAX_SPECTRAL_RADIUS:
            Fx *= MAX_SPECTRAL_RADIUS / rho
        Fu = rng.standard_normal((n, m))
        f1 = rng.standard_normal(n)
        stages.append((StageCost(Qxx, Qux, Quu, qx1, qu1),
                       StageDynamics(Fx, Fu, f1)))
    D = rng.standard_normal((n, n))
    terminal = TerminalCost(D @ D.T, rng.standard_normal(n))
    return LqrProblem(stages, terminal, rng.standard_normal(n))
