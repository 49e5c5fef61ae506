"""Build a small tracking problem by hand and solve it serially.

A two-state system is driven toward the origin under a quadratic cost.
The backward sweep returns per-stage feedback gains and value functions;
the dense KKT factorization cross-checks the result.
"""

import numpy as np

import parlqr

n, m, T = 2, 1, 30
dt = 0.1

cost = parlqr.StageCost(
    Qxx=np.diag([4.0, 1.0]),
    Qux=np.zeros((m, n)),
    Quu=[[0.5]],
    qx1=np.zeros(n),
    qu1=np.zeros(m),
)
dynamics = parlqr.StageDynamics(
    Fx=[[1.0, dt], [0.0, 1.0]],
    Fu=[[0.0], [dt]],
    f1=np.zeros(n),
)
terminal = parlqr.TerminalCost(Qxx=10.0 * np.eye(n), qx1=np.zeros(n))
problem = parlqr.LqrProblem([(cost, dynamics)] * T, terminal, x_init=[2.0, 0.0])

report = parlqr.validate(problem)
print("validation:", "ok" if report.ok else report.errors)

solution = parlqr.solve_serial(problem)
print(f"objective          : {solution.objective:.6f}")
print(f"stationarity resid : {solution.kkt_residual_inf:.2e}")
print(f"first feedback gain: {solution.policies[0].Kx.ravel()}")
print(f"final state        : {solution.states[-1]}")

oracle = parlqr.solve_dense(problem)
gap = np.abs(solution.states - oracle.states).max()
print(f"deviation from dense KKT solve: {gap:.2e}")
