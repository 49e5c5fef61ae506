"""JSON reading and writing for problems and solutions.

A problem file is a JSON object with fields ``n``, ``m``, ``T``,
``x_init`` (length-n array), ``stages`` (length-T array of objects with
``Qxx``, ``Qux``, ``Quu``, ``qx1``, ``qu1``, ``Fx``, ``Fu``, ``f1``;
matrices as arrays of row arrays) and ``terminal`` (``Qxx``, ``qx1``).
Numbers are IEEE-754 doubles rendered in full round-trip precision.
"""

from __future__ import annotations

import json

import numpy as np

from .problem import LqrProblem, StageCost, StageDynamics, TerminalCost

__all__ = [
    "problem_to_dict",
    "problem_from_dict",
    "save_problem",
    "load_problem",
    "solution_to_dict",
    "save_solution",
]


def _rows(a):
    return np.asarray(a, dtype=float).tolist()


def problem_to_dict(problem):
    stages = []
    for cost, dyn in problem.stages:
        stages.append({
            "Qxx": _rows(cost.Qxx), "Qux": _rows(cost.Qux), "Quu": _rows(cost.Quu),
            "qx1": _rows(cost.qx1), "qu1": _rows(cost.qu1),
            "Fx": _rows(dyn.Fx), "Fu": _rows(dyn.Fu), "f1": _rows(dyn.f1),
        })
    return {
        "n": problem.n,
        "m": problem.m,
        "T": problem.T,
        "x_init": _rows(problem.x_init),
        "stages": stages,
        "terminal": {"Qxx": _rows(problem.terminal.Qxx),
                     "qx1": _rows(problem.terminal.qx1)},
    }


def problem_from_dict(data):
    stages = []
    for raw in data["stages"]:
        cost = StageCost(raw["Qxx"], raw["Qux"], raw["Quu"], raw["qx1"], raw["qu1"])
        dyn = StageDynamics(raw["Fx"], raw["Fu"], raw["f1"])
        stages.append((cost, dyn))
    terminal = TerminalCost(data["terminal"]["Qxx"], data["terminal"]["qx1"])
    problem = LqrProblem(stages, terminal, data["x_init"])
    for field in ("n", "m", "T"):
        if field in data and int(data[field]) != getattr(problem, field):
            raise ValueError(
                f"declared {field}={data[field]} does not match the arrays "
                f"({getattr(problem, field)})")
    return problem


def save_problem(problem, path):
    with open(path, "w") as fh:
        json.dump(problem_to_dict(problem), fh)
        fh.write("\n")


def load_problem(path):
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


def solution_to_dict(solution, solver=None, timing_seconds=None):
    out = {
        "objective": solution.objective,
        "kkt_residual": solution.kkt_residual_inf,
        "states": _rows(solution.states),
        "controls": _rows(solution.controls),
        "multipliers": _rows(solution.lambdas),
    }
    if solution.mu is not None:
        out["terminal_multiplier"] = _rows(solution.mu)
    if solver is not None:
        out["solver"] = solver
    if timing_seconds is not None:
        out["timing_seconds"] = timing_seconds
    return out


def save_solution(solution, path, solver=None, timing_seconds=None):
    with open(path, "w") as fh:
        json.dump(solution_to_dict(solution, solver, timing_seconds), fh)
        fh.write("\n")
