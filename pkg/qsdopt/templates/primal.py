from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from qsdopt.errors import CountMismatch, NumericalFailure
from qsdopt.operators import HermitianOperator, StateEnsemble, zeros
from qsdopt.problem import BayesCost, DiscriminationProblem

if TYPE_CHECKING:
    from qsdopt.config import SolverConfig


def build_bayes(
    ensemble: StateEnsemble,
    cost: BayesCost | None = None,
    minimum_error: bool = False,
) -> DiscriminationProblem:
    count = len(ensemble)
    if cost is None:
        if not minimum_error:
            raise ValueError("build_bayes needs a cost matrix unless minimum_error is set.")
        cost = BayesCost.minimum_error(count)
    if cost.R != count:
        raise CountMismatch(f"Cost matrix is {cost.R}x{cost.R} but the ensemble has {count} states.")

    objective = []
    for m in range(count):
        total = np.zeros((ensemble.dim, ensemble.dim), dtype=complex)
        for r in range(count):
            total = total + ensemble.priors[r] * cost.cost_matrix[m, r] * ensemble.states[r].op.matrix
        objective.append(HermitianOperator(-total))
    return DiscriminationProblem(
        dim=ensemble.dim,
        objective_ops=tuple(objective),
        outcome_labels=tuple(f"guess:{r}" for r in range(count)),
        value_offset=1.0 if minimum_error else 0.0,
    )


def build_minimum_error(ensemble: StateEnsemble) -> DiscriminationProblem:
    return build_bayes(ensemble, minimum_error=True)


def build_error_margin(ensemble: StateEnsemble, epsilon: float) -> DiscriminationProblem:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon!r}")
    count = len(ensemble)
    weighted = [ensemble.weighted(r) for r in range(count)]
    return DiscriminationProblem(
        dim=ensemble.dim,
        objective_ops=(*weighted, zeros(ensemble.dim)),
        constraint_ops=((*(-op for op in weighted), -ensemble.g_hat),),
        constraint_bounds=(epsilon - 1.0,),
        outcome_labels=(*(f"guess:{r}" for r in range(count)), "inconclusive"),
        constraint_labels=("margin",),
    )


def build_bounded_inconclusive(ensemble: StateEnsemble, p: float, q: float) -> DiscriminationProblem:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p!r}")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q!r}")
    count = len(ensemble)
    blank = zeros(ensemble.dim)
    rows = []
    for j in range(count):
        rows.append(tuple(-ensemble.states[j].op if m == j else blank for m in range(count + 1)))
    rows.append(tuple(-ensemble.g_hat if m == count else blank for m in range(count + 1)))
    return DiscriminationProblem(
        dim=ensemble.dim,
        objective_ops=(*(ensemble.weighted(r) for r in range(count)), blank),
        constraint_ops=tuple(rows),
        constraint_bounds=(*(-q for _ in range(count)), -p),
        outcome_labels=(*(f"guess:{r}" for r in range(count)), "inconclusive"),
        constraint_labels=(*(f"success:{r}" for r in range(count)), "failure"),
    )


def optimal_inconclusive_value(ensemble: StateEnsemble, p: float, config: SolverConfig | None = None) -> float:
    """Average success of an optimal inconclusive measurement at failure p.

    The bounded-inconclusive problem with the same p is infeasible for any q
    above this value.
    """
    from qsdopt.solver import solve_problem

    result = solve_problem(build_bounded_inconclusive(ensemble, p=p, q=0.0), config)
    if result.status != "Optimal":
        raise NumericalFailure(f"Optimal inconclusive solve ended with status {result.status}")
    return result.primal_value
