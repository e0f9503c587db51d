from __future__ import annotations

from collections.abc import Sequence

from qsdopt.errors import CountMismatch, DimMismatch
from qsdopt.operators import DensityOperator, StateEnsemble, zeros
from qsdopt.problem import BayesCost, MinimaxProblem


def build_minimax_bayes(states: Sequence[DensityOperator], cost: BayesCost | None = None) -> MinimaxProblem:
    count = len(states)
    _require_states(states)
    cost = cost or BayesCost.minimum_error(count)
    if cost.R != count:
        raise CountMismatch(f"Cost matrix is {cost.R}x{cost.R} but {count} states were given.")
    criteria = tuple(
        tuple(-float(cost.cost_matrix[m, k]) * states[k].op for m in range(count))
        for k in range(count)
    )
    return MinimaxProblem(
        dim=states[0].dim,
        criterion_ops=criteria,
        offsets=tuple(0.0 for _ in range(count)),
        outcome_labels=tuple(f"guess:{r}" for r in range(count)),
        criterion_labels=tuple(f"state:{k}" for k in range(count)),
    )


def build_inconclusive_minimax(states: Sequence[DensityOperator], p: float) -> MinimaxProblem:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p!r}")
    count = len(states)
    _require_states(states)
    blank = zeros(states[0].dim)
    criteria = tuple(
        tuple(states[k].op if m in (k, count) else blank for m in range(count + 1))
        for k in range(count)
    )
    rows = tuple(
        tuple(states[j].op if m == count else blank for m in range(count + 1))
        for j in range(count)
    )
    return MinimaxProblem(
        dim=states[0].dim,
        criterion_ops=criteria,
        offsets=tuple(0.0 for _ in range(count)),
        constraint_ops=rows,
        constraint_bounds=tuple(p for _ in range(count)),
        outcome_labels=(*(f"guess:{r}" for r in range(count)), "inconclusive"),
        constraint_labels=tuple(f"failure:{j}" for j in range(count)),
        criterion_labels=tuple(f"state:{k}" for k in range(count)),
    )


def build_plural_sets(sets: Sequence[StateEnsemble]) -> MinimaxProblem:
    if len(sets) < 1:
        raise ValueError("build_plural_sets needs at least one state set.")
    count = len(sets[0])
    dim = sets[0].dim
    for ensemble in sets:
        if len(ensemble) != count:
            raise CountMismatch("Every state set must contain the same number of states.")
        if ensemble.dim != dim:
            raise DimMismatch("Every state set must share one dimension.")
    criteria = tuple(tuple(ensemble.weighted(m) for m in range(count)) for ensemble in sets)
    return MinimaxProblem(
        dim=dim,
        criterion_ops=criteria,
        offsets=tuple(0.0 for _ in sets),
        outcome_labels=tuple(f"guess:{r}" for r in range(count)),
        criterion_labels=tuple(f"set:{k}" for k in range(len(sets))),
    )


def _require_states(states: Sequence[DensityOperator]) -> None:
    if not states:
        raise ValueError("At least one state is required.")
    dim = states[0].dim
    if any(state.dim != dim for state in states):
        raise DimMismatch("All states must share one dimension.")
