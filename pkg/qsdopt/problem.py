from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

from qsdopt.errors import DimMismatch, OutcomeCountMismatch
from qsdopt.models import FeasibilityReport
from qsdopt.operators import (
    TAU_COMP,
    TAU_PSD,
    HermitianOperator,
    Povm,
    StateEnsemble,
    completeness_residual,
    psd_violation,
    trace_pair,
)

ConstraintRelation = Literal["<=", "=="]
OutcomeLike = Povm | Sequence[HermitianOperator]


@dataclass(frozen=True, slots=True, eq=False)
class BayesCost:
    cost_matrix: np.ndarray

    def __post_init__(self) -> None:
        matrix = np.array(self.cost_matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Cost matrix must be square, got shape {matrix.shape}")
        if np.any(matrix < 0.0):
            raise ValueError("Bayes cost entries must be nonnegative.")
        matrix.flags.writeable = False
        object.__setattr__(self, "cost_matrix", matrix)

    @property
    def R(self) -> int:
        return int(self.cost_matrix.shape[0])

    @classmethod
    def minimum_error(cls, count: int) -> BayesCost:
        return cls(np.ones((count, count)) - np.eye(count))


@dataclass(frozen=True, slots=True, eq=False)
class ConstraintRow:
    ops: tuple[HermitianOperator, ...]
    bound: float
    relation: ConstraintRelation = "<="
    label: str = ""


@dataclass(frozen=True, slots=True, eq=False)
class DiscriminationProblem:
    dim: int
    objective_ops: tuple[HermitianOperator, ...]
    constraint_ops: tuple[tuple[HermitianOperator, ...], ...] = ()
    constraint_bounds: tuple[float, ...] = ()
    outcome_labels: tuple[str, ...] = ()
    constraint_labels: tuple[str, ...] = ()
    value_offset: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "objective_ops", tuple(self.objective_ops))
        object.__setattr__(self, "constraint_ops", tuple(tuple(row) for row in self.constraint_ops))
        object.__setattr__(self, "constraint_bounds", tuple(float(b) for b in self.constraint_bounds))
        object.__setattr__(self, "outcome_labels", tuple(self.outcome_labels))
        object.__setattr__(self, "constraint_labels", tuple(self.constraint_labels))
        _validate_shapes(self.dim, len(self.objective_ops), [self.objective_ops], self.constraint_ops, self.constraint_bounds)
        if self.outcome_labels and len(self.outcome_labels) != self.M:
            raise OutcomeCountMismatch("outcome_labels must have one entry per outcome.")
        if self.constraint_labels and len(self.constraint_labels) != self.J:
            raise OutcomeCountMismatch("constraint_labels must have one entry per constraint row.")

    @property
    def M(self) -> int:
        return len(self.objective_ops)

    @property
    def J(self) -> int:
        return len(self.constraint_ops)

    def constraint_label(self, row: int) -> str:
        return self.constraint_labels[row] if self.constraint_labels else f"row{row}"

    def outcome_label(self, outcome: int) -> str:
        return self.outcome_labels[outcome] if self.outcome_labels else f"outcome{outcome}"


@dataclass(frozen=True, slots=True, eq=False)
class MinimaxProblem:
    dim: int
    criterion_ops: tuple[tuple[HermitianOperator, ...], ...]
    offsets: tuple[float, ...]
    constraint_ops: tuple[tuple[HermitianOperator, ...], ...] = ()
    constraint_bounds: tuple[float, ...] = ()
    outcome_labels: tuple[str, ...] = ()
    constraint_labels: tuple[str, ...] = ()
    criterion_labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "criterion_ops", tuple(tuple(row) for row in self.criterion_ops))
        object.__setattr__(self, "offsets", tuple(float(d) for d in self.offsets))
        object.__setattr__(self, "constraint_ops", tuple(tuple(row) for row in self.constraint_ops))
        object.__setattr__(self, "constraint_bounds", tuple(float(b) for b in self.constraint_bounds))
        object.__setattr__(self, "outcome_labels", tuple(self.outcome_labels))
        object.__setattr__(self, "constraint_labels", tuple(self.constraint_labels))
        object.__setattr__(self, "criterion_labels", tuple(self.criterion_labels))
        if not self.criterion_ops:
            raise OutcomeCountMismatch("Minimax problem needs at least one criterion.")
        if len(self.offsets) != self.K:
            raise OutcomeCountMismatch(f"Expected {self.K} offsets, got {len(self.offsets)}")
        _validate_shapes(self.dim, len(self.criterion_ops[0]), self.criterion_ops, self.constraint_ops, self.constraint_bounds)
        if self.criterion_labels and len(self.criterion_labels) != self.K:
            raise OutcomeCountMismatch("criterion_labels must have one entry per criterion.")

    @property
    def M(self) -> int:
        return len(self.criterion_ops[0])

    @property
    def K(self) -> int:
        return len(self.criterion_ops)

    @property
    def J(self) -> int:
        return len(self.constraint_ops)

    def criterion_label(self, k: int) -> str:
        return self.criterion_labels[k] if self.criterion_labels else f"criterion{k}"

    def constraint_label(self, row: int) -> str:
        return self.constraint_labels[row] if self.constraint_labels else f"row{row}"

    def outcome_label(self, outcome: int) -> str:
        return self.outcome_labels[outcome] if self.outcome_labels else f"outcome{outcome}"

    def weighted_problem(self, mu: Sequence[float]) -> DiscriminationProblem:
        weights = [float(w) for w in mu]
        if len(weights) != self.K:
            raise OutcomeCountMismatch(f"Expected {self.K} weights, got {len(weights)}")
        objective = []
        for m in range(self.M):
            total = np.zeros((self.dim, self.dim), dtype=complex)
            for k, weight in enumerate(weights):
                total = total + weight * self.criterion_ops[k][m].matrix
            objective.append(HermitianOperator(total))
        return DiscriminationProblem(
            dim=self.dim,
            objective_ops=tuple(objective),
            constraint_ops=self.constraint_ops,
            constraint_bounds=self.constraint_bounds,
            outcome_labels=self.outcome_labels,
            constraint_labels=self.constraint_labels,
        )

    def feasible_set(self) -> DiscriminationProblem:
        zero = HermitianOperator(np.zeros((self.dim, self.dim), dtype=complex))
        return DiscriminationProblem(
            dim=self.dim,
            objective_ops=tuple(zero for _ in range(self.M)),
            constraint_ops=self.constraint_ops,
            constraint_bounds=self.constraint_bounds,
            outcome_labels=self.outcome_labels,
            constraint_labels=self.constraint_labels,
        )


@dataclass(frozen=True, slots=True)
class OutcomeStatistics:
    success: float
    error: float
    failure: float


def objective_value(problem: DiscriminationProblem, povm: OutcomeLike) -> float:
    outcomes = outcome_operators(problem.dim, problem.M, povm)
    return sum(trace_pair(c, pi) for c, pi in zip(problem.objective_ops, outcomes))


def criterion_values(problem: MinimaxProblem, povm: OutcomeLike) -> list[float]:
    outcomes = outcome_operators(problem.dim, problem.M, povm)
    return [
        sum(trace_pair(c, pi) for c, pi in zip(row, outcomes)) + offset
        for row, offset in zip(problem.criterion_ops, problem.offsets)
    ]


def constraint_values(problem: DiscriminationProblem | MinimaxProblem, povm: OutcomeLike) -> list[float]:
    outcomes = outcome_operators(problem.dim, problem.M, povm)
    return [sum(trace_pair(a, pi) for a, pi in zip(row, outcomes)) for row in problem.constraint_ops]


def is_feasible(
    problem: DiscriminationProblem | MinimaxProblem,
    povm: OutcomeLike,
    tol: float = TAU_COMP,
) -> FeasibilityReport:
    outcomes = outcome_operators(problem.dim, problem.M, povm)
    psd = psd_violation(outcomes)
    comp = completeness_residual(outcomes)
    values = constraint_values(problem, outcomes)
    slacks = [b - v for b, v in zip(problem.constraint_bounds, values)]
    labels = problem.constraint_labels or tuple(f"row{j}" for j in range(problem.J))
    violated = [f"{labels[j]} (slack {slack:.3e})" for j, slack in enumerate(slacks) if slack < -tol]
    feasible = psd <= TAU_PSD and comp <= TAU_COMP and not violated
    return FeasibilityReport(
        feasible=feasible,
        psd_violation=psd,
        completeness_residual=comp,
        constraint_values=values,
        slacks=slacks,
        violated_rows=violated,
    )


def expand_rows(
    rows: Sequence[ConstraintRow],
) -> tuple[tuple[tuple[HermitianOperator, ...], ...], tuple[float, ...], tuple[str, ...]]:
    ops: list[tuple[HermitianOperator, ...]] = []
    bounds: list[float] = []
    labels: list[str] = []
    for j, row in enumerate(rows):
        name = row.label or f"row{j}"
        if row.relation == "<=":
            ops.append(tuple(row.ops))
            bounds.append(float(row.bound))
            labels.append(name)
        elif row.relation == "==":
            ops.append(tuple(row.ops))
            bounds.append(float(row.bound))
            labels.append(f"{name}:upper")
            ops.append(tuple(-a for a in row.ops))
            bounds.append(-float(row.bound))
            labels.append(f"{name}:lower")
        else:
            raise ValueError(f"Unknown constraint relation: {row.relation!r}")
    return tuple(ops), tuple(bounds), tuple(labels)


def canonicalize_equalities(
    dim: int,
    objective_ops: Sequence[HermitianOperator],
    rows: Sequence[ConstraintRow],
    outcome_labels: Sequence[str] = (),
    value_offset: float = 0.0,
) -> DiscriminationProblem:
    ops, bounds, labels = expand_rows(rows)
    return DiscriminationProblem(
        dim=dim,
        objective_ops=tuple(objective_ops),
        constraint_ops=ops,
        constraint_bounds=bounds,
        outcome_labels=tuple(outcome_labels),
        constraint_labels=labels,
        value_offset=value_offset,
    )


def outcome_statistics(ensemble: StateEnsemble, povm: OutcomeLike, inconclusive: bool = False) -> OutcomeStatistics:
    count = len(ensemble)
    expected = count + 1 if inconclusive else count
    outcomes = outcome_operators(ensemble.dim, expected, povm)
    success = sum(trace_pair(ensemble.weighted(r), outcomes[r]) for r in range(count))
    failure = trace_pair(ensemble.g_hat, outcomes[count]) if inconclusive else 0.0
    error = sum(trace_pair(ensemble.g_hat, pi) for pi in outcomes[:count]) - success
    return OutcomeStatistics(success=success, error=error, failure=failure)


def outcome_operators(dim: int, count: int, povm: OutcomeLike) -> tuple[HermitianOperator, ...]:
    outcomes = tuple(povm.outcomes) if isinstance(povm, Povm) else tuple(povm)
    if len(outcomes) != count:
        raise OutcomeCountMismatch(f"Expected {count} outcomes, got {len(outcomes)}")
    if any(op.dim != dim for op in outcomes):
        raise DimMismatch(f"POVM outcomes must have dimension {dim}")
    return outcomes


def _validate_shapes(
    dim: int,
    outcome_count: int,
    grids: Sequence[Sequence[HermitianOperator]],
    constraint_ops: Sequence[Sequence[HermitianOperator]],
    constraint_bounds: Sequence[float],
) -> None:
    if dim < 1:
        raise DimMismatch("dim must be >= 1")
    if outcome_count < 1:
        raise OutcomeCountMismatch("Problem needs at least one outcome.")
    for row in [*grids, *constraint_ops]:
        if len(row) != outcome_count:
            raise OutcomeCountMismatch(f"Every operator row needs {outcome_count} entries, got {len(row)}")
        for op in row:
            if op.dim != dim:
                raise DimMismatch(f"Operator dimension {op.dim} does not match problem dimension {dim}")
    if len(constraint_bounds) != len(constraint_ops):
        raise OutcomeCountMismatch(
            f"{len(constraint_ops)} constraint rows but {len(constraint_bounds)} bounds"
        )
