from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, replace
import logging
from typing import Literal

import numpy as np

from qsdopt.certificate import shift_to_feasibility
from qsdopt.embedding import de_embed, embed, hermitian_basis
from qsdopt.errors import DimMismatch
from qsdopt.models import DualCertificate, Face
from qsdopt.operators import HermitianOperator, Povm, hermitian_part, min_eigenvalue, normalize_povm, zeros
from qsdopt.problem import DiscriminationProblem, MinimaxProblem

logger = logging.getLogger(__name__)

FormKind = Literal["primal", "epigraph", "phase_one"]
ColumnRole = Literal["slack", "level", "criterion", "violation"]
AnyProblem = DiscriminationProblem | MinimaxProblem
DEGENERATE_WEIGHT = 1e-12
ARGMIN_TOL = 1e-6
DEPENDENT_ROW_TOL = 1e-7
RHS_MISMATCH_TOL = 1e-6


@dataclass(frozen=True, slots=True)
class ConstraintRowMap:
    upper: int
    lower: int | None = None
    tight: bool = False


@dataclass(frozen=True, slots=True)
class LpColumn:
    role: ColumnRole
    index: int = -1


@dataclass(frozen=True, slots=True, eq=False)
class SdpStandardForm:
    """minimize <C, X> + c.x  subject to  A(X) + A_lp x = b,  X blocks PSD, x >= 0.

    Rows are ordered: completeness (one per Hermitian basis element), then
    constraint rows (negated pairs merged into one equality), then one
    epigraph row per criterion. Rows in `dropped` were linear combinations of
    earlier rows and are absent from the arrays; multiplier vectors are
    mapped back to the full layout by expand().

    With a face, block m is written in the frame face.frames[m] and only its
    leading face.ranks[m] coordinates are free; `mask` marks them. The
    remaining coordinates carry fixed identity padding in both X and Z.
    """

    kind: FormKind
    problem: AnyProblem
    cost_blocks: np.ndarray
    cost_lp: np.ndarray
    row_blocks: np.ndarray
    row_lp: np.ndarray
    rhs: np.ndarray
    row_map: tuple[ConstraintRowMap, ...]
    columns: tuple[LpColumn, ...]
    value_shift: float = 0.0
    rank: int = 0
    dropped: tuple[int, ...] = ()
    face: Face | None = None
    mask: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.problem.dim

    @property
    def M(self) -> int:
        return int(self.cost_blocks.shape[0])

    @property
    def block_size(self) -> int:
        return int(self.cost_blocks.shape[1])

    @property
    def lp_size(self) -> int:
        return int(self.cost_lp.shape[0])

    @property
    def row_count(self) -> int:
        return int(self.rhs.shape[0])

    @property
    def full_row_count(self) -> int:
        return self.row_count + len(self.dropped)

    @property
    def completeness_rows(self) -> int:
        return self.dim * self.dim

    @property
    def epigraph_rows(self) -> int:
        return self.problem.K if self.kind == "epigraph" else 0

    @property
    def block_dims(self) -> list[int]:
        return [self.block_size] * self.M + [1] * self.lp_size

    @property
    def cone_size(self) -> int:
        if self.mask is None:
            return self.M * self.block_size + self.lp_size
        return int(np.trace(self.mask, axis1=1, axis2=2).sum()) + self.lp_size

    @property
    def pad_blocks(self) -> np.ndarray:
        if self.mask is None:
            return np.zeros_like(self.cost_blocks)
        return np.eye(self.block_size) * (1.0 - self.mask)

    @property
    def rank_deficient(self) -> bool:
        return self.rank < self.row_count

    def expand(self, y: np.ndarray) -> np.ndarray:
        full = np.zeros(self.full_row_count)
        full[np.delete(np.arange(self.full_row_count), self.dropped)] = y
        return full

    def reduce(self, vector: np.ndarray) -> np.ndarray:
        return np.delete(np.asarray(vector, dtype=float), self.dropped)


class _FormBuilder:
    def __init__(self, dim: int, outcomes: int, face: Face | None = None) -> None:
        size = 2 * dim
        self.dim = dim
        self.outcomes = outcomes
        self.face = face
        self.cost_blocks = np.zeros((outcomes, size, size))
        self.cost_lp: list[float] = []
        self.columns: list[LpColumn] = []
        self.rows: list[tuple[np.ndarray, dict[int, float], float]] = []
        for element in hermitian_basis(dim):
            self.rows.append((self.blocks([element] * outcomes), {}, float(np.trace(element).real)))

    def blocks(self, matrices: Sequence[np.ndarray]) -> np.ndarray:
        if self.face is None:
            return np.stack([0.5 * embed(matrix) for matrix in matrices])
        compressed = []
        for frame, rank, matrix in zip(self.face.frames, self.face.ranks, matrices):
            rotated = frame.conj().T @ matrix @ frame
            compressed.append(0.5 * embed(rotated * face_mask(self.dim, rank)))
        return np.stack(compressed)

    def column(self, role: ColumnRole, index: int = -1, cost: float = 0.0) -> int:
        self.columns.append(LpColumn(role, index))
        self.cost_lp.append(cost)
        return len(self.columns) - 1

    def row(self, ops: Sequence[HermitianOperator], rhs: float, lp: dict[int, float]) -> None:
        self.rows.append((self.blocks([op.matrix for op in ops]), lp, float(rhs)))

    def finish(
        self,
        kind: FormKind,
        problem: AnyProblem,
        row_map: tuple[ConstraintRowMap, ...],
        value_shift: float = 0.0,
    ) -> SdpStandardForm:
        row_blocks = np.stack([blocks for blocks, _, _ in self.rows])
        row_lp = np.zeros((len(self.rows), len(self.columns)))
        for i, (_, lp, _) in enumerate(self.rows):
            for column, coefficient in lp.items():
                row_lp[i, column] = coefficient
        rhs = np.array([value for _, _, value in self.rows])
        kept, dropped, rank = _independent_rows(np.hstack([row_blocks.reshape(len(self.rows), -1), row_lp]), rhs)
        if dropped:
            logger.info("Dropped %d linearly dependent equality rows: %s", len(dropped), dropped)
        mask = None
        if self.face is not None:
            mask = np.stack([embed(face_mask(self.dim, rank)) for rank in self.face.ranks])
        return SdpStandardForm(
            kind=kind,
            problem=problem,
            cost_blocks=self.cost_blocks,
            cost_lp=np.array(self.cost_lp, dtype=float),
            row_blocks=row_blocks[kept],
            row_lp=row_lp[kept],
            rhs=rhs[kept],
            row_map=row_map,
            columns=tuple(self.columns),
            value_shift=value_shift,
            rank=rank,
            dropped=tuple(dropped),
            face=self.face,
            mask=mask,
        )


def compile_problem(problem: DiscriminationProblem) -> SdpStandardForm:
    _require_dims(problem)
    builder = _FormBuilder(problem.dim, problem.M)
    builder.cost_blocks = -builder.blocks([op.matrix for op in problem.objective_ops])
    row_map = _add_constraint_rows(builder, problem)
    return builder.finish("primal", problem, row_map)


def compile_face(problem: DiscriminationProblem, face: Face) -> SdpStandardForm:
    """The primal form restricted to a face: Pi_m = U_m Y_m U_m^dag with Y_m of size ranks[m]."""
    _require_dims(problem)
    if face.frames.shape != (problem.M, problem.dim, problem.dim) or len(face.ranks) != problem.M:
        raise DimMismatch(f"Face frames have shape {face.frames.shape}, expected {(problem.M, problem.dim, problem.dim)}")
    builder = _FormBuilder(problem.dim, problem.M, face)
    builder.cost_blocks = -builder.blocks([op.matrix for op in problem.objective_ops])
    row_map = _add_constraint_rows(builder, problem, face.tight)
    return builder.finish("primal", problem, row_map)


def compile_epigraph(problem: MinimaxProblem) -> SdpStandardForm:
    """Epigraph form of max_Pi min_k f_k(Pi): t = floor + u, f_k(Pi) - t = w_k, u, w_k >= 0."""
    _require_dims(problem)
    builder = _FormBuilder(problem.dim, problem.M)
    row_map = _add_constraint_rows(builder, problem)
    floor = criterion_floor(problem)
    level = builder.column("level", cost=-1.0)
    for k, row in enumerate(problem.criterion_ops):
        surplus = builder.column("criterion", k)
        builder.row([-op for op in row], problem.offsets[k] - floor, {level: 1.0, surplus: 1.0})
    return builder.finish("epigraph", problem, row_map, value_shift=floor)


def compile_phase_one(problem: AnyProblem) -> SdpStandardForm:
    """minimize v subject to value_j(Pi) - b_j <= v over POVMs; v* > 0 iff the rows are jointly infeasible."""
    _require_dims(problem)
    builder = _FormBuilder(problem.dim, problem.M)
    slacks = [builder.column("slack", j) for j in range(problem.J)]
    violation = builder.column("violation", cost=1.0)
    for j in range(problem.J):
        builder.row(problem.constraint_ops[j], problem.constraint_bounds[j], {slacks[j]: 1.0, violation: -1.0})
    row_map = tuple(ConstraintRowMap(j) for j in range(problem.J))
    return builder.finish("phase_one", problem, row_map)


def criterion_floor(problem: MinimaxProblem) -> float:
    """A value strictly below f_k(Pi) for every criterion k and every POVM Pi."""
    bounds = [
        offset + problem.dim * min(min_eigenvalue(op) for op in row)
        for offset, row in zip(problem.offsets, problem.criterion_ops)
    ]
    return min(bounds) - 1.0


def extract_povm(blocks: np.ndarray, face: Face | None = None) -> Povm:
    matrices = de_embed(blocks)
    if face is not None:
        matrices = np.stack(
            [
                frame @ (block * face_mask(frame.shape[0], rank)) @ frame.conj().T
                for frame, rank, block in zip(face.frames, face.ranks, matrices)
            ]
        )
    return normalize_povm(list(matrices))


def face_mask(dim: int, rank: int) -> np.ndarray:
    mask = np.zeros((dim, dim))
    mask[:rank, :rank] = 1.0
    return mask


def extract_weights(
    form: SdpStandardForm,
    y: np.ndarray,
    per_criterion: Sequence[float] | None = None,
) -> tuple[float, ...]:
    if form.kind != "epigraph":
        raise ValueError("Criterion weights exist only for epigraph forms.")
    raw = np.clip(-form.expand(y)[-form.epigraph_rows :], 0.0, None)
    total = float(raw.sum())
    if total > DEGENERATE_WEIGHT:
        return tuple(float(value) for value in raw / total)
    logger.info("Epigraph multipliers vanished; using uniform weights over the worst criteria")
    if per_criterion is None:
        return tuple(1.0 / raw.size for _ in range(raw.size))
    values = np.asarray(per_criterion, dtype=float)
    worst = values <= values.min() + ARGMIN_TOL * (1.0 + abs(values.min()))
    return tuple(float(flag) / float(worst.sum()) for flag in worst)


def extract_dual(
    form: SdpStandardForm,
    y: np.ndarray,
    feas_tol: float = 1e-8,
    weights: Sequence[float] | None = None,
) -> DualCertificate:
    """Map SDP multipliers back to (X, lambda).

    X = -sum_k y_k B_k over the completeness rows; lambda_j = -y_j over the
    constraint rows. X is shifted up by the smallest amount that restores
    X >= z_m(lambda) for every m.
    """
    basis = hermitian_basis(form.dim)
    full = form.expand(y)
    x_hat = -np.einsum("k,kab->ab", full[: form.completeness_rows], basis)
    lambdas = _constraint_multipliers(form, full, feas_tol)
    if form.kind == "epigraph" and weights is None:
        weights = extract_weights(form, y)
    certificate = DualCertificate(X=hermitian_part(x_hat), lambdas=tuple(lambdas))
    return shift_to_feasibility(dual_target(form, weights), certificate)


def dual_target(form: SdpStandardForm, weights: Sequence[float] | None = None) -> DiscriminationProblem:
    """The DiscriminationProblem whose z_m(lambda) the form's dual constrains."""
    problem = form.problem
    if form.kind == "phase_one":
        if isinstance(problem, MinimaxProblem):
            return problem.feasible_set()
        return replace(problem, objective_ops=tuple(zeros(problem.dim) for _ in range(problem.M)), value_offset=0.0)
    if isinstance(problem, MinimaxProblem):
        if weights is None:
            raise ValueError("Epigraph dual target needs criterion weights.")
        return problem.weighted_problem(weights)
    return problem


def dual_vector(
    form: SdpStandardForm,
    x_hat: np.ndarray,
    row_multipliers: Sequence[float],
    weights: Sequence[float] = (),
) -> np.ndarray:
    """Inverse of the dual extraction: raw SDP multipliers for a given (X, row lambdas, weights)."""
    basis = hermitian_basis(form.dim)
    completeness = -np.einsum("kab,ba->k", basis, x_hat).real
    full = np.concatenate([completeness, -np.asarray(row_multipliers, dtype=float), -np.asarray(weights, dtype=float)])
    return form.reduce(full)


def _constraint_multipliers(form: SdpStandardForm, full: np.ndarray, feas_tol: float) -> list[float]:
    start = form.completeness_rows
    raw = -full[start : start + len(form.row_map)]
    lambdas = [0.0] * form.problem.J
    for entry, value in zip(form.row_map, raw):
        if entry.lower is None:
            if value < -feas_tol and not entry.tight:
                logger.warning("Multiplier of %s is %.3e; clipping to 0", _row_name(form, entry.upper), value)
            lambdas[entry.upper] = max(float(value), 0.0)
        else:
            lambdas[entry.upper] = max(float(value), 0.0)
            lambdas[entry.lower] = max(-float(value), 0.0)
    return lambdas


def _add_constraint_rows(
    builder: _FormBuilder,
    problem: AnyProblem,
    tight: frozenset[int] = frozenset(),
) -> tuple[ConstraintRowMap, ...]:
    row_map = tuple(
        replace(entry, tight=True) if entry.lower is None and entry.upper in tight else entry
        for entry in _pair_equalities(problem)
    )
    for entry in row_map:
        lp = {} if entry.lower is not None or entry.tight else {builder.column("slack", entry.upper): 1.0}
        builder.row(problem.constraint_ops[entry.upper], problem.constraint_bounds[entry.upper], lp)
    return row_map


def slack_rows(problem: AnyProblem) -> frozenset[int]:
    """Constraint rows compiled as inequalities with their own slack column."""
    return frozenset(entry.upper for entry in _pair_equalities(problem) if entry.lower is None)


def _pair_equalities(problem: AnyProblem) -> tuple[ConstraintRowMap, ...]:
    used: set[int] = set()
    row_map: list[ConstraintRowMap] = []
    for j in range(problem.J):
        if j in used:
            continue
        used.add(j)
        partner = next((k for k in range(j + 1, problem.J) if k not in used and _is_negation(problem, j, k)), None)
        if partner is not None:
            used.add(partner)
        row_map.append(ConstraintRowMap(j, partner))
    return tuple(row_map)


def _is_negation(problem: AnyProblem, j: int, k: int) -> bool:
    if problem.constraint_bounds[k] != -problem.constraint_bounds[j]:
        return False
    upper, lower = problem.constraint_ops[j], problem.constraint_ops[k]
    if all(not np.any(op.matrix) for op in upper):
        return False
    return all(np.array_equal(a.matrix, -b.matrix) for a, b in zip(upper, lower))


def _row_name(form: SdpStandardForm, row: int) -> str:
    labels = form.problem.constraint_labels
    return labels[row] if labels else f"row{row}"


def _require_dims(problem: AnyProblem) -> None:
    ops = problem.criterion_ops if isinstance(problem, MinimaxProblem) else (problem.objective_ops,)
    for row in (*ops, *problem.constraint_ops):
        for op in row:
            if op.dim != problem.dim:
                raise DimMismatch(f"Operator dimension {op.dim} does not match problem dimension {problem.dim}")


def _independent_rows(matrix: np.ndarray, rhs: np.ndarray) -> tuple[list[int], list[int], int]:
    """Greedy in row order. A dependent row whose right-hand side disagrees is kept so the conflict stays visible."""
    basis: list[np.ndarray] = []
    kept: list[int] = []
    dropped: list[int] = []
    for i, row in enumerate(matrix):
        residual = row.copy()
        for _ in range(2):
            for vector in basis:
                residual = residual - float(vector @ residual) * vector
        norm = float(np.linalg.norm(residual))
        if norm > DEPENDENT_ROW_TOL * max(1.0, float(np.linalg.norm(row))):
            basis.append(residual / norm)
            kept.append(i)
            continue
        implied = 0.0
        if kept:
            coefficients = np.linalg.lstsq(matrix[kept].T, row, rcond=None)[0]
            implied = float(coefficients @ rhs[kept])
        if abs(implied - rhs[i]) > RHS_MISMATCH_TOL * (1.0 + abs(rhs[i])):
            logger.warning("Row %d repeats earlier rows with right-hand side %.6g instead of %.6g", i, rhs[i], implied)
            kept.append(i)
        else:
            dropped.append(i)
    return kept, dropped, len(basis)
