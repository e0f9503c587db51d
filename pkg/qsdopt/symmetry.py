from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field, replace
import logging

import numpy as np

from qsdopt.certificate import DEFAULT_TOLERANCE, check_statement2, dual_objective
from qsdopt.config import SolverConfig
from qsdopt.errors import CovarianceViolation, DimMismatch, LengthMismatch
from qsdopt.models import CovarianceReport, CovariantResult, DualCertificate, MinimaxSolution, SolverResult
from qsdopt.operators import HermitianOperator, Povm, validate_hermitian
from qsdopt.problem import DiscriminationProblem, MinimaxProblem, OutcomeLike, criterion_values, objective_value, outcome_operators
from qsdopt.solver import solve_problem

logger = logging.getLogger(__name__)

UNITARY_TOL = 1e-10
MATCH_TOL = 1e-8
INPUT_TOL = 1e-9
DERIVED_TOL = 1e-8
MAX_ORDER = 64

AnyProblem = DiscriminationProblem | MinimaxProblem


@dataclass(frozen=True, slots=True, eq=False)
class GroupElement:
    """g acts as A -> U conj?(A) U^dagger and relabels outcomes, rows and criteria."""

    label: str
    op: np.ndarray
    perm_M: tuple[int, ...]
    perm_J: tuple[int, ...] = ()
    perm_K: tuple[int, ...] | None = None
    antiunitary: bool = False

    def __post_init__(self) -> None:
        op = np.array(self.op, dtype=complex)
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise DimMismatch(f"Group element {self.label!r} needs a square operator, got shape {op.shape}")
        defect = float(np.linalg.norm(op @ op.conj().T - np.eye(op.shape[0])))
        if defect > UNITARY_TOL:
            raise ValueError(f"Group element {self.label!r} is not unitary (defect {defect:.3e})")
        op.flags.writeable = False
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "perm_M", _permutation(self.label, "perm_M", self.perm_M))
        object.__setattr__(self, "perm_J", _permutation(self.label, "perm_J", self.perm_J))
        if self.perm_K is not None:
            object.__setattr__(self, "perm_K", _permutation(self.label, "perm_K", self.perm_K))

    @property
    def dim(self) -> int:
        return int(self.op.shape[0])

    def k_index(self, k: int) -> int:
        return k if self.perm_K is None else self.perm_K[k]


@dataclass(frozen=True, slots=True, eq=False)
class FiniteGroup:
    elements: tuple[GroupElement, ...]
    table: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    inverses: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        elements = tuple(self.elements)
        if not elements:
            raise ValueError("A group needs at least the identity element.")
        dim = elements[0].dim
        shapes = {(len(g.perm_M), len(g.perm_J)) for g in elements}
        criteria = {len(g.perm_K) for g in elements if g.perm_K is not None}
        if any(g.dim != dim for g in elements) or len(shapes) != 1 or len(criteria) > 1:
            raise DimMismatch("Group elements must share dimension and permutation lengths.")
        object.__setattr__(self, "elements", elements)
        if not any(_is_identity(g) for g in elements):
            raise ValueError("Group must contain the identity element (op = 1, identity permutations, unitary).")
        for i, g in enumerate(elements):
            for h in elements[i + 1 :]:
                if same_action(g, h):
                    raise ValueError(f"Elements {g.label!r} and {h.label!r} act identically; the action is not faithful.")
        table = []
        for g in elements:
            row = []
            for h in elements:
                index = self.find(compose(g, h))
                if index is None:
                    raise ValueError(f"Group is not closed: {g.label!r} * {h.label!r} is not an element.")
                row.append(index)
            table.append(tuple(row))
        object.__setattr__(self, "table", tuple(table))
        identity_index = next(i for i, g in enumerate(elements) if _is_identity(g))
        object.__setattr__(self, "inverses", tuple(row.index(identity_index) for row in table))

    @property
    def order(self) -> int:
        return len(self.elements)

    @property
    def dim(self) -> int:
        return self.elements[0].dim

    def find(self, candidate: GroupElement) -> int | None:
        return next((i for i, g in enumerate(self.elements) if same_action(g, candidate)), None)

    def inverse_of(self, index: int) -> GroupElement:
        return self.elements[self.inverses[index]]

    def __iter__(self) -> Iterator[GroupElement]:
        return iter(self.elements)

    def __len__(self) -> int:
        return len(self.elements)


def act(g: GroupElement, op: HermitianOperator) -> HermitianOperator:
    if op.dim != g.dim:
        raise DimMismatch(f"Group element acts on dimension {g.dim}, operator has {op.dim}")
    source = op.matrix.conj() if g.antiunitary else op.matrix
    image = g.op @ source @ g.op.conj().T
    scale = 1.0 + float(np.linalg.norm(op.matrix))
    return validate_hermitian(image, tol=MATCH_TOL * scale)


def compose(g: GroupElement, h: GroupElement) -> GroupElement:
    """The element acting as g after h."""
    right = h.op.conj() if g.antiunitary else h.op
    perm_K = None
    if g.perm_K is not None or h.perm_K is not None:
        size = len(g.perm_K if g.perm_K is not None else h.perm_K)
        perm_K = tuple(g.k_index(h.k_index(k)) for k in range(size))
    return GroupElement(
        label=f"{g.label}*{h.label}",
        op=g.op @ right,
        perm_M=tuple(g.perm_M[i] for i in h.perm_M),
        perm_J=tuple(g.perm_J[i] for i in h.perm_J),
        perm_K=perm_K,
        antiunitary=g.antiunitary != h.antiunitary,
    )


def inverse(g: GroupElement) -> GroupElement:
    op = g.op.conj() if g.antiunitary else g.op
    return GroupElement(
        label=f"{g.label}^-1",
        op=op.conj().T,
        perm_M=_invert(g.perm_M),
        perm_J=_invert(g.perm_J),
        perm_K=None if g.perm_K is None else _invert(g.perm_K),
        antiunitary=g.antiunitary,
    )


def same_action(g: GroupElement, h: GroupElement, tol: float = MATCH_TOL) -> bool:
    """Equal up to a global phase of the operator, with equal flags and permutations."""
    if g.antiunitary != h.antiunitary or g.perm_M != h.perm_M or g.perm_J != h.perm_J:
        return False
    if _k_perm(g) != _k_perm(h):
        return False
    overlap = np.trace(g.op.conj().T @ h.op)
    if abs(overlap) < 1e-12:
        return False
    phase = overlap / abs(overlap)
    return float(np.linalg.norm(g.op * phase - h.op)) <= tol


def identity_element(dim: int, outcomes: int, rows: int = 0, criteria: int | None = None) -> GroupElement:
    return GroupElement(
        label="e",
        op=np.eye(dim, dtype=complex),
        perm_M=tuple(range(outcomes)),
        perm_J=tuple(range(rows)),
        perm_K=None if criteria is None else tuple(range(criteria)),
    )


def trivial_group(dim: int, outcomes: int, rows: int = 0, criteria: int | None = None) -> FiniteGroup:
    return FiniteGroup((identity_element(dim, outcomes, rows, criteria),))


def cyclic_group(generator: GroupElement, max_order: int = MAX_ORDER) -> FiniteGroup:
    """Powers of one element until the action closes."""
    criteria = None if generator.perm_K is None else len(generator.perm_K)
    unit = identity_element(generator.dim, len(generator.perm_M), len(generator.perm_J), criteria)
    elements = [unit]
    power = generator
    for exponent in range(1, max_order + 1):
        if same_action(power, unit):
            return FiniteGroup(tuple(elements))
        elements.append(replace(power, label=generator.label if exponent == 1 else f"{generator.label}^{exponent}"))
        power = compose(generator, power)
    raise ValueError(f"Generator {generator.label!r} did not close within {max_order} powers.")


def check_problem_covariance(problem: AnyProblem, group: FiniteGroup, tol: float = INPUT_TOL) -> CovarianceReport:
    violations: list[str] = []
    worst = 0.0
    shape_errors = _shape_errors(problem, group)
    if shape_errors:
        return CovarianceReport(max_residual=float("inf"), tolerance=tol, violations=shape_errors)

    def record(residual: float, where: str) -> None:
        nonlocal worst
        worst = max(worst, residual)
        if residual > tol:
            violations.append(f"{where}: residual {residual:.3e}")

    for g in group:
        if isinstance(problem, MinimaxProblem):
            for k, row in enumerate(problem.criterion_ops):
                gk = g.k_index(k)
                record(abs(problem.offsets[k] - problem.offsets[gk]), f"g={g.label} k={problem.criterion_label(k)} offset")
                for m, op in enumerate(row):
                    target = problem.criterion_ops[gk][g.perm_M[m]]
                    record(_distance(act(g, op), target), f"g={g.label} k={problem.criterion_label(k)} m={problem.outcome_label(m)}")
        else:
            for m, op in enumerate(problem.objective_ops):
                target = problem.objective_ops[g.perm_M[m]]
                record(_distance(act(g, op), target), f"g={g.label} m={problem.outcome_label(m)}")
        for j, row in enumerate(problem.constraint_ops):
            gj = g.perm_J[j]
            record(abs(problem.constraint_bounds[j] - problem.constraint_bounds[gj]), f"g={g.label} j={problem.constraint_label(j)} bound")
            for m, op in enumerate(row):
                target = problem.constraint_ops[gj][g.perm_M[m]]
                record(_distance(act(g, op), target), f"g={g.label} j={problem.constraint_label(j)} m={m}")
    if violations:
        logger.info("Problem is not covariant: %d violations, worst residual %.3e", len(violations), worst)
    return CovarianceReport(max_residual=worst, tolerance=tol, violations=violations)


def check_povm_covariance(group: FiniteGroup, povm: OutcomeLike) -> float:
    """Largest |g.Pi_m - Pi_{g.m}|_F over the group and outcomes."""
    outcomes = _outcomes(group, povm)
    return max(
        (_distance(act(g, pi), outcomes[g.perm_M[m]]) for g in group for m, pi in enumerate(outcomes)),
        default=0.0,
    )


def transform_povm(g: GroupElement, povm: OutcomeLike) -> Povm:
    """The single-element map Pi_m -> g^-1 . Pi_{g.m}."""
    outcomes = _outcomes_for_element(g, povm)
    back = inverse(g)
    return Povm(tuple(act(back, outcomes[g.perm_M[m]]) for m in range(len(outcomes))), validate=False)


def average_povm(group: FiniteGroup, povm: OutcomeLike) -> Povm:
    """Group average kappa(Pi)_m = |G|^-1 sum_g g^-1 . Pi_{g.m}, summed in element order."""
    outcomes = _outcomes(group, povm)
    averaged = []
    for m in range(len(outcomes)):
        total = np.zeros((group.dim, group.dim), dtype=complex)
        for index, g in enumerate(group.elements):
            total = total + act(group.inverse_of(index), outcomes[g.perm_M[m]]).matrix
        averaged.append(HermitianOperator(total / group.order))
    return Povm(tuple(averaged))


def symmetrize_dual(problem: DiscriminationProblem, group: FiniteGroup, certificate: DualCertificate) -> DualCertificate:
    """X -> |G|^-1 sum_g g.X and lambda_j -> |G|^-1 sum_g lambda_{g^-1.j}."""
    if len(certificate.lambdas) != problem.J:
        raise LengthMismatch(f"Expected {problem.J} multipliers, got {len(certificate.lambdas)}")
    total = np.zeros((group.dim, group.dim), dtype=complex)
    lambdas = np.zeros(problem.J)
    for index, g in enumerate(group.elements):
        total = total + act(g, certificate.X).matrix
        back = group.inverse_of(index)
        lambdas = lambdas + np.array([certificate.lambdas[back.perm_J[j]] for j in range(problem.J)])
    return DualCertificate(X=HermitianOperator(total / group.order), lambdas=tuple(float(v) for v in lambdas / group.order))


def covariant_solve(
    problem: DiscriminationProblem,
    group: FiniteGroup,
    config: SolverConfig | None = None,
    tol: float = INPUT_TOL,
    certificate_tolerance: float = DEFAULT_TOLERANCE,
) -> CovariantResult:
    covariance = check_problem_covariance(problem, group, tol)
    if not covariance.passed:
        raise CovarianceViolation(f"Problem is not covariant under the group: {covariance.violations[0]}", covariance)
    result = solve_problem(problem, config)
    if result.povm is None or result.dual is None:
        logger.info("Covariant solve ended with %s and no solution to symmetrize", result.status)
        return CovariantResult(result, covariance, None, result.primal_value, result.primal_value, float("nan"))
    return symmetrize_solution(problem, group, result.povm, result.dual, result, covariance, certificate_tolerance)


def symmetrize_solution(
    problem: DiscriminationProblem,
    group: FiniteGroup,
    povm: Povm,
    dual: DualCertificate,
    result: SolverResult | None = None,
    covariance: CovarianceReport | None = None,
    certificate_tolerance: float = DEFAULT_TOLERANCE,
) -> CovariantResult:
    """Average a solved (Pi, X, lambda) over the group and re-certify it."""
    if covariance is None:
        covariance = check_problem_covariance(problem, group)
        if not covariance.passed:
            raise CovarianceViolation(f"Problem is not covariant under the group: {covariance.violations[0]}", covariance)
    before = objective_value(problem, povm)
    averaged = average_povm(group, povm)
    symmetric_dual = symmetrize_dual(problem, group, dual)
    after = objective_value(problem, averaged)
    certificate = check_statement2(problem, averaged, symmetric_dual, certificate_tolerance)
    if result is not None:
        result = replace(
            result,
            povm=averaged,
            dual=symmetric_dual,
            primal_value=after,
            dual_value=dual_objective(problem, symmetric_dual),
        )
    residual = check_povm_covariance(group, averaged)
    logger.info("Symmetrized objective %.12g -> %.12g (covariance residual %.2e)", before, after, residual)
    return CovariantResult(
        result=result,
        covariance=covariance,
        certificate=certificate,
        value_before=before,
        value_after=after,
        povm_residual=residual,
        povm=averaged,
        dual=symmetric_dual,
        objective_tolerance=DERIVED_TOL,
    )


def symmetrize_minimax(
    problem: MinimaxProblem,
    group: FiniteGroup,
    solution: MinimaxSolution,
    support_tol: float = 1e-6,
) -> MinimaxSolution:
    covariance = check_problem_covariance(problem, group)
    if not covariance.passed:
        raise CovarianceViolation(f"Minimax problem is not covariant under the group: {covariance.violations[0]}", covariance)
    mu = np.zeros(problem.K)
    for g in group:
        mu = mu + np.array([solution.mu[g.k_index(k)] for k in range(problem.K)])
    mu = mu / group.order
    povm = average_povm(group, solution.povm)
    per_criterion = tuple(criterion_values(problem, povm))
    return MinimaxSolution(
        mu=tuple(float(w) for w in mu),
        povm=povm,
        value=min(per_criterion),
        per_criterion=per_criterion,
        support=tuple(k for k, w in enumerate(mu) if w > support_tol),
        result=solution.result,
    )


def weight_covariance(group: FiniteGroup, mu: Sequence[float]) -> float:
    """Largest |mu_{g.k} - mu_k| over the group."""
    return max((abs(mu[g.k_index(k)] - mu[k]) for g in group for k in range(len(mu))), default=0.0)


def _outcomes(group: FiniteGroup, povm: OutcomeLike) -> tuple[HermitianOperator, ...]:
    return outcome_operators(group.dim, len(group.elements[0].perm_M), povm)


def _outcomes_for_element(g: GroupElement, povm: OutcomeLike) -> tuple[HermitianOperator, ...]:
    return outcome_operators(g.dim, len(g.perm_M), povm)


def _shape_errors(problem: AnyProblem, group: FiniteGroup) -> list[str]:
    errors = []
    g = group.elements[0]
    if group.dim != problem.dim:
        errors.append(f"group acts on dimension {group.dim}, problem has {problem.dim}")
    if len(g.perm_M) != problem.M:
        errors.append(f"perm_M has length {len(g.perm_M)}, problem has {problem.M} outcomes")
    if len(g.perm_J) != problem.J:
        errors.append(f"perm_J has length {len(g.perm_J)}, problem has {problem.J} constraint rows")
    if isinstance(problem, MinimaxProblem) and g.perm_K is not None and len(g.perm_K) != problem.K:
        errors.append(f"perm_K has length {len(g.perm_K)}, problem has {problem.K} criteria")
    return errors


def _distance(a: HermitianOperator, b: HermitianOperator) -> float:
    return float(np.linalg.norm(a.matrix - b.matrix))


def _is_identity(g: GroupElement) -> bool:
    return (
        not g.antiunitary
        and _trivial(g.perm_M)
        and _trivial(g.perm_J)
        and _trivial(g.perm_K)
        and float(np.linalg.norm(g.op - np.eye(g.dim))) <= MATCH_TOL
    )


def _k_perm(g: GroupElement) -> tuple[int, ...] | None:
    return None if _trivial(g.perm_K) else g.perm_K


def _trivial(perm: Sequence[int] | None) -> bool:
    return perm is None or tuple(perm) == tuple(range(len(perm)))


def _permutation(label: str, name: str, values: Sequence[int]) -> tuple[int, ...]:
    perm = tuple(int(v) for v in values)
    if sorted(perm) != list(range(len(perm))):
        raise ValueError(f"Group element {label!r}: {name} is not a permutation: {list(perm)}")
    return perm


def _invert(perm: Sequence[int]) -> tuple[int, ...]:
    inverse_perm = [0] * len(perm)
    for i, target in enumerate(perm):
        inverse_perm[target] = i
    return tuple(inverse_perm)
