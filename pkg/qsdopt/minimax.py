from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
import logging

import numpy as np

from qsdopt.config import SolverConfig
from qsdopt.errors import InfeasibleProblem, LengthMismatch, NumericalFailure
from qsdopt.models import MinimaxCheckReport, MinimaxSolution, SaddleReport
from qsdopt.operators import DensityOperator, Povm, StateEnsemble, hermitian_part, identity, random_povm
from qsdopt.problem import MinimaxProblem, OutcomeLike, criterion_values, is_feasible, outcome_operators
from qsdopt.solver import solve, solve_problem
from qsdopt.standard_form import compile_epigraph

__all__ = [
    "check_minimax",
    "criterion_values",
    "f_star",
    "f_star_many",
    "mixed_ensemble",
    "sample_saddle",
    "solve_minimax",
    "weighted_value",
]

logger = logging.getLogger(__name__)

SUPPORT_TOL = 1e-6
CHECK_TOLERANCE = 1e-5
SIMPLEX_TOL = 1e-9


def solve_minimax(
    problem: MinimaxProblem,
    config: SolverConfig | None = None,
    support_tol: float = SUPPORT_TOL,
) -> MinimaxSolution:
    result = solve(compile_epigraph(problem), config)
    if result.status == "Infeasible":
        raise InfeasibleProblem("Minimax constraint set is empty.", result)
    if result.status != "Optimal" or result.povm is None or result.weights is None:
        raise NumericalFailure(f"Minimax solve ended with {result.status}; no optimal measurement to report.")
    per_criterion = tuple(criterion_values(problem, result.povm))
    mu = result.weights
    support = tuple(k for k, weight in enumerate(mu) if weight > support_tol)
    logger.info("Minimax value %.12g with support %s", min(per_criterion), list(support))
    return MinimaxSolution(
        mu=mu,
        povm=result.povm,
        value=min(per_criterion),
        per_criterion=per_criterion,
        support=support,
        result=result,
    )


def weighted_value(problem: MinimaxProblem, mu: Sequence[float], povm: OutcomeLike) -> float:
    """F(mu, Pi) = sum_k mu_k f_k(Pi)."""
    weights = _require_simplex(problem, mu)
    return float(np.dot(weights, criterion_values(problem, povm)))


def f_star(
    problem: MinimaxProblem,
    mu: Sequence[float],
    config: SolverConfig | None = None,
) -> tuple[float, Povm]:
    """Best weighted value for fixed weights; offsets are added after the inner solve."""
    weights = _require_simplex(problem, mu)
    result = solve_problem(problem.weighted_problem(weights), config)
    if result.status == "Infeasible":
        raise InfeasibleProblem("Minimax constraint set is empty.", result)
    if result.status != "Optimal" or result.povm is None:
        raise NumericalFailure(f"Inner solve for weights {weights} ended with {result.status}.")
    return result.primal_value + float(np.dot(weights, problem.offsets)), result.povm


def f_star_many(
    problem: MinimaxProblem,
    mus: Sequence[Sequence[float]],
    config: SolverConfig | None = None,
    jobs: int = 1,
) -> list[float]:
    """F*(mu) for many weight vectors; results keep the input order."""
    if jobs <= 1:
        return [f_star(problem, mu, config)[0] for mu in mus]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return [value for value, _ in pool.map(lambda mu: f_star(problem, mu, config), mus)]


def check_minimax(
    problem: MinimaxProblem,
    mu: Sequence[float],
    povm: OutcomeLike,
    tolerance: float = CHECK_TOLERANCE,
    support_tol: float = SUPPORT_TOL,
    config: SolverConfig | None = None,
) -> MinimaxCheckReport:
    weights = _require_simplex(problem, mu)
    outcomes = outcome_operators(problem.dim, problem.M, povm)
    best, _ = f_star(problem, weights, config)
    values = criterion_values(problem, outcomes)
    combined = float(np.dot(weights, values))
    support = [k for k, weight in enumerate(weights) if weight > support_tol]
    violated: list[str] = []

    feasibility = is_feasible(problem, outcomes, tol=tolerance)
    if not feasibility.feasible:
        violated.extend(f"primal: {row} violated" for row in feasibility.violated_rows)
        if not feasibility.violated_rows:
            violated.append("primal: measurement is not a valid POVM")

    shortfalls = [best - value for value in values]
    for k, shortfall in enumerate(shortfalls):
        if shortfall > tolerance:
            violated.append(f"statement2: f[{problem.criterion_label(k)}] below F* by {shortfall:.3e}")

    lowest = min(values)
    spread = max((values[k] - lowest for k in support), default=0.0)
    mismatch = abs(best - combined)
    if mismatch > tolerance:
        violated.append(f"statement3: F* - F(mu, Pi) = {best - combined:.3e}")
    for k in support:
        if values[k] - lowest > tolerance:
            violated.append(f"statement3: f[{problem.criterion_label(k)}] in support exceeds the minimum by {values[k] - lowest:.3e}")

    return MinimaxCheckReport(
        f_star=best,
        weighted_value=combined,
        per_criterion=values,
        statement2_residual=max(0.0, max(shortfalls)),
        statement3_residual=max(mismatch, spread),
        tolerance=tolerance,
        support=support,
        violated=violated,
    )


def mixed_ensemble(sets: Sequence[StateEnsemble], mu: Sequence[float]) -> StateEnsemble:
    """The ensemble with states sum_k mu_k xi_km rho_km, renormalized, and their traces as priors."""
    if not sets:
        raise ValueError("mixed_ensemble needs at least one state set.")
    weights = [float(w) for w in mu]
    if len(weights) != len(sets):
        raise LengthMismatch(f"Expected {len(sets)} weights, got {len(weights)}")
    count, dim = len(sets[0]), sets[0].dim
    if any(len(ensemble) != count or ensemble.dim != dim for ensemble in sets):
        raise LengthMismatch("State sets must share state count and dimension.")
    states: list[DensityOperator] = []
    priors: list[float] = []
    for m in range(count):
        total = sum((w * ensemble.weighted(m).matrix for w, ensemble in zip(weights, sets)), np.zeros((dim, dim), dtype=complex))
        mass = float(np.trace(total).real)
        if mass > 0.0:
            states.append(DensityOperator(hermitian_part(total / mass)))
        else:
            states.append(DensityOperator((1.0 / dim) * identity(dim)))
        priors.append(max(mass, 0.0))
    scale = sum(priors)
    return StateEnsemble(tuple(states), tuple(p / scale for p in priors))


def sample_saddle(
    problem: MinimaxProblem,
    solution: MinimaxSolution,
    samples: int = 50,
    seed: int = 0,
    tolerance: float = CHECK_TOLERANCE,
) -> SaddleReport:
    """Sample F(mu*, Pi) <= F(mu*, Pi*) <= F(mu, Pi*) over random weights and random feasible POVMs."""
    rng = np.random.default_rng(seed)
    center = weighted_value(problem, solution.mu, solution.povm)
    values_at_optimum = np.asarray(solution.per_criterion, dtype=float)
    left = 0.0
    right = 0.0
    skipped = 0
    for _ in range(samples):
        mu = rng.dirichlet(np.ones(problem.K))
        right = max(right, center - float(mu @ values_at_optimum))
        candidate = random_povm(problem.dim, problem.M, int(rng.integers(2**31)))
        if problem.J and not is_feasible(problem, candidate).feasible:
            skipped += 1
            continue
        left = max(left, weighted_value(problem, solution.mu, candidate) - center)
    if skipped:
        logger.info("Saddle sampling skipped %d infeasible measurements", skipped)
    return SaddleReport(
        left_residual=max(left, 0.0),
        right_residual=max(right, 0.0),
        samples=samples,
        tolerance=tolerance,
        skipped=skipped,
    )


def _require_simplex(problem: MinimaxProblem, mu: Sequence[float]) -> list[float]:
    weights = [float(w) for w in mu]
    if len(weights) != problem.K:
        raise LengthMismatch(f"Expected {problem.K} weights, got {len(weights)}")
    if min(weights) < -SIMPLEX_TOL or abs(sum(weights) - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"Weights must lie on the probability simplex, got {weights}")
    return [max(w, 0.0) for w in weights]
