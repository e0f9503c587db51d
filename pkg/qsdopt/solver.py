from __future__ import annotations

from dataclasses import dataclass
import logging
import math

import numpy as np
import scipy.linalg

from qsdopt.certificate import check_statement2, dual_objective, z_operators
from qsdopt.config import SolverConfig
from qsdopt.embedding import project_complex_structure, structure_residual
from qsdopt.errors import NumericalFailure
from qsdopt.models import DualCertificate, InfeasibilityReport, IterationRecord, SolverResiduals, SolverResult, SolverStatus
from qsdopt.operators import Povm, uniform_povm
from qsdopt.problem import DiscriminationProblem, MinimaxProblem, constraint_values, criterion_values, objective_value
from qsdopt.refine import exposed_face, polish
from qsdopt.standard_form import (
    SdpStandardForm,
    compile_face,
    compile_phase_one,
    compile_problem,
    dual_target,
    dual_vector,
    extract_dual,
    extract_povm,
    extract_weights,
)

logger = logging.getLogger(__name__)

PHASE_ONE_FLOOR = 1e-6
STALL_STEP = 1e-12
MU_FLOOR = 1e-20
REGULARIZATION = 1e-13

Direction = tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]


@dataclass(slots=True)
class _Workspace:
    X: np.ndarray
    x: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    z: np.ndarray

    def copy(self) -> _Workspace:
        return _Workspace(self.X.copy(), self.x.copy(), self.y.copy(), self.Z.copy(), self.z.copy())


@dataclass(slots=True)
class _Measure:
    r_p: np.ndarray
    R_d: np.ndarray
    r_d: np.ndarray
    primal_value: float
    dual_value: float
    mu: float
    primal_residual: float
    dual_residual: float
    gap: float

    @property
    def merit(self) -> float:
        return max(self.gap, self.primal_residual, self.dual_residual)


class _SchurSystem:
    def __init__(self, matrix: np.ndarray) -> None:
        self.matrix = matrix
        self.factor: tuple[np.ndarray, bool] | None = None
        scale = max(1.0, float(np.trace(matrix)) / matrix.shape[0])
        for shift in (0.0, REGULARIZATION * scale):
            try:
                self.factor = scipy.linalg.cho_factor(matrix + shift * np.eye(matrix.shape[0]))
                break
            except (np.linalg.LinAlgError, ValueError):
                logger.debug("Schur complement not positive definite at shift %.1e", shift)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.factor is not None:
            solution = scipy.linalg.cho_solve(self.factor, rhs)
        else:
            try:
                solution = scipy.linalg.lstsq(self.matrix, rhs)[0]
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise NumericalFailure(f"Newton system could not be solved: {exc}") from exc
        if not np.all(np.isfinite(solution)):
            raise NumericalFailure("Newton system produced a non-finite direction.")
        return solution


def solve_problem(problem: DiscriminationProblem, config: SolverConfig | None = None) -> SolverResult:
    return solve(compile_problem(problem), config)


def solve(form: SdpStandardForm, config: SolverConfig | None = None) -> SolverResult:
    config = config or SolverConfig()
    problem = form.problem
    settled = True
    if form.kind != "phase_one" and problem.J and not _uniform_strictly_feasible(problem):
        phase = _phase_one(problem, config)
        if _proves_infeasible(phase, config):
            return _infeasible(phase)
        settled = phase.status == "Optimal"
        if settled and form.kind == "primal" and form.face is None and phase.povm is not None and phase.dual is not None:
            face = exposed_face(problem, phase.povm, phase.dual)
            if face is not None:
                form = compile_face(problem, face)
    result = _interior_point(form, config, divergence_is_infeasible=not settled)
    logger.info(
        "%s solve: %s after %d iterations (primal %.12g, dual %.12g)",
        form.kind,
        result.status,
        result.iterations,
        result.primal_value,
        result.dual_value,
    )
    return result


def _uniform_strictly_feasible(problem: DiscriminationProblem | MinimaxProblem) -> bool:
    values = constraint_values(problem, uniform_povm(problem.dim, problem.M))
    return all(bound - value > 0.0 for bound, value in zip(problem.constraint_bounds, values))


def _phase_one(problem: DiscriminationProblem | MinimaxProblem, config: SolverConfig) -> SolverResult:
    logger.info("Uniform POVM is not strictly feasible; running phase one")
    return _interior_point(compile_phase_one(problem), config, divergence_is_infeasible=False)


def _proves_infeasible(phase: SolverResult, config: SolverConfig) -> bool:
    threshold = max(PHASE_ONE_FLOOR, 100.0 * config.feas_tol)
    if phase.dual is None or not phase.dual_value < -threshold:
        logger.info("Phase one found no certificate of infeasibility (ray value %.3e)", phase.dual_value)
        return False
    logger.info("Phase one certified infeasibility (ray value %.3e)", phase.dual_value)
    return True


def _infeasible(phase: SolverResult) -> SolverResult:
    return SolverResult(
        status="Infeasible",
        povm=None,
        dual=None,
        primal_value=math.nan,
        dual_value=math.nan,
        iterations=phase.iterations,
        residuals=phase.residuals,
        history=phase.history,
        infeasibility=InfeasibilityReport(
            phase_one_value=-phase.primal_value,
            ray=phase.dual,
            ray_value=phase.dual_value,
        ),
    )


def _interior_point(form: SdpStandardForm, config: SolverConfig, divergence_is_infeasible: bool) -> SolverResult:
    ws = _initial_point(form)
    history: list[IterationRecord] = []
    best: tuple[float, _Workspace, _Measure] | None = None
    status: SolverStatus = "IterationLimit"
    steps = (0.0, 0.0)
    for iteration in range(config.max_iters + 1):
        state = _measure(form, ws)
        history.append(
            IterationRecord(
                iteration=iteration,
                primal_value=state.primal_value,
                dual_value=state.dual_value,
                primal_residual=float(np.linalg.norm(state.r_p)),
                dual_residual=float(math.hypot(np.linalg.norm(state.R_d), np.linalg.norm(state.r_d))),
                mu=state.mu,
                step_primal=steps[0],
                step_dual=steps[1],
                structure_residual=max(structure_residual(ws.X), structure_residual(ws.Z)),
            )
        )
        logger.debug(
            "iter %3d primal %+.12e dual %+.12e pinf %.2e dinf %.2e mu %.2e",
            iteration,
            state.primal_value,
            state.dual_value,
            state.primal_residual,
            state.dual_residual,
            state.mu,
        )
        if best is None or state.merit < best[0]:
            best = (state.merit, ws.copy(), state)
        if _near_optimal(state, config):
            result = _finalize(form, ws, state, config, history, iteration, "IterationLimit")
            if result.status == "Optimal":
                return result
        if float(np.linalg.norm(ws.y)) > config.infeasibility_threshold:
            if divergence_is_infeasible:
                logger.info("Dual multipliers diverged at iteration %d; treating constraints as infeasible", iteration)
                return _diverged(state, history, iteration)
            logger.info("Dual multipliers diverged at iteration %d on a feasible problem; dual optimum not attained", iteration)
            status = "NumericalFailure"
            break
        if iteration == config.max_iters:
            break
        if state.mu < MU_FLOOR:
            status = "NumericalFailure"
            break
        try:
            steps = _newton_step(form, ws, state, config)
        except NumericalFailure as exc:
            logger.info("Newton step failed at iteration %d: %s", iteration, exc)
            status = "NumericalFailure"
            break
        if max(steps) < STALL_STEP:
            logger.info("Step lengths stalled at iteration %d", iteration)
            status = "NumericalFailure"
            break

    assert best is not None
    _, snapshot, state = best
    return _finalize(form, snapshot, state, config, history, len(history) - 1, status)


def _near_optimal(state: _Measure, config: SolverConfig) -> bool:
    return (
        state.gap <= 0.5 * config.gap_tol
        and state.primal_residual <= 0.1 * config.feas_tol
        and state.dual_residual <= 0.1 * config.feas_tol
    )


def _initial_point(form: SdpStandardForm) -> _Workspace:
    problem = form.problem
    outcomes, size = form.M, form.block_size
    pad = form.pad_blocks
    X = _restrict(form, np.repeat((np.eye(size) / outcomes)[None], outcomes, axis=0)) + pad
    uniform = uniform_povm(form.dim, outcomes)
    values = constraint_values(problem, uniform)
    bounds = problem.constraint_bounds
    violation = max(0.0, max((v - b for v, b in zip(values, bounds)), default=0.0)) + 1.0
    per_criterion = criterion_values(problem, uniform) if form.kind == "epigraph" else []

    x = np.ones(form.lp_size)
    for column, entry in enumerate(form.columns):
        if entry.role == "slack":
            room = bounds[entry.index] - values[entry.index]
            x[column] = room + violation if form.kind == "phase_one" else max(room, 1.0)
        elif entry.role == "violation":
            x[column] = violation
        elif entry.role == "criterion":
            x[column] = max(per_criterion[entry.index] - form.value_shift - 1.0, 1.0)

    if form.kind == "phase_one":
        row_multipliers = [0.5 / max(problem.J, 1)] * len(form.row_map)
    else:
        row_multipliers = [1.0 if entry.lower is None and not entry.tight else 0.0 for entry in form.row_map]
    lambdas = [0.0] * problem.J
    for entry, value in zip(form.row_map, row_multipliers):
        lambdas[entry.upper] = value
    weights = [2.0 / problem.K] * problem.K if form.kind == "epigraph" else []
    z_ops = z_operators(dual_target(form, weights or None), lambdas)
    level = 1.0 + max(float(np.linalg.norm(op.matrix, 2)) for op in z_ops)

    y = dual_vector(form, level * np.eye(form.dim), row_multipliers, weights)
    Z = project_complex_structure(form.cost_blocks - _adjoint(form, y)) + pad
    z = form.cost_lp - form.row_lp.T @ y
    return _Workspace(X=X, x=x, y=y, Z=Z, z=z)


def _measure(form: SdpStandardForm, ws: _Workspace) -> _Measure:
    r_p = form.rhs - _apply(form, ws.X, ws.x)
    pad = form.pad_blocks
    R_d = form.cost_blocks - _adjoint(form, ws.y) - ws.Z + pad
    r_d = form.cost_lp - form.row_lp.T @ ws.y - ws.z
    primal_objective = _inner(form.cost_blocks, ws.X) + float(form.cost_lp @ ws.x)
    dual_objective_value = float(form.rhs @ ws.y)
    primal_value = form.value_shift - primal_objective
    cost_scale = 1.0 + float(np.linalg.norm(form.cost_blocks)) + float(np.linalg.norm(form.cost_lp))
    return _Measure(
        r_p=r_p,
        R_d=R_d,
        r_d=r_d,
        primal_value=primal_value,
        dual_value=form.value_shift - dual_objective_value,
        mu=(_inner(ws.X - pad, ws.Z - pad) + float(ws.x @ ws.z)) / form.cone_size,
        primal_residual=float(np.linalg.norm(r_p)) / (1.0 + float(np.linalg.norm(form.rhs))),
        dual_residual=math.hypot(np.linalg.norm(R_d), np.linalg.norm(r_d)) / cost_scale,
        gap=abs(primal_objective - dual_objective_value) / (1.0 + abs(primal_value)),
    )


def _newton_step(form: SdpStandardForm, ws: _Workspace, state: _Measure, config: SolverConfig) -> tuple[float, float]:
    """One Mehrotra predictor-corrector step along the HKM direction."""
    rows = form.row_blocks
    Z_inv = _inverse_blocks(ws.Z)
    scaled = np.einsum("mab,imbc,mcd->imad", ws.X, rows, Z_inv, optimize=True)
    schur = np.einsum("imab,jmba->ij", rows, scaled, optimize=True)
    ratio = ws.x / ws.z
    schur = (schur + schur.T) / 2 + (form.row_lp * ratio) @ form.row_lp.T
    system = _SchurSystem(schur)
    base = (
        state.r_p
        + np.einsum("imab,mba->i", rows, ws.X @ state.R_d @ Z_inv, optimize=True)
        + form.row_lp @ (ratio * state.r_d)
    )

    def direction(R_c: np.ndarray, r_c: np.ndarray) -> Direction:
        dy = system.solve(base - np.einsum("imab,mab->i", rows, R_c, optimize=True) - form.row_lp @ r_c)
        dZ = project_complex_structure(state.R_d - np.einsum("i,imab->mab", dy, rows, optimize=True))
        dz = state.r_d - form.row_lp.T @ dy
        dX = _restrict(form, project_complex_structure(R_c - ws.X @ dZ @ Z_inv))
        dx = r_c - ratio * dz
        return dX, dx, dy, dZ, dz

    dX_a, dx_a, _, dZ_a, dz_a = direction(-ws.X, -ws.x)
    alpha_p = min(1.0, _step_to_boundary(ws.X, ws.x, dX_a, dx_a))
    alpha_d = min(1.0, _step_to_boundary(ws.Z, ws.z, dZ_a, dz_a))
    pad = form.pad_blocks
    mu_affine = (
        _inner(ws.X + alpha_p * dX_a - pad, ws.Z + alpha_d * dZ_a - pad)
        + float((ws.x + alpha_p * dx_a) @ (ws.z + alpha_d * dz_a))
    ) / form.cone_size
    sigma = min(1.0, max(0.0, mu_affine / state.mu)) ** 3
    target = sigma * state.mu

    R_c = target * Z_inv - ws.X - _symmetric(dX_a @ dZ_a @ Z_inv)
    r_c = (target - ws.x * ws.z - dx_a * dz_a) / ws.z
    dX, dx, dy, dZ, dz = direction(R_c, r_c)
    alpha_p = min(1.0, config.step_fraction * _step_to_boundary(ws.X, ws.x, dX, dx))
    alpha_d = min(1.0, config.step_fraction * _step_to_boundary(ws.Z, ws.z, dZ, dz))

    ws.X = project_complex_structure(ws.X + alpha_p * dX)
    ws.x = ws.x + alpha_p * dx
    ws.y = ws.y + alpha_d * dy
    ws.Z = project_complex_structure(ws.Z + alpha_d * dZ)
    ws.z = ws.z + alpha_d * dz
    return alpha_p, alpha_d


def _finalize(
    form: SdpStandardForm,
    ws: _Workspace,
    state: _Measure,
    config: SolverConfig,
    history: list[IterationRecord],
    iterations: int,
    status_if_failed: SolverStatus,
) -> SolverResult:
    problem = form.problem
    residuals = SolverResiduals(
        primal_residual=state.primal_residual,
        dual_residual=state.dual_residual,
        gap=state.gap,
        complementarity=state.mu,
    )
    try:
        povm = extract_povm(ws.X, form.face)
    except (NumericalFailure, ValueError) as exc:
        logger.info("Iterate does not normalize to a POVM: %s", exc)
        return SolverResult(
            status=status_if_failed,
            povm=None,
            dual=None,
            primal_value=state.primal_value,
            dual_value=state.dual_value,
            iterations=iterations,
            residuals=residuals,
            history=history,
            face=form.face,
        )

    weights: tuple[float, ...] | None = None
    if form.kind == "epigraph":
        per_criterion = criterion_values(problem, povm)
        weights = extract_weights(form, ws.y, per_criterion)
        primal_value = min(per_criterion)
    dual = extract_dual(form, ws.y, config.feas_tol, weights)

    if form.kind == "primal" and form.face is None:
        passed = _certified(problem, povm, dual, config)
        if not passed:
            refined = polish(problem, povm, dual)
            if refined is not None and _certified(problem, *refined, config):
                logger.debug("Support refinement closed the slackness residuals")
                povm, dual = refined
                passed = True

    values = constraint_values(problem, povm)
    violation = max(0.0, max((v - b for v, b in zip(values, problem.constraint_bounds)), default=0.0))
    if form.kind == "phase_one":
        primal_value = -violation
        violation = 0.0
    elif form.kind == "primal":
        primal_value = objective_value(problem, povm)
    dual_value = dual_objective(dual_target(form, weights), dual)
    if weights is not None:
        dual_value += float(np.dot(weights, problem.offsets))

    if form.kind != "primal" or form.face is not None:
        # on a face the reduced problem's own dual bound closes the gap
        bound = dual_value if form.face is None else state.dual_value
        passed = abs(bound - primal_value) <= config.gap_tol * (1.0 + abs(primal_value)) and violation <= config.feas_tol
    return SolverResult(
        status="Optimal" if passed else status_if_failed,
        povm=povm,
        dual=dual,
        primal_value=primal_value,
        dual_value=dual_value,
        iterations=iterations,
        residuals=residuals,
        history=history,
        weights=weights,
        face=form.face,
    )


def _certified(problem: DiscriminationProblem, povm: Povm, dual: DualCertificate, config: SolverConfig) -> bool:
    """Gap, feasibility and slackness all within the solver tolerances."""
    primal_value = objective_value(problem, povm)
    gap = abs(dual_objective(problem, dual) - primal_value)
    violation = max(
        (value - bound for value, bound in zip(constraint_values(problem, povm), problem.constraint_bounds)),
        default=0.0,
    )
    if gap > config.gap_tol * (1.0 + abs(primal_value)) or violation > config.feas_tol:
        return False
    return check_statement2(problem, povm, dual, tolerance=config.slack_tol).passed


def _diverged(state: _Measure, history: list[IterationRecord], iterations: int) -> SolverResult:
    return SolverResult(
        status="Infeasible",
        povm=None,
        dual=None,
        primal_value=math.nan,
        dual_value=math.nan,
        iterations=iterations,
        residuals=SolverResiduals(state.primal_residual, state.dual_residual, state.gap, state.mu),
        history=history,
        infeasibility=InfeasibilityReport(phase_one_value=math.nan, ray=None, ray_value=math.nan),
    )


def _apply(form: SdpStandardForm, X: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("imab,mab->i", form.row_blocks, X, optimize=True) + form.row_lp @ x


def _adjoint(form: SdpStandardForm, y: np.ndarray) -> np.ndarray:
    return np.einsum("i,imab->mab", y, form.row_blocks, optimize=True)


def _restrict(form: SdpStandardForm, blocks: np.ndarray) -> np.ndarray:
    return blocks if form.mask is None else blocks * form.mask


def _inner(left: np.ndarray, right: np.ndarray) -> float:
    return float(np.einsum("mab,mab->", left, right))


def _symmetric(blocks: np.ndarray) -> np.ndarray:
    return (blocks + np.swapaxes(blocks, -1, -2)) / 2


def _inverse_blocks(blocks: np.ndarray) -> np.ndarray:
    eye = np.eye(blocks.shape[-1])
    try:
        inverses = np.stack([scipy.linalg.cho_solve(scipy.linalg.cho_factor(block), eye) for block in blocks])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure("Dual slack block lost positive definiteness.") from exc
    return _symmetric(inverses)


def _step_to_boundary(blocks: np.ndarray, vector: np.ndarray, d_blocks: np.ndarray, d_vector: np.ndarray) -> float:
    limit = math.inf
    for block, change in zip(blocks, d_blocks):
        try:
            smallest = float(scipy.linalg.eigh(change, block, eigvals_only=True)[0])
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalFailure("Iterate block lost positive definiteness.") from exc
        if smallest < 0.0:
            limit = min(limit, -1.0 / smallest)
    shrinking = d_vector < 0.0
    if np.any(shrinking):
        limit = min(limit, float(np.min(-vector[shrinking] / d_vector[shrinking])))
    return limit
