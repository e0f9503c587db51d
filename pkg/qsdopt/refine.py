"""Post-solve refinement on the supports of a nearly optimal primal-dual pair.

An interior-point iterate only approaches complementarity: (X - z_m) Pi_m is of
the order of the square root of the remaining gap. Once the supports of Pi_m
and X - z_m are visible, both sides can be moved onto them by two small linear
least-squares corrections, after which the slackness products vanish to
rounding. The same support split, applied to a phase-one dual, exposes the face
that holds every feasible POVM when no strictly feasible one exists.
"""

from __future__ import annotations

from collections.abc import Sequence
import logging

import numpy as np

from qsdopt.certificate import shift_to_feasibility, z_operators
from qsdopt.embedding import hermitian_basis
from qsdopt.models import DualCertificate, Face
from qsdopt.operators import Povm, hermitian_part, normalize_povm
from qsdopt.problem import DiscriminationProblem, MinimaxProblem, constraint_values
from qsdopt.standard_form import slack_rows

logger = logging.getLogger(__name__)

SUPPORT_RESIDUAL = 1e-7
PSD_FLOOR = 1e-9


def support_split(pi: np.ndarray, slack: np.ndarray) -> tuple[np.ndarray, int]:
    """Eigenframe of slack with the directions where pi outweighs slack first, and their count."""
    values, vectors = np.linalg.eigh((slack + slack.conj().T) / 2)
    weights = np.einsum("ik,ij,jk->k", vectors.conj(), pi, vectors).real
    support = weights > values
    return np.hstack([vectors[:, support], vectors[:, ~support]]), int(support.sum())


def active_rows(problem: DiscriminationProblem | MinimaxProblem, povm: Povm, lambdas: Sequence[float]) -> list[int]:
    """Rows whose multiplier outweighs their slack."""
    values = constraint_values(problem, povm)
    return [
        j
        for j, (weight, bound, value) in enumerate(zip(lambdas, problem.constraint_bounds, values))
        if weight > bound - value
    ]


def exposed_face(problem: DiscriminationProblem, povm: Povm, ray: DualCertificate) -> Face | None:
    """Face exposed by a phase-one dual (X, lambda) of value zero, or None when it is the whole cone.

    W_m = X + sum_j lambda_j a_{j,m} is PSD and sum_m Tr(W_m Pi_m) = 0 for every
    feasible Pi, so each Pi_m lives in the kernel of W_m and every row with a
    positive multiplier holds with equality.
    """
    frames = []
    ranks = []
    for m, outcome in enumerate(povm.outcomes):
        slack = ray.X.matrix.copy()
        for j, weight in enumerate(ray.lambdas):
            if weight:
                slack = slack + weight * problem.constraint_ops[j][m].matrix
        frame, rank = support_split(outcome.matrix, slack)
        frames.append(frame)
        ranks.append(rank)
    tight = frozenset(active_rows(problem, povm, ray.lambdas)) & slack_rows(problem)
    face = Face(frames=np.stack(frames), ranks=tuple(ranks), tight=tight)
    if face.trivial:
        return None
    logger.info("Feasible POVMs lie on a face: ranks %s, tight rows %s", list(face.ranks), sorted(face.tight))
    return face


def polish(
    problem: DiscriminationProblem,
    povm: Povm,
    certificate: DualCertificate,
) -> tuple[Povm, DualCertificate] | None:
    """Move a nearly optimal pair onto its supports; None when the corrections are inconsistent."""
    slacks = [(certificate.X - z).matrix for z in z_operators(problem, certificate.lambdas)]
    supports = []
    for outcome, slack in zip(povm.outcomes, slacks):
        frame, rank = support_split(outcome.matrix, slack)
        supports.append(frame[:, :rank])
    active = active_rows(problem, povm, certificate.lambdas)
    refined_povm = _primal_on_supports(problem, povm, supports, active)
    if refined_povm is None:
        return None
    refined_dual = _dual_on_supports(problem, certificate, supports, active)
    if refined_dual is None:
        return None
    return refined_povm, shift_to_feasibility(problem, refined_dual)


def _primal_on_supports(
    problem: DiscriminationProblem,
    povm: Povm,
    supports: list[np.ndarray],
    active: list[int],
) -> Povm | None:
    """Closest Pi_m = V_m Y_m V_m^dag meeting completeness and the active rows with equality."""
    basis = hermitian_basis(problem.dim)
    columns: list[np.ndarray] = []
    start: list[float] = []
    layout: list[tuple[int, np.ndarray]] = []
    for m, support in enumerate(supports):
        rank = support.shape[1]
        if rank == 0:
            continue
        current = support.conj().T @ povm.outcomes[m].matrix @ support
        for element in hermitian_basis(rank):
            lifted = support @ element @ support.conj().T
            row_values = [np.trace(problem.constraint_ops[j][m].matrix @ lifted).real for j in active]
            columns.append(np.concatenate([np.einsum("kab,ba->k", basis, lifted).real, row_values]))
            start.append(float(np.trace(element @ current).real))
            layout.append((m, element))
    if not columns:
        return None
    system = np.stack(columns, axis=1)
    rhs = np.concatenate([np.trace(basis, axis1=1, axis2=2).real, [problem.constraint_bounds[j] for j in active]])
    params = _closest_solution(system, rhs, np.array(start))
    if params is None:
        return None

    outcomes = [np.zeros((problem.dim, problem.dim), dtype=complex) for _ in supports]
    for value, (m, element) in zip(params, layout):
        outcomes[m] = outcomes[m] + value * (supports[m] @ element @ supports[m].conj().T)
    smallest = min(float(np.linalg.eigvalsh(hermitian_part(block).matrix)[0]) for block in outcomes)
    if smallest < -PSD_FLOOR:
        logger.debug("Support correction left an eigenvalue of %.3e", smallest)
        return None
    return normalize_povm(outcomes)


def _dual_on_supports(
    problem: DiscriminationProblem,
    certificate: DualCertificate,
    supports: list[np.ndarray],
    active: list[int],
) -> DualCertificate | None:
    """Closest (X, lambda) with (X - z_m(lambda)) V_m = 0 for every m; inactive multipliers become 0."""
    basis = hermitian_basis(problem.dim)
    used = [m for m, support in enumerate(supports) if support.shape[1]]
    if not used:
        return None
    unknowns = [[element] * problem.M for element in basis]
    unknowns += [[op.matrix for op in problem.constraint_ops[j]] for j in active]
    columns = [_stacked_images(matrices, supports, used) for matrices in unknowns]
    targets = _stacked_images([op.matrix for op in problem.objective_ops], supports, used)
    start = np.concatenate(
        [
            np.einsum("kab,ba->k", basis, certificate.X.matrix).real,
            [certificate.lambdas[j] for j in active],
        ]
    )
    params = _closest_solution(np.stack(columns, axis=1), targets, start)
    if params is None:
        return None
    lambdas = [0.0] * problem.J
    for j, value in zip(active, params[len(basis) :]):
        if value < -PSD_FLOOR:
            logger.debug("Support correction made the multiplier of row %d negative (%.3e)", j, value)
            return None
        lambdas[j] = max(float(value), 0.0)
    x_hat = np.einsum("k,kab->ab", params[: len(basis)], basis)
    return DualCertificate(X=hermitian_part(x_hat), lambdas=tuple(lambdas))


def _stacked_images(matrices: Sequence[np.ndarray], supports: list[np.ndarray], used: list[int]) -> np.ndarray:
    parts = []
    for m in used:
        image = matrices[m] @ supports[m]
        parts.extend([image.real.ravel(), image.imag.ravel()])
    return np.concatenate(parts)


def _closest_solution(system: np.ndarray, rhs: np.ndarray, start: np.ndarray) -> np.ndarray | None:
    """start plus the least-norm correction solving system @ params = rhs, or None when inconsistent."""
    correction = np.linalg.lstsq(system, rhs - system @ start, rcond=None)[0]
    params = start + correction
    residual = float(np.linalg.norm(system @ params - rhs))
    if residual > SUPPORT_RESIDUAL * (1.0 + float(np.linalg.norm(rhs))):
        logger.debug("Support system is inconsistent (residual %.3e)", residual)
        return None
    return params
