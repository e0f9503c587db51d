from __future__ import annotations

from collections.abc import Sequence
import logging

import numpy as np

from qsdopt.errors import LengthMismatch
from qsdopt.models import CertificateReport, DualCertificate
from qsdopt.operators import HermitianOperator, hermitian_part, min_eigenvalue, trace
from qsdopt.problem import DiscriminationProblem, OutcomeLike, constraint_values, is_feasible, objective_value, outcome_operators

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-6
KERNEL_EIGENVALUE_FLOOR = 1e-6


def z_operators(problem: DiscriminationProblem, lambdas: Sequence[float]) -> list[HermitianOperator]:
    weights = [float(value) for value in lambdas]
    if len(weights) != problem.J:
        raise LengthMismatch(f"Expected {problem.J} multipliers, got {len(weights)}")
    result = []
    for m in range(problem.M):
        total = problem.objective_ops[m].matrix.copy()
        for j, weight in enumerate(weights):
            if weight:
                total = total - weight * problem.constraint_ops[j][m].matrix
        result.append(HermitianOperator(total))
    return result


def shift_to_feasibility(problem: DiscriminationProblem, certificate: DualCertificate) -> DualCertificate:
    """Raise X by the smallest multiple of the identity that restores X >= z_m(lambda) for every m."""
    shift = max(
        (max(0.0, -min_eigenvalue(certificate.X - z)) for z in z_operators(problem, certificate.lambdas)),
        default=0.0,
    )
    if shift == 0.0:
        return certificate
    logger.debug("Shifting dual operator by %.3e to restore dual feasibility", shift)
    return DualCertificate(X=HermitianOperator(certificate.X.matrix + shift * np.eye(problem.dim)), lambdas=certificate.lambdas)


def dual_objective(problem: DiscriminationProblem, certificate: DualCertificate) -> float:
    if len(certificate.lambdas) != problem.J:
        raise LengthMismatch(f"Expected {problem.J} multipliers, got {len(certificate.lambdas)}")
    return trace(certificate.X) + float(np.dot(certificate.lambdas, problem.constraint_bounds))


def build_statement3_certificate(
    problem: DiscriminationProblem,
    povm: OutcomeLike,
    lambdas: Sequence[float],
) -> DualCertificate:
    """Materialize X = sum_n z_n(lambda) Pi_n for a feasible POVM and given multipliers."""
    outcomes = outcome_operators(problem.dim, problem.M, povm)
    z_ops = z_operators(problem, lambdas)
    total = sum((z.matrix @ pi.matrix for z, pi in zip(z_ops, outcomes)), np.zeros((problem.dim, problem.dim), dtype=complex))
    return DualCertificate(X=hermitian_part(total), lambdas=tuple(lambdas))


def check_statement2(
    problem: DiscriminationProblem,
    povm: OutcomeLike,
    certificate: DualCertificate,
    tolerance: float = DEFAULT_TOLERANCE,
) -> CertificateReport:
    outcomes = outcome_operators(problem.dim, problem.M, povm)
    feasibility = is_feasible(problem, outcomes, tol=tolerance)
    violations = [f"primal: row {row} violated" for row in feasibility.violated_rows]
    if feasibility.psd_violation > tolerance:
        violations.append(f"primal: outcome not PSD (violation {feasibility.psd_violation:.3e})")
    if feasibility.completeness_residual > tolerance:
        violations.append(f"primal: outcomes do not sum to identity (residual {feasibility.completeness_residual:.3e})")

    z_ops = z_operators(problem, certificate.lambdas)
    dual_feas = 0.0
    comp_operator = 0.0
    for m, (z, pi) in enumerate(zip(z_ops, outcomes)):
        difference = certificate.X - z
        shortfall = max(0.0, -min_eigenvalue(difference))
        product = float(np.linalg.norm(difference.matrix @ pi.matrix))
        if shortfall > tolerance:
            violations.append(f"dual_feasibility: X - z[{problem.outcome_label(m)}] has eigenvalue {-shortfall:.3e}")
        if product > tolerance:
            violations.append(f"operator_slackness: |(X - z)Pi| = {product:.3e} at {problem.outcome_label(m)}")
        dual_feas = max(dual_feas, shortfall)
        comp_operator = max(comp_operator, product)

    values = constraint_values(problem, outcomes)
    comp_scalar = 0.0
    for j, (weight, bound, value) in enumerate(zip(certificate.lambdas, problem.constraint_bounds, values)):
        product = abs(weight * (bound - value))
        if product > tolerance:
            violations.append(f"scalar_slackness: lambda*slack = {product:.3e} at {problem.constraint_label(j)}")
        comp_scalar = max(comp_scalar, product)

    primal = objective_value(problem, outcomes)
    dual = dual_objective(problem, certificate)
    return CertificateReport(
        dual_feas_residual=dual_feas,
        comp_slack_operator=comp_operator,
        comp_slack_scalar=comp_scalar,
        gap=abs(primal - dual),
        primal_value=primal,
        dual_value=dual,
        tolerance=tolerance,
        primal_feasible=feasibility.feasible,
        lambdas_clamped=certificate.clamped,
        verdicts={
            "dual_feasibility": dual_feas <= tolerance,
            "operator_slackness": comp_operator <= tolerance,
            "scalar_slackness": comp_scalar <= tolerance,
        },
        violations=violations,
    )


def kernel_residual(
    problem: DiscriminationProblem,
    povm: OutcomeLike,
    certificate: DualCertificate,
    floor: float = KERNEL_EIGENVALUE_FLOOR,
) -> float:
    """Largest quadratic form of X - z_m over eigenvectors of Pi_m with eigenvalue above floor."""
    outcomes = outcome_operators(problem.dim, problem.M, povm)
    worst = 0.0
    for z, pi in zip(z_operators(problem, certificate.lambdas), outcomes):
        values, vectors = np.linalg.eigh(pi.matrix)
        support = vectors[:, values > floor]
        if support.size == 0:
            continue
        forms = np.einsum("ik,ij,jk->k", support.conj(), (certificate.X - z).matrix, support)
        worst = max(worst, float(np.max(np.abs(forms))))
    return worst
