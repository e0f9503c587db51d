from __future__ import annotations

from dataclasses import replace
import itertools
import math
import unittest

import numpy as np

from builders import plus_pair, pure_pair, seeded_problems, trine
from qsdopt.certificate import check_statement2
from qsdopt.config import SolverConfig
from qsdopt.operators import completeness_residual, helstrom_success, identity, psd_violation, random_ensemble, zeros
from qsdopt.problem import ConstraintRow, canonicalize_equalities, is_feasible, objective_value
from qsdopt.solver import solve_problem
from qsdopt.templates import (
    build_bounded_inconclusive,
    build_error_margin,
    build_minimum_error,
    optimal_inconclusive_value,
)

ORACLE_TOLERANCE = 1e-6
GRID_TOLERANCE = 1e-3
STRONG_DUALITY_INSTANCES = 100


def _success(ensemble) -> float:
    problem = build_minimum_error(ensemble)
    result = solve_problem(problem)
    return result.primal_value + problem.value_offset


def _bloch_grid_success(ensemble, steps: int = 100) -> float:
    """Best success over rank-one projective qubit measurements on a (theta, phi) grid, plus the trivial ones."""
    r0, r1 = ensemble.states[0].op.matrix, ensemble.states[1].op.matrix
    xi0, xi1 = ensemble.priors
    best = max(xi0, xi1)
    for theta, phi in itertools.product(np.linspace(0.0, math.pi, steps), np.linspace(0.0, 2.0 * math.pi, steps)):
        ket = np.array([math.cos(theta / 2.0), np.exp(1j * phi) * math.sin(theta / 2.0)])
        p0 = float(np.real(ket.conj() @ r0 @ ket))
        p1 = float(np.real(ket.conj() @ r1 @ ket))
        best = max(best, xi0 * p0 + xi1 * (1.0 - p1))
    return best


class MinimumErrorTests(unittest.TestCase):
    def test_helstrom_pair(self) -> None:
        problem = build_minimum_error(plus_pair())
        result = solve_problem(problem)
        self.assertEqual(result.status, "Optimal")
        self.assertAlmostEqual(result.primal_value + problem.value_offset, 0.8535534, delta=ORACLE_TOLERANCE)
        self.assertLessEqual(result.gap, 1e-7)
        self.assertLessEqual(completeness_residual(result.povm.outcomes), 1e-8)
        self.assertLessEqual(psd_violation(result.povm.outcomes), 1e-8)

    def test_random_two_state_ensembles_match_helstrom(self) -> None:
        for seed in range(10):
            for kind in ("pure", "mixed"):
                ensemble = random_ensemble(2 + seed % 2, 2, kind, seed=seed)
                with self.subTest(seed=seed, kind=kind):
                    self.assertAlmostEqual(_success(ensemble), helstrom_success(ensemble), delta=ORACLE_TOLERANCE)

    def test_trine_success(self) -> None:
        self.assertAlmostEqual(_success(trine()), 2.0 / 3.0, delta=ORACLE_TOLERANCE)

    def test_trine_objective_value(self) -> None:
        result = solve_problem(build_minimum_error(trine()))
        self.assertAlmostEqual(result.primal_value, -1.0 / 3.0, delta=ORACLE_TOLERANCE)

    def test_bloch_grid_oracle(self) -> None:
        for seed in range(5):
            ensemble = random_ensemble(2, 2, "mixed", seed=100 + seed)
            with self.subTest(seed=seed):
                solved = _success(ensemble)
                grid = _bloch_grid_success(ensemble)
                self.assertLessEqual(grid, solved + ORACLE_TOLERANCE)
                self.assertAlmostEqual(grid, solved, delta=GRID_TOLERANCE)

    def test_weak_duality_at_every_logged_iterate(self) -> None:
        for seed in range(10):
            ensemble = random_ensemble(2 + seed % 3, 2 + seed % 3, "mixed", seed=seed)
            result = solve_problem(build_minimum_error(ensemble))
            with self.subTest(seed=seed):
                self.assertGreater(len(result.history), 1)
                for record in result.history:
                    self.assertGreaterEqual(record.dual_value, record.primal_value - 1e-9 * (1.0 + abs(record.primal_value)))

    def test_solver_is_deterministic(self) -> None:
        problem = build_minimum_error(random_ensemble(3, 3, "mixed", seed=2))
        first, second = solve_problem(problem), solve_problem(problem)
        self.assertEqual(first.primal_value, second.primal_value)
        self.assertEqual(first.iterations, second.iterations)


class StrongDualityTests(unittest.TestCase):
    def test_seeded_random_instances(self) -> None:
        for index, problem in seeded_problems(STRONG_DUALITY_INSTANCES):
            result = solve_problem(problem)
            with self.subTest(index=index, dim=problem.dim, M=problem.M, J=problem.J):
                self.assertEqual(result.status, "Optimal")
                self.assertLessEqual(abs(result.dual_value - result.primal_value), 1e-6 * (1.0 + abs(result.primal_value)))
                self.assertTrue(is_feasible(problem, result.povm, tol=1e-7).feasible)
                self.assertAlmostEqual(objective_value(problem, result.povm), result.primal_value, delta=1e-12)
                report = check_statement2(problem, result.povm, result.dual, tolerance=1e-6)
                self.assertTrue(report.passed, report.violations)
                self.assertLessEqual(report.comp_slack_operator, SolverConfig().slack_tol)


class ScalingTests(unittest.TestCase):
    def test_scaled_objective_scales_value_and_keeps_measurement(self) -> None:
        for seed in (3, 5, 8):
            problem = build_minimum_error(random_ensemble(2, 2, "mixed", seed=seed))
            base = solve_problem(problem)
            for factor in (0.5, 2.0):
                scaled = solve_problem(replace(problem, objective_ops=tuple(op * factor for op in problem.objective_ops)))
                with self.subTest(seed=seed, factor=factor):
                    self.assertEqual(scaled.status, "Optimal")
                    self.assertAlmostEqual(scaled.primal_value, factor * base.primal_value, delta=ORACLE_TOLERANCE)
                    for left, right in zip(base.povm.outcomes, scaled.povm.outcomes):
                        self.assertLess(float(np.linalg.norm(left.matrix - right.matrix)), 1e-5)


class RedundantRowTests(unittest.TestCase):
    def test_equality_implied_by_completeness_is_harmless(self) -> None:
        ensemble = plus_pair()
        half = identity(2) * 0.5
        problem = canonicalize_equalities(
            2,
            (ensemble.weighted(0), ensemble.weighted(1)),
            [ConstraintRow((half, half), 1.0, "==", "redundant")],
        )
        result = solve_problem(problem)
        self.assertEqual(result.status, "Optimal")
        self.assertAlmostEqual(result.primal_value, helstrom_success(ensemble), delta=ORACLE_TOLERANCE)
        self.assertTrue(is_feasible(problem, result.povm, tol=1e-7).feasible)


class ErrorMarginTests(unittest.TestCase):
    def test_zero_margin_reaches_unambiguous_limit(self) -> None:
        for overlap in (0.3, 1.0 / math.sqrt(2.0), 0.9):
            problem = build_error_margin(pure_pair(overlap), epsilon=0.0)
            result = solve_problem(problem)
            with self.subTest(overlap=overlap):
                self.assertEqual(result.status, "Optimal")
                self.assertIsNotNone(result.face)
                self.assertTrue(is_feasible(problem, result.povm, tol=1e-8).feasible)
                self.assertAlmostEqual(result.primal_value, 1.0 - overlap, delta=ORACLE_TOLERANCE)

    def test_zero_margin_face_holds_the_unambiguous_outcomes(self) -> None:
        result = solve_problem(build_error_margin(pure_pair(0.5), epsilon=0.0))
        self.assertEqual(result.face.ranks, (1, 1, 2))
        self.assertEqual(result.face.tight, frozenset({0}))

    def test_small_margin_stays_feasible(self) -> None:
        problem = build_error_margin(pure_pair(0.5), epsilon=1e-4)
        result = solve_problem(problem)
        self.assertEqual(result.status, "Optimal")
        self.assertTrue(is_feasible(problem, result.povm, tol=1e-8).feasible)
        self.assertGreaterEqual(result.primal_value, 0.5 - ORACLE_TOLERANCE)

    def test_full_margin_matches_minimum_error(self) -> None:
        ensemble = random_ensemble(2, 3, "mixed", seed=17)
        relaxed = solve_problem(build_error_margin(ensemble, epsilon=1.0))
        self.assertEqual(relaxed.status, "Optimal")
        self.assertAlmostEqual(relaxed.primal_value, _success(ensemble), delta=ORACLE_TOLERANCE)

    def test_value_grows_with_margin(self) -> None:
        ensemble = pure_pair(0.6)
        values = [solve_problem(build_error_margin(ensemble, epsilon)).primal_value for epsilon in (0.02, 0.05, 0.1, 0.2)]
        for lower, upper in zip(values, values[1:]):
            self.assertLessEqual(lower, upper + ORACLE_TOLERANCE)


class BoundedInconclusiveTests(unittest.TestCase):
    def test_no_failure_matches_minimum_error(self) -> None:
        ensemble = random_ensemble(2, 3, "mixed", seed=31)
        result = solve_problem(build_bounded_inconclusive(ensemble, p=0.0, q=0.0))
        self.assertEqual(result.status, "Optimal")
        self.assertAlmostEqual(result.primal_value, _success(ensemble), delta=ORACLE_TOLERANCE)

    def test_relaxed_failure_row_matches_exact_failure(self) -> None:
        ensemble = random_ensemble(2, 2, "mixed", seed=41)
        blank = zeros(2)
        for p in (0.1, 0.3):
            exact = canonicalize_equalities(
                2,
                (ensemble.weighted(0), ensemble.weighted(1), blank),
                [ConstraintRow((blank, blank, ensemble.g_hat), p, "==", "failure")],
            )
            with self.subTest(p=p):
                relaxed_value = optimal_inconclusive_value(ensemble, p)
                exact_result = solve_problem(exact)
                self.assertEqual(exact_result.status, "Optimal")
                self.assertAlmostEqual(relaxed_value, exact_result.primal_value, delta=ORACLE_TOLERANCE)

    def test_value_is_monotone_in_failure_and_floor(self) -> None:
        for seed in (1, 2, 3):
            ensemble = random_ensemble(2, 2, "mixed", seed=seed)
            by_p = [solve_problem(build_bounded_inconclusive(ensemble, p=p, q=0.0)).primal_value for p in (0.0, 0.1, 0.3)]
            by_q = [solve_problem(build_bounded_inconclusive(ensemble, p=0.1, q=q)).primal_value for q in (0.0, 0.1, 0.2)]
            with self.subTest(seed=seed):
                for lower, upper in itertools.chain(zip(by_p[1:], by_p), zip(by_q[1:], by_q)):
                    self.assertLessEqual(lower, upper + ORACLE_TOLERANCE)

    def test_floor_above_optimal_inconclusive_value_is_infeasible(self) -> None:
        ensemble = pure_pair(1.0 / math.sqrt(2.0))
        self.assertLess(optimal_inconclusive_value(ensemble, 0.05), 0.9)
        result = solve_problem(build_bounded_inconclusive(ensemble, p=0.05, q=0.9))
        self.assertEqual(result.status, "Infeasible")
        self.assertIsNotNone(result.infeasibility)
        self.assertGreater(result.infeasibility.phase_one_value, 0.0)
        self.assertIsNotNone(result.infeasibility.ray)
        self.assertLess(result.infeasibility.ray_value, 0.0)
        self.assertIsNone(result.povm)
        self.assertTrue(math.isnan(result.primal_value))

    def test_floor_above_one_is_infeasible(self) -> None:
        base = build_bounded_inconclusive(plus_pair(), p=0.2, q=1.0)
        problem = replace(base, constraint_bounds=(-1.2, -1.2, -0.2))
        result = solve_problem(problem)
        self.assertEqual(result.status, "Infeasible")


class ConfigurationTests(unittest.TestCase):
    def test_iteration_limit_is_reported(self) -> None:
        problem = build_minimum_error(random_ensemble(3, 3, "mixed", seed=6))
        result = solve_problem(problem, SolverConfig(max_iters=2))
        self.assertEqual(result.status, "IterationLimit")
        self.assertEqual(len(result.history), 3)

    def test_history_records_every_iterate(self) -> None:
        result = solve_problem(build_minimum_error(plus_pair()))
        self.assertEqual([record.iteration for record in result.history], list(range(len(result.history))))
        self.assertTrue(all(record.structure_residual < 1e-8 for record in result.history))


if __name__ == "__main__":
    unittest.main()
