from __future__ import annotations

import unittest

import numpy as np

from builders import plus_pair, trine
from qsdopt.errors import CountMismatch, DimMismatch
from qsdopt.operators import Povm, identity, ket_state, random_ensemble, random_povm, zeros
from qsdopt.problem import BayesCost, constraint_values, criterion_values, objective_value, outcome_statistics
from qsdopt.templates import (
    build_bayes,
    build_bounded_inconclusive,
    build_error_margin,
    build_inconclusive_minimax,
    build_minimax_bayes,
    build_minimum_error,
    build_plural_sets,
)


def _abstain(dim: int, guesses: int) -> Povm:
    return Povm((*(zeros(dim) for _ in range(guesses)), identity(dim)))


class BayesTemplateTests(unittest.TestCase):
    def test_minimum_error_objective(self) -> None:
        ensemble = plus_pair()
        problem = build_minimum_error(ensemble)
        self.assertEqual((problem.M, problem.J, problem.value_offset), (2, 0, 1.0))
        self.assertTrue(np.allclose(problem.objective_ops[0].matrix, -ensemble.weighted(1).matrix))
        self.assertTrue(np.allclose(problem.objective_ops[1].matrix, -ensemble.weighted(0).matrix))

    def test_objective_is_minus_error_probability(self) -> None:
        ensemble = random_ensemble(3, 3, "mixed", seed=21)
        problem = build_minimum_error(ensemble)
        for seed in range(10):
            povm = random_povm(3, 3, seed)
            stats = outcome_statistics(ensemble, povm)
            self.assertAlmostEqual(objective_value(problem, povm), -stats.error, delta=1e-12)
            self.assertAlmostEqual(objective_value(problem, povm) + problem.value_offset, stats.success, delta=1e-12)

    def test_zero_costs_give_zero_objective(self) -> None:
        problem = build_bayes(plus_pair(), BayesCost(np.zeros((2, 2))))
        self.assertEqual(problem.value_offset, 0.0)
        self.assertAlmostEqual(objective_value(problem, random_povm(2, 2, seed=1)), 0.0, places=15)

    def test_cost_must_match_state_count(self) -> None:
        with self.assertRaises(CountMismatch):
            build_bayes(plus_pair(), BayesCost.minimum_error(3))

    def test_cost_is_required_without_minimum_error_flag(self) -> None:
        with self.assertRaises(ValueError):
            build_bayes(plus_pair())


class ErrorMarginTemplateTests(unittest.TestCase):
    def test_shape_and_bound(self) -> None:
        problem = build_error_margin(plus_pair(), epsilon=0.25)
        self.assertEqual((problem.M, problem.J), (3, 1))
        self.assertEqual(problem.constraint_bounds, (-0.75,))
        self.assertEqual(problem.constraint_labels, ("margin",))
        self.assertEqual(problem.outcome_labels[-1], "inconclusive")

    def test_always_abstaining_meets_any_margin(self) -> None:
        for epsilon in (0.0, 0.3, 1.0):
            problem = build_error_margin(plus_pair(), epsilon)
            values = constraint_values(problem, _abstain(2, 2))
            self.assertAlmostEqual(values[0], -1.0, places=14)
            self.assertLessEqual(values[0], problem.constraint_bounds[0] + 1e-14)

    def test_rejects_margin_outside_unit_interval(self) -> None:
        with self.assertRaises(ValueError):
            build_error_margin(plus_pair(), 1.5)


class BoundedInconclusiveTemplateTests(unittest.TestCase):
    def test_shape_and_bounds(self) -> None:
        problem = build_bounded_inconclusive(plus_pair(), p=0.2, q=0.1)
        self.assertEqual((problem.M, problem.J), (3, 3))
        self.assertEqual(problem.constraint_bounds, (-0.1, -0.1, -0.2))
        self.assertEqual(problem.constraint_labels, ("success:0", "success:1", "failure"))

    def test_failure_row_under_trivial_inconclusive_measurement(self) -> None:
        problem = build_bounded_inconclusive(plus_pair(), p=0.2, q=0.1)
        values = constraint_values(problem, _abstain(2, 2))
        self.assertAlmostEqual(values[2], -1.0, places=14)
        self.assertEqual(values[:2], [0.0, 0.0])

    def test_success_rows_use_unweighted_states(self) -> None:
        ensemble = plus_pair()
        problem = build_bounded_inconclusive(ensemble, p=0.0, q=0.0)
        self.assertTrue(np.allclose(problem.constraint_ops[0][0].matrix, -ensemble.states[0].op.matrix))
        self.assertTrue(np.allclose(problem.objective_ops[0].matrix, ensemble.weighted(0).matrix))

    def test_rejects_out_of_range_parameters(self) -> None:
        with self.assertRaises(ValueError):
            build_bounded_inconclusive(plus_pair(), p=-0.1, q=0.0)
        with self.assertRaises(ValueError):
            build_bounded_inconclusive(plus_pair(), p=0.1, q=1.1)


class MinimaxTemplateTests(unittest.TestCase):
    def test_minimax_bayes_criteria_are_conditional_costs(self) -> None:
        ensemble = trine()
        problem = build_minimax_bayes(ensemble.states)
        self.assertEqual((problem.K, problem.M, problem.J), (3, 3, 0))
        povm = random_povm(2, 3, seed=5)
        values = criterion_values(problem, povm)
        for k, value in enumerate(values):
            correct = float(np.trace(ensemble.states[k].op.matrix @ povm[k].matrix).real)
            self.assertAlmostEqual(value, -(1.0 - correct), places=12)

    def test_inconclusive_minimax_rows_bound_failure(self) -> None:
        ensemble = plus_pair()
        problem = build_inconclusive_minimax(ensemble.states, p=0.2)
        self.assertEqual((problem.K, problem.M, problem.J), (2, 3, 2))
        self.assertEqual(problem.constraint_bounds, (0.2, 0.2))
        values = constraint_values(problem, _abstain(2, 2))
        self.assertEqual([round(v, 12) for v in values], [1.0, 1.0])

    def test_plural_sets_require_matching_shapes(self) -> None:
        pair = plus_pair()
        with self.assertRaises(CountMismatch):
            build_plural_sets([pair, trine()])
        qutrit = random_ensemble(3, 2, "pure", seed=0)
        with self.assertRaises(DimMismatch):
            build_plural_sets([pair, qutrit])

    def test_plural_sets_use_weighted_states(self) -> None:
        first = plus_pair()
        second = random_ensemble(2, 2, "mixed", seed=8)
        problem = build_plural_sets([first, second])
        self.assertEqual((problem.K, problem.M), (2, 2))
        self.assertTrue(np.allclose(problem.criterion_ops[1][0].matrix, second.weighted(0).matrix))

    def test_minimax_bayes_rejects_mixed_dimensions(self) -> None:
        with self.assertRaises(DimMismatch):
            build_minimax_bayes([ket_state([1.0, 0.0]), ket_state([1.0, 0.0, 0.0])])


if __name__ == "__main__":
    unittest.main()
