from __future__ import annotations

import cmath
import math
import unittest

from hypothesis import given, strategies as st
import numpy as np

from builders import TRINE_ANGLE, plus_pair, rotation, trine, trine_group
from qsdopt.errors import CovarianceViolation, DimMismatch
from qsdopt.minimax import check_minimax, solve_minimax
from qsdopt.models import DualCertificate
from qsdopt.operators import (
    HermitianOperator,
    Povm,
    StateEnsemble,
    identity,
    ket_state,
    random_hermitian,
    random_povm,
    random_unitary,
    zeros,
)
from qsdopt.problem import constraint_values, is_feasible, objective_value
from qsdopt.symmetry import (
    FiniteGroup,
    GroupElement,
    act,
    average_povm,
    check_povm_covariance,
    check_problem_covariance,
    compose,
    covariant_solve,
    cyclic_group,
    identity_element,
    inverse,
    same_action,
    symmetrize_dual,
    symmetrize_minimax,
    transform_povm,
    trivial_group,
    weight_covariance,
)
from qsdopt.templates import (
    build_bounded_inconclusive,
    build_error_margin,
    build_minimax_bayes,
    build_minimum_error,
    build_plural_sets,
)


def _max_distance(a: Povm, b: Povm) -> float:
    return max(float(np.linalg.norm(x.matrix - y.matrix)) for x, y in zip(a.outcomes, b.outcomes))


class GroupElementTests(unittest.TestCase):
    def test_rejects_non_unitary_operator(self) -> None:
        with self.assertRaises(ValueError):
            GroupElement("s", 2.0 * np.eye(2), (0, 1))

    def test_rejects_non_square_operator(self) -> None:
        with self.assertRaises(DimMismatch):
            GroupElement("s", np.ones((2, 3)), (0, 1))

    def test_rejects_invalid_permutation(self) -> None:
        with self.assertRaises(ValueError):
            GroupElement("s", np.eye(2), (0, 0))

    def test_global_phase_is_ignored(self) -> None:
        base = GroupElement("r", rotation(0.4), (1, 0))
        shifted = GroupElement("r'", cmath.exp(0.7j) * rotation(0.4), (1, 0))
        self.assertTrue(same_action(base, shifted))

    def test_relabelling_distinguishes_elements(self) -> None:
        self.assertFalse(same_action(GroupElement("a", np.eye(2), (0, 1)), GroupElement("b", np.eye(2), (1, 0))))

    @given(
        angle=st.floats(min_value=-math.pi, max_value=math.pi),
        perm=st.permutations([0, 1, 2]),
        antiunitary=st.booleans(),
    )
    def test_element_times_inverse_is_identity(self, angle: float, perm: list[int], antiunitary: bool) -> None:
        g = GroupElement("g", rotation(angle), tuple(perm), antiunitary=antiunitary)
        unit = identity_element(2, 3)
        self.assertTrue(same_action(compose(g, inverse(g)), unit))
        self.assertTrue(same_action(compose(inverse(g), g), unit))


class ActionTests(unittest.TestCase):
    def test_rotation_carries_trine_states_forward(self) -> None:
        states = trine().states
        g = GroupElement("r", rotation(TRINE_ANGLE), (1, 2, 0))
        for k in range(3):
            image = act(g, states[k].op)
            np.testing.assert_allclose(image.matrix, states[(k + 1) % 3].op.matrix, atol=1e-12)

    def test_antiunitary_element_conjugates(self) -> None:
        g = GroupElement("c", np.eye(2), (0, 1), antiunitary=True)
        image = act(g, ket_state([1.0, 1.0j]).op)
        np.testing.assert_allclose(image.matrix, ket_state([1.0, -1.0j]).op.matrix, atol=1e-12)

    @given(seed=st.integers(min_value=0, max_value=2**31 - 1), flags=st.tuples(st.booleans(), st.booleans()))
    def test_action_follows_composition(self, seed: int, flags: tuple[bool, bool]) -> None:
        rng = np.random.default_rng(seed)
        g = GroupElement("g", random_unitary(3, rng), (1, 0), antiunitary=flags[0])
        h = GroupElement("h", random_unitary(3, rng), (0, 1), antiunitary=flags[1])
        a = random_hermitian(3, rng)
        np.testing.assert_allclose(act(g, act(h, a)).matrix, act(compose(g, h), a).matrix, atol=1e-10)

    def test_squares_follow_the_group_table(self) -> None:
        group = cyclic_group(GroupElement("t", rotation(TRINE_ANGLE), (1, 2, 0), antiunitary=True))
        self.assertEqual(group.order, 6)
        a = random_hermitian(2, np.random.default_rng(5))
        for i, g in enumerate(group):
            square = group.elements[group.table[i][i]]
            with self.subTest(element=g.label):
                np.testing.assert_allclose(act(g, act(g, a)).matrix, act(square, a).matrix, atol=1e-10)
                self.assertFalse(square.antiunitary)

    def test_act_rejects_other_dimension(self) -> None:
        with self.assertRaises(DimMismatch):
            act(GroupElement("e", np.eye(2), (0,)), identity(3))

    def test_symmetrized_dual_is_invariant(self) -> None:
        problem = build_bounded_inconclusive(trine(), p=0.2, q=0.1)
        group = trine_group(perm_M=(1, 2, 0, 3), perm_J=(1, 2, 0, 3))
        skewed = DualCertificate(X=HermitianOperator(np.diag([0.1, -0.3]).astype(complex)), lambdas=(0.3, 0.0, 0.0, 0.2))
        averaged = symmetrize_dual(problem, group, skewed)
        np.testing.assert_allclose(averaged.X.matrix, -0.1 * np.eye(2), atol=1e-12)
        np.testing.assert_allclose(averaged.lambdas, (0.1, 0.1, 0.1, 0.2), atol=1e-12)

    def test_symmetrize_dual_checks_multiplier_count(self) -> None:
        certificate = DualCertificate(X=zeros(2), lambdas=(0.1,))
        with self.assertRaises(ValueError):
            symmetrize_dual(build_minimum_error(trine()), trine_group(), certificate)

class FiniteGroupTests(unittest.TestCase):
    def test_trine_rotation_generates_order_three(self) -> None:
        group = trine_group()
        self.assertEqual(group.order, 3)
        for index, g in enumerate(group.elements):
            self.assertTrue(same_action(compose(g, group.inverse_of(index)), identity_element(2, 3)))

    def test_missing_identity_is_rejected(self) -> None:
        with self.assertRaises(ValueError):
            FiniteGroup((GroupElement("r", rotation(TRINE_ANGLE), (1, 2, 0)),))

    def test_unclosed_set_is_rejected(self) -> None:
        with self.assertRaises(ValueError):
            FiniteGroup((identity_element(2, 3), GroupElement("r", rotation(TRINE_ANGLE), (1, 2, 0))))

    def test_repeated_action_is_rejected(self) -> None:
        with self.assertRaises(ValueError):
            FiniteGroup((identity_element(2, 2), GroupElement("e'", -np.eye(2), (0, 1))))

    def test_mismatched_elements_are_rejected(self) -> None:
        with self.assertRaises(DimMismatch):
            FiniteGroup((identity_element(2, 3), identity_element(2, 2)))


class CovarianceTests(unittest.TestCase):
    def test_trine_minimum_error_is_covariant(self) -> None:
        report = check_problem_covariance(build_minimum_error(trine()), trine_group())
        self.assertTrue(report.passed, report.violations)
        self.assertLess(report.max_residual, 1e-12)

    def test_wrong_outcome_relabelling_is_reported(self) -> None:
        group = trine_group(perm_M=(0, 2, 1))
        self.assertEqual(group.order, 6)
        report = check_problem_covariance(build_minimum_error(trine()), group)
        self.assertFalse(report.passed)
        self.assertTrue(all(v.startswith("g=") and " m=" in v for v in report.violations))

    def test_bounded_inconclusive_rows_follow_the_rotation(self) -> None:
        problem = build_bounded_inconclusive(trine(), p=0.2, q=0.1)
        good = check_problem_covariance(problem, trine_group(perm_M=(1, 2, 0, 3), perm_J=(1, 2, 0, 3)))
        self.assertTrue(good.passed, good.violations)
        broken = check_problem_covariance(problem, trine_group(perm_M=(1, 2, 0, 3), perm_J=(2, 0, 1, 3)))
        self.assertFalse(broken.passed)
        self.assertTrue(any(" j=" in v for v in broken.violations))

    def test_shape_mismatch_is_reported_with_infinite_residual(self) -> None:
        report = check_problem_covariance(build_minimum_error(plus_pair()), trine_group())
        self.assertFalse(report.passed)
        self.assertEqual(report.max_residual, float("inf"))
        self.assertTrue(report.violations)

    def test_trivial_group_always_passes(self) -> None:
        problem = build_error_margin(plus_pair(), 0.2)
        self.assertTrue(check_problem_covariance(problem, trivial_group(2, 3, 1)).passed)


class GroupAverageTests(unittest.TestCase):
    def setUp(self) -> None:
        self.problem = build_error_margin(trine(), epsilon=0.5)
        self.group = trine_group(perm_M=(1, 2, 0, 3), perm_J=(0,))
        noisy = random_povm(2, 4, seed=12)
        abstain = (zeros(2), zeros(2), zeros(2), identity(2))
        self.povm = Povm(tuple(0.5 * a + 0.5 * b for a, b in zip(noisy.outcomes, abstain)))

    def test_average_is_idempotent(self) -> None:
        once = average_povm(self.group, self.povm)
        twice = average_povm(self.group, once)
        self.assertLess(_max_distance(once, twice), 1e-12)
        self.assertLess(check_povm_covariance(self.group, once), 1e-12)

    def test_average_keeps_feasibility_and_objective(self) -> None:
        self.assertTrue(is_feasible(self.problem, self.povm).feasible)
        averaged = average_povm(self.group, self.povm)
        self.assertTrue(is_feasible(self.problem, averaged).feasible)
        self.assertAlmostEqual(objective_value(self.problem, averaged), objective_value(self.problem, self.povm), delta=1e-12)
        self.assertAlmostEqual(
            constraint_values(self.problem, averaged)[0],
            constraint_values(self.problem, self.povm)[0],
            delta=1e-12,
        )

    def test_single_element_transform_keeps_objective(self) -> None:
        moved = transform_povm(self.group.elements[1], self.povm)
        self.assertAlmostEqual(objective_value(self.problem, moved), objective_value(self.problem, self.povm), delta=1e-12)


class CovariantSolveTests(unittest.TestCase):
    def test_trine_solution_is_symmetrized_and_certified(self) -> None:
        problem = build_minimum_error(trine())
        outcome = covariant_solve(problem, trine_group())
        self.assertAlmostEqual(outcome.value_after + problem.value_offset, 2.0 / 3.0, delta=1e-6)
        self.assertLess(outcome.povm_residual, 1e-10)
        self.assertIsNotNone(outcome.certificate)
        self.assertTrue(outcome.certificate.passed, outcome.certificate.violations)
        self.assertTrue(outcome.objective_preserved)
        self.assertTrue(outcome.passed)
        self.assertEqual(outcome.result.primal_value, outcome.value_after)

    def test_broken_group_is_refused(self) -> None:
        with self.assertRaises(CovarianceViolation) as caught:
            covariant_solve(build_minimum_error(trine()), trine_group(perm_M=(0, 2, 1)))
        self.assertFalse(caught.exception.report.passed)

    def test_minimax_weights_become_invariant(self) -> None:
        problem = build_minimax_bayes(trine().states)
        group = trine_group(perm_M=(1, 2, 0), perm_K=(1, 2, 0))
        self.assertTrue(check_problem_covariance(problem, group).passed)
        symmetric = symmetrize_minimax(problem, group, solve_minimax(problem))
        self.assertAlmostEqual(symmetric.value, -1.0 / 3.0, delta=1e-6)
        self.assertLess(weight_covariance(group, symmetric.mu), 1e-12)
        self.assertAlmostEqual(sum(symmetric.mu), 1.0, places=9)

    def test_plural_sets_minimax_is_symmetrized_and_certified(self) -> None:
        sets = [
            StateEnsemble(
                (ket_state(rotation(k * TRINE_ANGLE) @ [1.0, 0.0]), ket_state(rotation(k * TRINE_ANGLE + math.pi / 4) @ [1.0, 0.0])),
                (0.5, 0.5),
            )
            for k in range(3)
        ]
        problem = build_plural_sets(sets)
        group = trine_group(perm_M=(0, 1), perm_K=(1, 2, 0))
        self.assertTrue(check_problem_covariance(problem, group).passed)
        solution = solve_minimax(problem)
        symmetric = symmetrize_minimax(problem, group, solution)
        self.assertAlmostEqual(symmetric.value, solution.value, delta=1e-6)
        self.assertLess(check_povm_covariance(group, symmetric.povm), 1e-9)
        self.assertLess(weight_covariance(group, symmetric.mu), 1e-12)
        report = check_minimax(problem, symmetric.mu, symmetric.povm, tolerance=1e-5)
        self.assertTrue(report.passed, report.violated)


if __name__ == "__main__":
    unittest.main()
