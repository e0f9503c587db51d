"""Small ensembles and groups shared by the test modules."""

from __future__ import annotations

from collections.abc import Iterator
import math

import numpy as np

from qsdopt.operators import StateEnsemble, ket_state, random_ensemble
from qsdopt.problem import DiscriminationProblem
from qsdopt.symmetry import FiniteGroup, GroupElement, cyclic_group
from qsdopt.templates import build_error_margin, build_minimum_error

TRINE_ANGLE = 2.0 * math.pi / 3.0


def pure_pair(overlap: float, priors: tuple[float, float] = (0.5, 0.5)) -> StateEnsemble:
    """|0> and a real ket with <0|psi> = overlap."""
    states = (ket_state([1.0, 0.0]), ket_state([overlap, math.sqrt(1.0 - overlap**2)]))
    return StateEnsemble(states, priors)


def plus_pair() -> StateEnsemble:
    return StateEnsemble((ket_state([1.0, 0.0]), ket_state([1.0, 1.0])), (0.5, 0.5))


def rotation(angle: float) -> np.ndarray:
    return np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]], dtype=complex)


def trine() -> StateEnsemble:
    states = tuple(ket_state([math.cos(k * TRINE_ANGLE), math.sin(k * TRINE_ANGLE)]) for k in range(3))
    return StateEnsemble(states, (1 / 3, 1 / 3, 1 / 3))


def trine_group(
    perm_M: tuple[int, ...] = (1, 2, 0),
    perm_J: tuple[int, ...] = (),
    perm_K: tuple[int, ...] | None = None,
) -> FiniteGroup:
    """Z3 generated by the 120 degree rotation that maps trine state k to k+1."""
    return cyclic_group(GroupElement("r", rotation(TRINE_ANGLE), perm_M, perm_J, perm_K))


def seeded_problems(count: int, seed: int = 2024) -> Iterator[tuple[int, DiscriminationProblem]]:
    """Minimum-error and error-margin problems on random ensembles, alternating."""
    rng = np.random.default_rng(seed)
    for index in range(count):
        dim = int(rng.integers(2, 4))
        states = int(rng.integers(2, 5))
        kind = "pure" if index % 3 == 0 else "mixed"
        ensemble = random_ensemble(dim, states, kind, seed=int(rng.integers(2**31)))
        if index % 2:
            yield index, build_error_margin(ensemble, float(rng.uniform(0.1, 0.5)))
        else:
            yield index, build_minimum_error(ensemble)
