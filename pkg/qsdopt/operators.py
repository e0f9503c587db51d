from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import InitVar, dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg

from qsdopt.errors import AsymmetryTooLarge, DimMismatch, EigDecompositionFailed, NumericalFailure

TAU_HERM = 1e-10
TAU_PSD = 1e-8
TAU_TRACE = 1e-10
TAU_COMP = 1e-8
TAU_PROB = 1e-10

StateKind = Literal["pure", "mixed"]


@dataclass(frozen=True, slots=True, eq=False)
class HermitianOperator:
    matrix: np.ndarray
    asymmetry: float = 0.0

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
            raise DimMismatch(f"Operator must be a non-empty square matrix, got shape {matrix.shape}")
        asymmetry = float(np.linalg.norm(matrix - matrix.conj().T))
        tolerance = TAU_HERM * max(1.0, float(np.linalg.norm(matrix)))
        if asymmetry > tolerance:
            raise AsymmetryTooLarge(asymmetry, tolerance)
        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "asymmetry", max(self.asymmetry, asymmetry))

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    def __add__(self, other: HermitianOperator) -> HermitianOperator:
        _require_same_dim(self, other)
        return HermitianOperator(self.matrix + other.matrix)

    def __sub__(self, other: HermitianOperator) -> HermitianOperator:
        _require_same_dim(self, other)
        return HermitianOperator(self.matrix - other.matrix)

    def __neg__(self) -> HermitianOperator:
        return HermitianOperator(-self.matrix)

    def __mul__(self, scalar: float) -> HermitianOperator:
        return HermitianOperator(float(scalar) * self.matrix)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"HermitianOperator(dim={self.dim}, asymmetry={self.asymmetry:.1e})"


@dataclass(frozen=True, slots=True, eq=False)
class DensityOperator:
    op: HermitianOperator

    def __post_init__(self) -> None:
        smallest = min_eigenvalue(self.op)
        if smallest < -TAU_PSD:
            raise ValueError(f"Density operator is not positive semidefinite (min eigenvalue {smallest:.3e})")
        trace = float(np.trace(self.op.matrix).real)
        if abs(trace - 1.0) > TAU_TRACE:
            raise ValueError(f"Density operator trace must be 1, got {trace!r}")

    @property
    def dim(self) -> int:
        return self.op.dim


@dataclass(frozen=True, slots=True, eq=False)
class Povm:
    outcomes: tuple[HermitianOperator, ...]
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        outcomes = tuple(self.outcomes)
        if not outcomes:
            raise ValueError("POVM needs at least one outcome.")
        dim = outcomes[0].dim
        if any(item.dim != dim for item in outcomes):
            raise DimMismatch("POVM outcomes must share one dimension.")
        object.__setattr__(self, "outcomes", outcomes)
        if validate:
            psd = psd_violation(outcomes)
            if psd > TAU_PSD:
                raise ValueError(f"POVM outcome is not positive semidefinite (violation {psd:.3e})")
            comp = completeness_residual(outcomes)
            if comp > TAU_COMP:
                raise ValueError(f"POVM outcomes do not sum to the identity (residual {comp:.3e})")

    @property
    def dim(self) -> int:
        return self.outcomes[0].dim

    def __len__(self) -> int:
        return len(self.outcomes)

    def __getitem__(self, index: int) -> HermitianOperator:
        return self.outcomes[index]


@dataclass(frozen=True, slots=True, eq=False)
class StateEnsemble:
    states: tuple[DensityOperator, ...]
    priors: tuple[float, ...]
    g_hat: HermitianOperator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        states = tuple(self.states)
        priors = tuple(float(p) for p in self.priors)
        if not states:
            raise ValueError("Ensemble needs at least one state.")
        if len(priors) != len(states):
            raise ValueError(f"Ensemble has {len(states)} states but {len(priors)} priors.")
        if any(p < 0.0 for p in priors):
            raise ValueError("Priors must be nonnegative.")
        if abs(sum(priors) - 1.0) > TAU_PROB:
            raise ValueError(f"Priors must sum to 1, got {sum(priors)!r}")
        dim = states[0].dim
        if any(state.dim != dim for state in states):
            raise DimMismatch("Ensemble states must share one dimension.")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "priors", priors)
        weighted = sum((p * state.op.matrix for p, state in zip(priors, states)), np.zeros((dim, dim), dtype=complex))
        object.__setattr__(self, "g_hat", HermitianOperator(weighted))

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def __len__(self) -> int:
        return len(self.states)

    def weighted(self, index: int) -> HermitianOperator:
        return self.priors[index] * self.states[index].op


def validate_hermitian(matrix: np.ndarray | Sequence[Sequence[complex]], tol: float = TAU_HERM) -> HermitianOperator:
    array = np.asarray(matrix, dtype=complex)
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise DimMismatch(f"Expected a square matrix, got shape {array.shape}")
    asymmetry = float(np.linalg.norm(array - array.conj().T))
    if asymmetry > tol:
        raise AsymmetryTooLarge(asymmetry, tol)
    return HermitianOperator((array + array.conj().T) / 2, asymmetry=asymmetry)


def hermitian_part(matrix: np.ndarray) -> HermitianOperator:
    array = np.asarray(matrix, dtype=complex)
    return HermitianOperator((array + array.conj().T) / 2)


def identity(dim: int) -> HermitianOperator:
    return HermitianOperator(np.eye(dim, dtype=complex))


def zeros(dim: int) -> HermitianOperator:
    return HermitianOperator(np.zeros((dim, dim), dtype=complex))


def eigenvalues(op: HermitianOperator) -> np.ndarray:
    try:
        return np.linalg.eigvalsh(op.matrix)
    except np.linalg.LinAlgError as exc:
        raise EigDecompositionFailed(f"Eigendecomposition did not converge: {exc}") from exc


def min_eigenvalue(op: HermitianOperator) -> float:
    return float(eigenvalues(op)[0])


def is_psd(op: HermitianOperator, tol: float = TAU_PSD) -> bool:
    return min_eigenvalue(op) >= -tol


def trace_pair(a: HermitianOperator, b: HermitianOperator) -> float:
    _require_same_dim(a, b)
    return float(np.einsum("ij,ji->", a.matrix, b.matrix).real)


def trace(op: HermitianOperator) -> float:
    return float(np.trace(op.matrix).real)


def psd_violation(ops: Iterable[HermitianOperator]) -> float:
    return max((max(0.0, -min_eigenvalue(op)) for op in ops), default=0.0)


def completeness_residual(ops: Sequence[HermitianOperator]) -> float:
    dim = ops[0].dim
    total = sum((op.matrix for op in ops), np.zeros((dim, dim), dtype=complex))
    return float(np.linalg.norm(total - np.eye(dim)))


def stack(ops: Sequence[HermitianOperator]) -> np.ndarray:
    return np.stack([op.matrix for op in ops])


def uniform_povm(dim: int, outcomes: int) -> Povm:
    return Povm(tuple((1.0 / outcomes) * identity(dim) for _ in range(outcomes)))


def normalize_povm(blocks: Sequence[np.ndarray]) -> Povm:
    """Rescale PSD blocks so that they sum to the identity exactly.

    Each block becomes S^{-1/2} B S^{-1/2} with S the block sum. Blocks with
    small negative eigenvalues are clipped first.
    """
    clipped = [_clip_psd(block) for block in blocks]
    total = sum(clipped, np.zeros_like(clipped[0]))
    inv_sqrt = _inverse_sqrt(total)
    return Povm(tuple(hermitian_part(inv_sqrt @ block @ inv_sqrt) for block in clipped))


def ket_state(vector: Sequence[complex] | np.ndarray) -> DensityOperator:
    ket = np.asarray(vector, dtype=complex).reshape(-1)
    norm = np.linalg.norm(ket)
    if norm == 0.0:
        raise ValueError("State vector must be nonzero.")
    ket = ket / norm
    return DensityOperator(hermitian_part(np.outer(ket, ket.conj())))


def density_operator(matrix: np.ndarray | Sequence[Sequence[complex]]) -> DensityOperator:
    return DensityOperator(validate_hermitian(matrix))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    ginibre = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = scipy.linalg.qr(ginibre)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_hermitian(dim: int, rng: np.random.Generator) -> HermitianOperator:
    ginibre = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return hermitian_part(ginibre)


def random_ensemble(dim: int, count: int, kind: StateKind, seed: int) -> StateEnsemble:
    if dim < 1 or count < 1:
        raise ValueError("random_ensemble needs dim >= 1 and count >= 1.")
    if kind not in ("pure", "mixed"):
        raise ValueError(f"Unknown state kind: {kind!r}")
    rng = np.random.default_rng(seed)
    states: list[DensityOperator] = []
    for _ in range(count):
        if kind == "pure":
            states.append(ket_state(rng.normal(size=dim) + 1j * rng.normal(size=dim)))
        else:
            w = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            rho = w @ w.conj().T
            states.append(DensityOperator(hermitian_part(rho / np.trace(rho).real)))
    priors = rng.dirichlet(np.ones(count))
    priors = priors / priors.sum()
    return StateEnsemble(tuple(states), tuple(float(p) for p in priors))


def random_povm(dim: int, outcomes: int, seed: int) -> Povm:
    rng = np.random.default_rng(seed)
    blocks = []
    for _ in range(outcomes):
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        blocks.append(g @ g.conj().T)
    return normalize_povm(blocks)


def helstrom_success(ensemble: StateEnsemble) -> float:
    if len(ensemble) != 2:
        raise ValueError("The Helstrom formula applies to two-state ensembles only.")
    difference = ensemble.weighted(0) - ensemble.weighted(1)
    return 0.5 + 0.5 * float(np.abs(eigenvalues(difference)).sum())


def _require_same_dim(a: HermitianOperator, b: HermitianOperator) -> None:
    if a.dim != b.dim:
        raise DimMismatch(f"Operator dimensions differ: {a.dim} != {b.dim}")


def _clip_psd(block: np.ndarray) -> np.ndarray:
    hermitian = (block + block.conj().T) / 2
    values, vectors = np.linalg.eigh(hermitian)
    if values[0] >= 0.0:
        return hermitian
    return (vectors * np.clip(values, 0.0, None)) @ vectors.conj().T


def _inverse_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh((matrix + matrix.conj().T) / 2)
    if values[0] <= 0.0:
        raise NumericalFailure("Outcome sum is singular; cannot restore completeness.")
    return (vectors / np.sqrt(values)) @ vectors.conj().T
