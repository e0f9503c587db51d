from __future__ import annotations

import numpy as np


def embed(matrix: np.ndarray) -> np.ndarray:
    """Real symmetric image [[A, -B], [B, A]] of a Hermitian A + iB.

    Traces double under the map: Tr(embed(H) embed(K)) = 2 Re Tr(HK).
    """
    array = np.asarray(matrix, dtype=complex)
    real, imag = array.real, array.imag
    return np.block([[real, -imag], [imag, real]])


def de_embed(block: np.ndarray) -> np.ndarray:
    size = block.shape[-1] // 2
    real = (block[..., :size, :size] + block[..., size:, size:]) / 2
    imag = (block[..., size:, :size] - block[..., :size, size:]) / 2
    return real + 1j * imag


def complex_unit(dim: int) -> np.ndarray:
    eye = np.eye(dim)
    blank = np.zeros((dim, dim))
    return np.block([[blank, -eye], [eye, blank]])


def project_complex_structure(blocks: np.ndarray) -> np.ndarray:
    """Nearest blocks commuting with the embedded imaginary unit, symmetrized."""
    unit = complex_unit(blocks.shape[-1] // 2)
    projected = (blocks - unit @ blocks @ unit) / 2
    return (projected + np.swapaxes(projected, -1, -2)) / 2


def structure_residual(blocks: np.ndarray) -> float:
    unit = complex_unit(blocks.shape[-1] // 2)
    commutator = blocks @ unit - unit @ blocks
    return float(np.max(np.linalg.norm(commutator.reshape(-1, *blocks.shape[-2:]), axis=(-2, -1)), initial=0.0))


def hermitian_basis(dim: int) -> np.ndarray:
    """Orthonormal basis of the d x d Hermitian matrices under Tr(AB)."""
    basis = []
    for i in range(dim):
        unit = np.zeros((dim, dim), dtype=complex)
        unit[i, i] = 1.0
        basis.append(unit)
    scale = 1.0 / np.sqrt(2.0)
    for i in range(dim):
        for j in range(i + 1, dim):
            symmetric = np.zeros((dim, dim), dtype=complex)
            symmetric[i, j] = symmetric[j, i] = scale
            basis.append(symmetric)
            antisymmetric = np.zeros((dim, dim), dtype=complex)
            antisymmetric[i, j] = 1j * scale
            antisymmetric[j, i] = -1j * scale
            basis.append(antisymmetric)
    return np.stack(basis)
