"""Pure-numpy density-matrix kernels.

Fallback implementation of the hot inner loops; the compiled extension in
``_kernels.pyx`` provides the same API. All functions operate on batches of
density matrices with shape (B, D, D), complex128, where D = 2**n_qubits and
qubit 0 is the most significant bit of the basis index. Inputs are never
mutated; each kernel returns a fresh array.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _n_qubits(dim: int) -> int:
    n = dim.bit_length() - 1
    if 1 << n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def apply_1q(rho: np.ndarray, gate: np.ndarray, qubit: int) -> np.ndarray:
    """Conjugate each density matrix by a single-qubit gate: U rho U^dag."""
    b, dim, _ = rho.shape
    nq = _n_qubits(dim)
    lo = 1 << qubit              # subspace of more-significant qubits
    hi = 1 << (nq - 1 - qubit)   # subspace of less-significant qubits
    # rows
    view = rho.reshape(b, lo, 2, hi, dim)
    out = np.einsum("xy,blyhc->blxhc", gate, view)
    # columns
    out = out.reshape(b, dim, lo, 2, hi)
    out = np.einsum("xy,bclyh->bclxh", gate.conj(), out)
    return np.ascontiguousarray(out.reshape(b, dim, dim))


def apply_cnot(rho: np.ndarray, control: int, target: int) -> np.ndarray:
    """Conjugate each density matrix by CNOT(control, target)."""
    b, dim, _ = rho.shape
    nq = _n_qubits(dim)
    cmask = 1 << (nq - 1 - control)
    tmask = 1 << (nq - 1 - target)
    idx = np.arange(dim)
    perm = np.where(idx & cmask, idx ^ tmask, idx)
    return np.ascontiguousarray(rho[:, perm][:, :, perm])


def depolarize(rho: np.ndarray, qubit: int, strength: float) -> np.ndarray:
    """Single-qubit depolarizing channel.

    rho -> (1 - strength) * rho + strength * (I/2 tensored with tr_q rho).
    """
    b, dim, _ = rho.shape
    nq = _n_qubits(dim)
    lo = 1 << qubit
    hi = 1 << (nq - 1 - qubit)
    view = rho.reshape(b, lo, 2, hi, lo, 2, hi)
    out = (1.0 - strength) * view
    avg = 0.5 * (view[:, :, 0, :, :, 0, :] + view[:, :, 1, :, :, 1, :])
    out[:, :, 0, :, :, 0, :] += strength * avg
    out[:, :, 1, :, :, 1, :] += strength * avg
    return np.ascontiguousarray(out.reshape(b, dim, dim))
