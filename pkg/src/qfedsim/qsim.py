"""Exact density-matrix simulation of the 4-qubit variational classifier.

States are plain (D, D) complex128 numpy arrays (D = 16 for the default
4-qubit circuit); batched internals use (B, D, D). Basis convention: qubit 0
is the most significant bit of the computational-basis index, so |1000> has
index 8. The class readout marginalizes the last qubit, mapping 16 basis
outcomes onto 8 classes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import ChannelError, EmbeddingError, GateError

logger = logging.getLogger(__name__)

ROTATION_AXES = ("z1", "y", "z2")


@dataclass(frozen=True)
class CircuitSpec:
    """Architecture of the variational classifier: amplitude embedding
    followed by strongly entangling layers of per-qubit Rot gates, a CNOT
    ring, and (optionally) per-qubit depolarizing channels."""

    n_qubits: int = 4
    n_layers: int = 5
    noise_strength: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.noise_strength <= 1.0:
            raise ChannelError(
                f"noise_strength {self.noise_strength} outside [0, 1]"
            )

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    @property
    def n_params(self) -> int:
        return self.n_layers * self.n_qubits * 3

    @property
    def n_classes(self) -> int:
        return 1 << (self.n_qubits - 1)

    @property
    def entangler_ring(self) -> tuple[tuple[int, int], ...]:
        n = self.n_qubits
        return tuple((i, (i + 1) % n) for i in range(n))

    def param_index(self, layer: int, qubit: int, rotation: int) -> int:
        return (layer * self.n_qubits + qubit) * 3 + rotation


@dataclass(frozen=True)
class GateOp:
    """One element of the unrolled circuit (embedding excluded)."""

    kind: str  # "rot" | "cnot" | "depol"
    qubit: int
    axis: str = ""        # rot only: "z" or "y"
    param_index: int = -1  # rot only
    target: int = -1       # cnot only


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    """2x2 unitary exp(-i * angle/2 * P) for P in {X, Y, Z}."""
    c = math.cos(angle / 2.0)
    s = math.sin(angle / 2.0)
    if axis == "z":
        return np.array([[c - 1j * s, 0.0], [0.0, c + 1j * s]], dtype=complex)
    if axis == "y":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if axis == "x":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    raise GateError(f"unknown rotation axis {axis!r}")


def amplitude_embed(
    vec: np.ndarray, *, n_qubits: int = 4, allow_zero_fallback: bool = True
) -> np.ndarray:
    """Encode a real vector as the pure state |psi><psi| with psi = vec/|vec|.

    An all-zero input is replaced by the first basis state when the fallback
    is enabled (a fully bit-flipped blob sample is rare but possible).
    """
    dim = 1 << n_qubits
    v = np.asarray(vec, dtype=float)
    if v.shape != (dim,):
        raise EmbeddingError(f"expected input of length {dim}, got {v.shape}")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        if not allow_zero_fallback:
            raise EmbeddingError("all-zero embedding input")
        logger.warning("all-zero embedding input; falling back to |0...0>")
        v = np.zeros(dim)
        v[0] = 1.0
        norm = 1.0
    psi = (v / norm).astype(complex)
    return np.outer(psi, psi.conj())


def amplitude_embed_batch(inputs: np.ndarray, *, n_qubits: int = 4) -> np.ndarray:
    """Vectorized amplitude_embed over rows of `inputs` (zero rows fall back)."""
    x = np.asarray(inputs, dtype=float)
    norms = np.linalg.norm(x, axis=1)
    zero = norms == 0.0
    if np.any(zero):
        logger.warning("all-zero embedding input; falling back to |0...0>")
        x = x.copy()
        x[zero, 0] = 1.0
        norms = np.linalg.norm(x, axis=1)
    psi = (x / norms[:, None]).astype(complex)
    return psi[:, :, None] * psi[:, None, :].conj()


def apply_rotation(
    rho: np.ndarray, qubit: int, axis: str, angle: float
) -> np.ndarray:
    """Conjugate rho by a Pauli rotation on one qubit."""
    gate = rotation_matrix(axis.lower(), angle)
    return backend.apply_1q(rho[None], gate, qubit)[0]


def apply_cnot(rho: np.ndarray, control: int, target: int) -> np.ndarray:
    """Conjugate rho by CNOT(control, target)."""
    if control == target:
        raise GateError("CNOT control and target must differ")
    return backend.apply_cnot(rho[None], control, target)[0]


def apply_depolarizing(rho: np.ndarray, qubit: int, strength: float) -> np.ndarray:
    """Completely depolarize one qubit with probability `strength`."""
    if not 0.0 <= strength <= 1.0:
        raise ChannelError(f"depolarizing strength {strength} outside [0, 1]")
    return backend.depolarize(rho[None], qubit, strength)[0]


def circuit_ops(spec: CircuitSpec, *, with_noise: bool = True) -> list[GateOp]:
    """Unroll the variational layers into a flat gate sequence.

    Per layer: Rot = RZ(z1) then RY(y) then RZ(z2) on every qubit, the CNOT
    ring, then one depolarizing channel per qubit (when enabled). The
    embedding is not part of the sequence.
    """
    ops: list[GateOp] = []
    for layer in range(spec.n_layers):
        for q in range(spec.n_qubits):
            for k, axis in enumerate(("z", "y", "z")):
                ops.append(
                    GateOp("rot", q, axis=axis, param_index=spec.param_index(layer, q, k))
                )
        for control, target in spec.entangler_ring:
            ops.append(GateOp("cnot", control, target=target))
        if with_noise:
            for q in range(spec.n_qubits):
                ops.append(GateOp("depol", q))
    return ops


def apply_ops(
    rhos: np.ndarray,
    ops: list[GateOp],
    angles: np.ndarray,
    noise_strength: float,
    *,
    start: int = 0,
) -> np.ndarray:
    """Run a batch of density matrices through ops[start:].

    Consecutive rotations on the same qubit are fused into a single 2x2
    unitary before hitting the kernel (exact, and 3x fewer kernel calls for
    the RZ-RY-RZ Rot blocks).
    """
    n = len(ops)
    i = start
    while i < n:
        op = ops[i]
        if op.kind == "rot":
            gate = rotation_matrix(op.axis, float(angles[op.param_index]))
            j = i + 1
            while j < n and ops[j].kind == "rot" and ops[j].qubit == op.qubit:
                nxt = ops[j]
                gate = rotation_matrix(nxt.axis, float(angles[nxt.param_index])) @ gate
                j += 1
            rhos = backend.apply_1q(rhos, gate, op.qubit)
            i = j
            continue
        if op.kind == "cnot":
            rhos = backend.apply_cnot(rhos, op.qubit, op.target)
        elif op.kind == "depol":
            if noise_strength > 0.0:
                rhos = backend.depolarize(rhos, op.qubit, noise_strength)
        else:
            raise GateError(f"unknown op kind {op.kind!r}")
        i += 1
    return rhos


def run_circuit(
    params: np.ndarray, vec: np.ndarray, spec: CircuitSpec
) -> np.ndarray:
    """Full forward pass: embed, then all variational layers with noise."""
    angles = np.asarray(params, dtype=float)
    if angles.shape != (spec.n_params,):
        raise GateError(
            f"expected {spec.n_params} angles, got shape {angles.shape}"
        )
    rho = amplitude_embed(vec, n_qubits=spec.n_qubits)
    ops = circuit_ops(spec)
    return apply_ops(rho[None], ops, angles, spec.noise_strength)[0]


def run_circuit_batch(
    params: np.ndarray, inputs: np.ndarray, spec: CircuitSpec
) -> np.ndarray:
    """Vectorized run_circuit over rows of `inputs`."""
    angles = np.asarray(params, dtype=float)
    rhos = amplitude_embed_batch(inputs, n_qubits=spec.n_qubits)
    ops = circuit_ops(spec)
    return apply_ops(rhos, ops, angles, spec.noise_strength)


def class_probabilities(rho: np.ndarray) -> np.ndarray:
    """Marginal probabilities of the first n-1 qubits (8 classes for 4 qubits).

    The last qubit is traced out: P(c) = rho[2c, 2c] + rho[2c+1, 2c+1].
    Entries are clamped to be nonnegative on output.
    """
    diag = np.real(np.diagonal(rho, axis1=-2, axis2=-1))
    probs = diag[..., 0::2] + diag[..., 1::2]
    return np.clip(probs, 0.0, None)


def sample_class_counts(
    rho: np.ndarray, shots: int, stream: np.random.Generator
) -> np.ndarray:
    """Multinomial measurement of `shots` draws from class_probabilities."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs = class_probabilities(rho)
    probs = probs / probs.sum()
    return stream.multinomial(shots, probs)


def check_density_matrix(
    rho: np.ndarray,
    *,
    trace_atol: float = 1e-10,
    herm_atol: float = 1e-10,
    psd_tol: float = 1e-9,
) -> None:
    """Raise AssertionError unless rho is trace-1, Hermitian, and PSD."""
    tr = complex(np.trace(rho))
    assert abs(tr - 1.0) <= trace_atol, f"trace {tr} deviates from 1"
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    assert herm <= herm_atol, f"Hermiticity violation {herm}"
    min_eig = float(np.linalg.eigvalsh(rho).min())
    assert min_eig >= -psd_tol, f"negative eigenvalue {min_eig}"


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))
