"""Gradient oracles over the quantum classifier.

Ideal (analytic, noiseless), hardware-noisy, finite-shot, and ZNE-corrected
estimators of the NLL-loss gradient, all built on the parameter-shift rule:

    dp/dx_j = 1/2 * [p(x + pi/2 e_j) - p(x - pi/2 e_j)]

which is exact for Pauli-rotation gates, including under depolarizing
channels (the channel is parameter independent and linear). ZNE evaluates the
gradient at amplified channel strengths lambda_k * p and extrapolates to zero
noise with Lagrange weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend, qsim
from .errors import DegenerateReferenceError, ScaleOverflowError, ZneConfigError
from .qsim import CircuitSpec

PROB_CLAMP = 1e-8
SHIFT = np.pi / 2.0


@dataclass(frozen=True)
class NoiseLevel:
    """Native depolarizing strength of the simulated hardware."""

    p: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"noise strength {self.p} outside [0, 1]")


@dataclass(frozen=True)
class GradientMode:
    """Expectation-value estimation mode: exact (analytic) or finite shots."""

    shots: int | None = None

    def __post_init__(self) -> None:
        if self.shots is not None and self.shots < 1:
            raise ValueError("shot count must be >= 1")

    @property
    def analytic(self) -> bool:
        return self.shots is None


ANALYTIC = GradientMode()


@dataclass(frozen=True)
class ZneConfig:
    """Noise scale factors and polynomial degree for zero-noise extrapolation.

    Exact polynomial interpolation requires degree + 1 scale factors.
    """

    scale_factors: tuple[float, ...] = (1.0, 3.0, 5.0)
    degree: int = 2
    clip_strength: bool = True

    def __post_init__(self) -> None:
        lam = self.scale_factors
        if len(set(lam)) != len(lam):
            raise ZneConfigError("duplicate ZNE scale factors")
        if any(b <= a for a, b in zip(lam, lam[1:])):
            raise ZneConfigError("ZNE scale factors must be ascending")
        if lam[0] != 1.0:
            raise ZneConfigError("first ZNE scale factor must be 1.0")
        if self.degree + 1 != len(lam):
            raise ZneConfigError(
                f"degree {self.degree} needs {self.degree + 1} scale factors, "
                f"got {len(lam)}"
            )


@dataclass(frozen=True)
class GradientEstimate:
    """A loss gradient plus provenance."""

    values: np.ndarray
    mode: GradientMode
    noise: NoiseLevel
    zne_applied: bool = False
    circuit_evals: int = 0


def zne_weights(config: ZneConfig) -> np.ndarray:
    """Lagrange interpolation weights evaluated at lambda = 0.

    gamma_k = prod_{j != k} (0 - lam_j) / (lam_k - lam_j); the weights sum to
    one and reproduce any polynomial of degree <= len(lam) - 1 exactly at 0.
    """
    lam = np.asarray(config.scale_factors, dtype=float)
    weights = np.empty_like(lam)
    for k in range(lam.size):
        others = np.delete(lam, k)
        weights[k] = np.prod(-others / (lam[k] - others))
    return weights


def _estimate_probs(
    rhos: np.ndarray, mode: GradientMode, stream: np.random.Generator | None
) -> np.ndarray:
    """Class probabilities for a batch of states, exact or shot-sampled."""
    probs = qsim.class_probabilities(rhos)
    if mode.analytic:
        return probs
    if stream is None:
        raise ValueError("shot mode requires a random stream")
    probs = probs / probs.sum(axis=-1, keepdims=True)
    counts = np.stack([stream.multinomial(mode.shots, row) for row in probs])
    return counts / float(mode.shots)


def nll_loss(
    params: np.ndarray,
    sample: tuple[np.ndarray, int],
    noise: NoiseLevel,
    mode: GradientMode = ANALYTIC,
    stream: np.random.Generator | None = None,
    spec: CircuitSpec = CircuitSpec(),
) -> float:
    """Negative log-likelihood -log(max(p_label, clamp)) of one sample."""
    vec, label = sample
    rhos = qsim.amplitude_embed_batch(np.asarray(vec, float)[None], n_qubits=spec.n_qubits)
    rhos = qsim.apply_ops(rhos, qsim.circuit_ops(spec), np.asarray(params, float), noise.p)
    probs = _estimate_probs(rhos, mode, stream)
    return -float(np.log(max(probs[0, label], PROB_CLAMP)))


def _param_shift_values(
    params: np.ndarray,
    inputs: np.ndarray,
    labels: np.ndarray,
    noise_p: float,
    mode: GradientMode,
    stream: np.random.Generator | None,
    spec: CircuitSpec,
) -> np.ndarray:
    """Batch-averaged NLL gradient at one channel strength.

    Caches the forward state before every gate so each shifted evaluation
    only replays the circuit suffix from the shifted gate onward.
    """
    angles = np.asarray(params, dtype=float)
    ops = qsim.circuit_ops(spec)
    rhos = qsim.amplitude_embed_batch(inputs, n_qubits=spec.n_qubits)
    pre: list[np.ndarray] = []
    for op in ops:
        pre.append(rhos)
        rhos = qsim.apply_ops(rhos, [op], angles, noise_p)

    batch = np.arange(labels.size)
    base = _estimate_probs(rhos, mode, stream)[batch, labels]
    inv_p = 1.0 / np.maximum(base, PROB_CLAMP)

    pos_of_param = {
        op.param_index: g for g, op in enumerate(ops) if op.kind == "rot"
    }
    n = labels.size
    grad = np.empty(spec.n_params)
    for j in range(spec.n_params):
        g = pos_of_param[j]
        op = ops[g]
        # run the +pi/2 and -pi/2 branches as one stacked batch
        out = np.concatenate(
            [
                backend.apply_1q(
                    pre[g],
                    qsim.rotation_matrix(op.axis, float(angles[j]) + sign * SHIFT),
                    op.qubit,
                )
                for sign in (1.0, -1.0)
            ]
        )
        out = qsim.apply_ops(out, ops, angles, noise_p, start=g + 1)
        probs = _estimate_probs(out, mode, stream)
        p_plus = probs[batch, labels]
        p_minus = probs[batch + n, labels]
        dprob = 0.5 * (p_plus - p_minus)
        grad[j] = float(np.mean(-inv_p * dprob))
    return grad


def _as_batch(batch) -> tuple[np.ndarray, np.ndarray]:
    if not batch:
        raise ValueError("gradient batch must be nonempty")
    inputs = np.asarray([np.asarray(v, float) for v, _ in batch])
    labels = np.asarray([int(y) for _, y in batch])
    return inputs, labels


def grad_param_shift(
    params: np.ndarray,
    batch: list[tuple[np.ndarray, int]],
    noise: NoiseLevel,
    mode: GradientMode = ANALYTIC,
    stream: np.random.Generator | None = None,
    spec: CircuitSpec = CircuitSpec(),
) -> GradientEstimate:
    """Parameter-shift NLL gradient averaged over a batch of samples.

    Shifted evaluations run at the same channel strength; in shot mode every
    evaluation (base and both shifts) uses an independent multinomial draw.
    """
    inputs, labels = _as_batch(batch)
    values = _param_shift_values(params, inputs, labels, noise.p, mode, stream, spec)
    return GradientEstimate(
        values=values,
        mode=mode,
        noise=noise,
        zne_applied=False,
        circuit_evals=2 * spec.n_params * len(batch),
    )


def grad_ideal(
    params: np.ndarray,
    batch: list[tuple[np.ndarray, int]],
    spec: CircuitSpec = CircuitSpec(),
) -> GradientEstimate:
    """Exact noiseless gradient: parameter shift at p = 0, analytic mode."""
    return grad_param_shift(params, batch, NoiseLevel(0.0), ANALYTIC, None, spec)


def grad_zne(
    params: np.ndarray,
    batch: list[tuple[np.ndarray, int]],
    noise: NoiseLevel,
    mode: GradientMode = ANALYTIC,
    config: ZneConfig = ZneConfig(),
    stream: np.random.Generator | None = None,
    spec: CircuitSpec = CircuitSpec(),
) -> GradientEstimate:
    """ZNE-corrected gradient: weighted sum of gradients at scaled strengths.

    Each scale factor amplifies the channel strength to lambda_k * p (clipped
    at 1 when clipping is enabled) and uses independent shot draws.
    """
    inputs, labels = _as_batch(batch)
    weights = zne_weights(config)
    values = np.zeros(spec.n_params)
    for lam, gamma in zip(config.scale_factors, weights):
        p_k = lam * noise.p
        if p_k > 1.0:
            if not config.clip_strength:
                raise ScaleOverflowError(
                    f"scale {lam} pushes strength {noise.p} past 1"
                )
            p_k = 1.0
        values += gamma * _param_shift_values(
            params, inputs, labels, p_k, mode, stream, spec
        )
    return GradientEstimate(
        values=values,
        mode=mode,
        noise=noise,
        zne_applied=True,
        circuit_evals=2 * spec.n_params * len(batch) * len(config.scale_factors),
    )


def fractional_error(
    estimate: GradientEstimate | np.ndarray, ideal: GradientEstimate | np.ndarray
) -> float:
    """||g - g_ideal|| / ||g_ideal|| in the Euclidean norm."""
    est = estimate.values if isinstance(estimate, GradientEstimate) else np.asarray(estimate)
    ref = ideal.values if isinstance(ideal, GradientEstimate) else np.asarray(ideal)
    ref_norm = float(np.linalg.norm(ref))
    if ref_norm <= 1e-12:
        raise DegenerateReferenceError("reference gradient norm is near zero")
    return float(np.linalg.norm(est - ref)) / ref_norm


def variance_probe(
    params: np.ndarray,
    sample: tuple[np.ndarray, int],
    shots: int,
    trials: int,
    noise: NoiseLevel,
    stream: np.random.Generator,
    spec: CircuitSpec = CircuitSpec(),
) -> float:
    """Total empirical variance (summed over coordinates) of the shot-mode
    gradient across independent trials."""
    if trials < 2:
        raise ValueError("variance probe needs at least 2 trials")
    mode = GradientMode(shots=shots)
    grads = np.stack(
        [
            grad_param_shift(params, [sample], noise, mode, stream, spec).values
            for _ in range(trials)
        ]
    )
    return float(grads.var(axis=0, ddof=1).sum())
