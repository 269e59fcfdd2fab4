"""Synthetic biased-oracle testbed for error-floor experiments.

Quadratic federated objectives f_i(x) = 1/2 (x - b_i)^T A_i (x - b_i) with
controlled heterogeneity, plus gradient oracles carrying a per-client
systematic bias of norm U_q and Gaussian noise. The ZNE surrogate shrinks
the bias by kappa_b at the price of variance inflated by kappa_v. Because
everything is affine, the true gradient, the global minimizer, and the
expected oracle outputs are available in closed form, which makes the
control-error diagnostics exact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import fed
from .errors import FloorNotReachedError
from .fed import Algorithm, RoundConfig

DEFAULT_DIM = 20
DEFAULT_CLIENTS = 16

# stream-domain tags so problem, bias, and noise draws never collide
_PROBLEM_TAG = 11
_BIAS_TAG = 12


@dataclass(frozen=True)
class SynthProblem:
    """Quadratic federated objective with closed-form global optimum."""

    matrices: np.ndarray  # (N, d, d) symmetric PSD
    targets: np.ndarray  # (N, d)

    @property
    def n_clients(self) -> int:
        return self.matrices.shape[0]

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    @property
    def beta(self) -> float:
        """Largest per-client spectral norm (global smoothness constant)."""
        return float(
            max(np.linalg.eigvalsh(a)[-1] for a in self.matrices)
        )

    @classmethod
    def generate(
        cls,
        n_clients: int = DEFAULT_CLIENTS,
        dim: int = DEFAULT_DIM,
        hetero: float = 1.0,
        curvature_spread: float = 0.5,
        seed: int = 0,
    ) -> "SynthProblem":
        """Random PSD curvatures with eigenvalues in [1-s, 1+s] and client
        minimizers spread by `hetero` around the origin."""
        rng = np.random.default_rng(np.random.SeedSequence([seed, _PROBLEM_TAG]))
        mats = np.empty((n_clients, dim, dim))
        for i in range(n_clients):
            q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
            eigs = rng.uniform(1.0 - curvature_spread, 1.0 + curvature_spread, dim)
            mats[i] = (q * eigs) @ q.T
        targets = hetero * rng.normal(size=(n_clients, dim))
        return cls(matrices=mats, targets=targets)

    def client_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        return self.matrices[i] @ (x - self.targets[i])

    def f(self, x: np.ndarray) -> float:
        diffs = x[None, :] - self.targets
        return float(
            0.5 * np.mean(np.einsum("nd,nde,ne->n", diffs, self.matrices, diffs))
        )

    def grad_f(self, x: np.ndarray) -> np.ndarray:
        diffs = x[None, :] - self.targets
        return np.mean(np.einsum("nde,ne->nd", self.matrices, diffs), axis=0)

    def minimizer(self) -> np.ndarray:
        a_bar = self.matrices.mean(axis=0)
        rhs = np.mean(
            np.einsum("nde,ne->nd", self.matrices, self.targets), axis=0
        )
        return np.linalg.solve(a_bar, rhs)

    def grad_norm_sq(self, x: np.ndarray) -> float:
        return float(np.dot(self.grad_f(x), self.grad_f(x)))


@dataclass
class SynthOracle:
    """Biased, noisy gradient oracle over a SynthProblem (FedOracle shape).

    Raw oracle: grad f_i(x) + bias_i(x) + eta with total Gaussian variance
    sigma^2 + sigma_q^2 spread isotropically over the d coordinates. The ZNE
    surrogate divides the bias by kappa_b and inflates the quantum variance
    share by kappa_v. Constant bias vectors (norm U_q, direction drawn once
    per seed) keep the expected output exactly computable; the "tanh" mode
    makes the bias position dependent (saturated linear map, norm <= U_q).
    """

    problem: SynthProblem
    bias_norm: float = 0.0
    sigma: float = 0.0
    sigma_q: float = 0.0
    kappa_b: float = 1.0
    kappa_v: float = 1.0
    bias_mode: str = "constant"  # "constant" | "tanh"
    seed: int = 0
    evals: int = 0
    _bias_dirs: np.ndarray = field(init=False, repr=False)
    _tanh_maps: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.kappa_b < 1.0 or self.kappa_v < 1.0:
            raise ValueError("kappa_b and kappa_v must be >= 1")
        if self.bias_mode not in ("constant", "tanh"):
            raise ValueError(f"unknown bias_mode {self.bias_mode!r}")
        n, d = self.problem.n_clients, self.problem.dim
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, _BIAS_TAG]))
        dirs = rng.normal(size=(n, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        self._bias_dirs = dirs
        self._tanh_maps = rng.normal(size=(n, d, d)) / math.sqrt(d)

    def bias(self, i: int, x: np.ndarray) -> np.ndarray:
        """Systematic oracle error at x (norm U_q in constant mode)."""
        if self.bias_mode == "constant":
            return self.bias_norm * self._bias_dirs[i]
        return self.bias_norm * np.tanh(self._tanh_maps[i] @ x) / math.sqrt(
            self.problem.dim
        )

    def mean_output(self, i: int, x: np.ndarray, *, zne: bool = False) -> np.ndarray:
        """Expected oracle output mu_i(x) (exact, noise averages out)."""
        scale = 1.0 / self.kappa_b if zne else 1.0
        return self.problem.client_grad(i, x) + scale * self.bias(i, x)

    def _noise(self, variance: float, stream: np.random.Generator) -> np.ndarray:
        d = self.problem.dim
        if variance == 0.0:
            return np.zeros(d)
        return stream.normal(scale=math.sqrt(variance / d), size=d)

    def grad(
        self,
        client_id: int,
        x: np.ndarray,
        indices: Sequence[int],
        stream: np.random.Generator,
    ) -> np.ndarray:
        self.evals += 1
        total_var = self.sigma**2 + self.sigma_q**2
        return self.mean_output(client_id, x) + self._noise(total_var, stream)

    def grad_zne(
        self,
        client_id: int,
        x: np.ndarray,
        indices: Sequence[int],
        stream: np.random.Generator,
    ) -> np.ndarray:
        self.evals += 1
        total_var = self.sigma**2 + self.kappa_v * self.sigma_q**2
        return self.mean_output(client_id, x, zne=True) + self._noise(
            total_var, stream
        )


def dummy_shards(n_clients: int, batch_size: int) -> list[tuple[int, ...]]:
    """Index placeholders so the fed engine runs one batch per local epoch."""
    return [tuple(range(batch_size)) for _ in range(n_clients)]


@dataclass
class FloorReport:
    """Per-round floor diagnostics of one synthetic run."""

    algo: str
    plateau: float
    plateaued: bool
    grad_norm_sq: list[float]
    gamma: list[float]
    gamma_zne: list[float]
    lambda_exact: list[float]
    lambda_raw: list[float]

    def to_json(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(vars(self), indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "FloorReport":
        return cls(**json.loads(Path(path).read_text()))


def _plateau(values: list[float], slope_tol: float) -> tuple[float, bool]:
    """Mean over the final 20% of rounds + a two-half relative slope test."""
    window = values[-max(2, len(values) // 5):]
    half = len(window) // 2
    first, second = np.mean(window[:half]), np.mean(window[half:])
    plateau = float(np.mean(window))
    scale = max(abs(plateau), 1e-12)
    return plateau, bool(abs(second - first) / scale < slope_tol)


def measure_floor(
    problem: SynthProblem,
    oracle: SynthOracle,
    algorithm: Algorithm,
    cfg: RoundConfig,
    rounds: int,
    seed: int,
    *,
    slope_tol: float = 0.05,
    strict: bool = True,
) -> FloorReport:
    """Run federated training on the synthetic problem and report the floor.

    Records the true squared gradient norm each round plus the control-error
    series: gamma (raw controls vs their exact expected oracle outputs),
    gamma_zne (same for ZNE controls), lambda_exact (server control vs mean
    ZNE control; identically 0 under full participation), and lambda_raw
    (server control vs mean raw control, generally nonzero).
    """
    cfg = RoundConfig(
        algorithm=algorithm,
        n_clients=problem.n_clients,
        sample_size=cfg.sample_size,
        n_rounds=rounds,
        local_epochs=cfg.local_epochs,
        batch_size=cfg.batch_size,
        local_lr=cfg.local_lr,
        global_lr=cfg.global_lr,
        local_momentum=cfg.local_momentum,
        anchor_alpha=cfg.anchor_alpha,
    )
    series: dict[str, list[float]] = {
        "grad_norm_sq": [],
        "gamma": [],
        "gamma_zne": [],
        "lambda_exact": [],
        "lambda_raw": [],
    }

    def hook(r: int, server: fed.ServerState, clients: list[fed.ClientState]) -> None:
        x = server.x
        series["grad_norm_sq"].append(problem.grad_norm_sq(x))
        gam = np.mean(
            [
                np.sum((c.control - oracle.mean_output(c.id, x)) ** 2)
                for c in clients
            ]
        )
        gam_z = np.mean(
            [
                np.sum((c.zne_control - oracle.mean_output(c.id, x, zne=True)) ** 2)
                for c in clients
            ]
        )
        mean_zne = np.mean([c.zne_control for c in clients], axis=0)
        mean_raw = np.mean([c.control for c in clients], axis=0)
        series["gamma"].append(float(gam))
        series["gamma_zne"].append(float(gam_z))
        series["lambda_exact"].append(
            float(np.sum((server.server_control - mean_zne) ** 2))
        )
        series["lambda_raw"].append(
            float(np.sum((server.server_control - mean_raw) ** 2))
        )

    x0 = np.zeros(problem.dim)
    shards = dummy_shards(problem.n_clients, cfg.batch_size)
    fed.run_training(x0, cfg, oracle, shards, seed, round_hook=hook)

    plateau, plateaued = _plateau(series["grad_norm_sq"], slope_tol)
    if strict and not plateaued:
        raise FloorNotReachedError(
            f"{algorithm.value} run did not plateau over {rounds} rounds "
            f"(floor estimate {plateau:.3e})"
        )
    return FloorReport(
        algo=algorithm.value,
        plateau=plateau,
        plateaued=plateaued,
        grad_norm_sq=series["grad_norm_sq"],
        gamma=series["gamma"],
        gamma_zne=series["gamma_zne"],
        lambda_exact=series["lambda_exact"],
        lambda_raw=series["lambda_raw"],
    )


SWEEP_COLUMNS = (
    "algo",
    "u_q",
    "kappa_b",
    "kappa_v",
    "sigma_q",
    "eta_tilde",
    "plateau",
    "mean_gamma",
    "mean_gamma_zne",
    "mean_lambda",
    "plateaued",
)


def sweep_row(
    report: FloorReport, oracle: SynthOracle, cfg: RoundConfig
) -> dict[str, float | str]:
    """One CSV row of a floor sweep."""
    k = cfg.local_steps(cfg.batch_size)
    tail = max(2, len(report.gamma) // 5)
    return {
        "algo": report.algo,
        "u_q": oracle.bias_norm,
        "kappa_b": oracle.kappa_b,
        "kappa_v": oracle.kappa_v,
        "sigma_q": oracle.sigma_q,
        "eta_tilde": cfg.global_lr * cfg.local_lr * k,
        "plateau": report.plateau,
        "mean_gamma": float(np.mean(report.gamma[-tail:])),
        "mean_gamma_zne": float(np.mean(report.gamma_zne[-tail:])),
        "mean_lambda": float(np.mean(report.lambda_exact[-tail:])),
        "plateaued": int(report.plateaued),
    }


def save_sweep_csv(rows: list[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
