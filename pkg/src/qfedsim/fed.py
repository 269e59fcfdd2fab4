"""Federated optimization engine: FedAvg, SCAFFOLD, and anchor-corrected
control-variate aggregation (the "qanchor" algorithm).

All three algorithms share the same local SGD loop (a dampened momentum
buffer — an exponential moving average of the corrected descent direction,
reset each round) and the same server
averaging step, differing only in the correction term:

    fedavg:   y <- y - eta_l * step(g(y))
    scaffold: y <- y - eta_l * step(g(y) - c_i + c)
    qanchor:  y <- y - eta_l * step(g(y) - c_i + c_srv)

qanchor refreshes client controls as exponential moving averages of the
noisy oracle evaluated at the round-start anchor point, and the server
control as the running average of ZNE-corrected client controls.

Randomness is organized as one independent stream per (seed, round, client,
purpose) tuple, so adding or removing control updates never perturbs the
local-update trajectories.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from . import oracle as qoracle
from .errors import AggregationError, ClientDataError, ConfigError
from .qsim import CircuitSpec

PURPOSE_LOCAL = 0
PURPOSE_CONTROL = 1
PURPOSE_SAMPLING = 2


class Algorithm(Enum):
    FEDAVG = "fedavg"
    SCAFFOLD = "scaffold"
    QANCHOR = "qanchor"


class FedOracle(Protocol):
    """Gradient oracle over per-client data; `evals` counts oracle work."""

    evals: int

    def grad(
        self,
        client_id: int,
        x: np.ndarray,
        indices: Sequence[int],
        stream: np.random.Generator,
    ) -> np.ndarray: ...

    def grad_zne(
        self,
        client_id: int,
        x: np.ndarray,
        indices: Sequence[int],
        stream: np.random.Generator,
    ) -> np.ndarray: ...


@dataclass
class RoundConfig:
    """Hyperparameters of one federated training run."""

    algorithm: Algorithm = Algorithm.FEDAVG
    n_clients: int = 8
    sample_size: int | None = None  # None -> full participation
    n_rounds: int = 20
    local_epochs: int = 5
    batch_size: int = 16
    local_lr: float = 0.1
    global_lr: float = 1.0
    local_momentum: float = 0.9
    anchor_alpha: float = 0.1

    def __post_init__(self) -> None:
        if self.n_clients < 1:
            raise ConfigError(f"n_clients must be >= 1, got {self.n_clients}")
        s = self.participants
        if not 1 <= s <= self.n_clients:
            raise ConfigError(
                f"sample_size {s} outside [1, {self.n_clients}]"
            )
        if self.n_rounds < 0:
            raise ConfigError(f"n_rounds must be >= 0, got {self.n_rounds}")
        if self.local_epochs < 1 or self.batch_size < 1:
            raise ConfigError("local_epochs and batch_size must be >= 1")
        if self.local_lr < 0 or self.global_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if not 0.0 <= self.local_momentum < 1.0:
            raise ConfigError(
                f"local_momentum {self.local_momentum} outside [0, 1)"
            )
        if not 0.0 <= self.anchor_alpha <= 1.0:
            raise ConfigError(
                f"anchor_alpha {self.anchor_alpha} outside [0, 1]"
            )

    @property
    def participants(self) -> int:
        return self.n_clients if self.sample_size is None else self.sample_size

    def local_steps(self, shard_size: int) -> int:
        return self.local_epochs * math.ceil(shard_size / self.batch_size)


@dataclass
class ClientState:
    """Per-client memory: the data shard and both control variates."""

    id: int
    shard: tuple[int, ...]
    control: np.ndarray
    zne_control: np.ndarray

    @classmethod
    def fresh(cls, client_id: int, shard: Sequence[int], dim: int) -> "ClientState":
        return cls(
            id=client_id,
            shard=tuple(shard),
            control=np.zeros(dim),
            zne_control=np.zeros(dim),
        )


@dataclass
class ServerState:
    """Global model plus the server-side control vector."""

    x: np.ndarray
    round: int = 0
    server_control: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.server_control is None:
            self.server_control = np.zeros_like(self.x)
        if not np.all(np.isfinite(self.x)):
            raise AggregationError("non-finite model parameters")


@dataclass
class MetricsRow:
    round: int
    algo: str
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float
    grad_evals: int
    wall_ms: float


CSV_COLUMNS = (
    "round",
    "algo",
    "train_loss",
    "train_acc",
    "test_loss",
    "test_acc",
    "grad_evals",
    "wall_ms",
)


@dataclass
class MetricsSeries:
    """Per-round training metrics with CSV serialization.

    wall_ms can be excluded on output so that repeated runs with the same
    seed produce byte-identical files.
    """

    rows: list[MetricsRow] = field(default_factory=list)

    def to_csv(self, path: str | Path, *, include_wall_ms: bool = True) -> None:
        cols = CSV_COLUMNS if include_wall_ms else CSV_COLUMNS[:-1]
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in self.rows:
                writer.writerow([getattr(row, c) for c in cols])

    def column(self, name: str) -> list:
        return [getattr(row, name) for row in self.rows]


def _stream(
    seed: int, round_index: int, client_id: int, purpose: int
) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed, round_index, client_id, purpose])
    )


def _epoch_batches(
    shard: tuple[int, ...], cfg: RoundConfig, stream: np.random.Generator
) -> list[np.ndarray]:
    """Shuffled mini-batches for all local epochs (last batch may be short)."""
    per_epoch = math.ceil(len(shard) / cfg.batch_size)
    batches: list[np.ndarray] = []
    idx = np.asarray(shard)
    for _ in range(cfg.local_epochs):
        order = stream.permutation(idx)
        batches.extend(np.array_split(order, per_epoch))
    return batches


def _local_sgd(
    x: np.ndarray,
    client: ClientState,
    cfg: RoundConfig,
    direction: Callable[[np.ndarray, np.ndarray, np.random.Generator], np.ndarray],
    stream: np.random.Generator,
) -> np.ndarray:
    if not client.shard:
        raise ClientDataError(f"client {client.id} has an empty shard")
    y = np.array(x, dtype=float, copy=True)
    m = cfg.local_momentum
    buf = np.zeros_like(y)
    for batch in _epoch_batches(client.shard, cfg, stream):
        # dampened momentum: the buffer is an EMA of the (corrected)
        # directions, so a constant direction d moves the iterate by at most
        # lr * |d| per step regardless of m
        buf = m * buf + (1.0 - m) * direction(y, batch, stream)
        y = y - cfg.local_lr * buf
    return y


def local_update_fedavg(
    x: np.ndarray,
    client: ClientState,
    cfg: RoundConfig,
    oracle: FedOracle,
    stream: np.random.Generator,
) -> np.ndarray:
    """Plain local SGD from the global model."""
    return _local_sgd(
        x,
        client,
        cfg,
        lambda y, batch, s: oracle.grad(client.id, y, batch, s),
        stream,
    )


def local_update_scaffold(
    x: np.ndarray,
    client: ClientState,
    global_control: np.ndarray,
    cfg: RoundConfig,
    oracle: FedOracle,
    stream: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Control-variate local SGD; returns (y_K, refreshed client control).

    The control refresh uses the displacement form
    c_i+ = c_i - c + (x - y_K) / (K * eta_l): the mean direction actually
    followed over the round. With the dampened momentum buffer a constant
    direction moves the iterate by at most lr per unit direction per step,
    so the displacement stays at gradient scale for any m.
    """
    correction = global_control - client.control
    y = _local_sgd(
        x,
        client,
        cfg,
        lambda yk, batch, s: oracle.grad(client.id, yk, batch, s) + correction,
        stream,
    )
    k = cfg.local_steps(len(client.shard))
    if cfg.local_lr > 0:
        new_control = client.control - global_control + (x - y) / (
            k * cfg.local_lr
        )
    else:
        new_control = client.control.copy()
    return y, new_control


def local_update_qanchor(
    x: np.ndarray,
    client: ClientState,
    server_control: np.ndarray,
    cfg: RoundConfig,
    oracle: FedOracle,
    stream: np.random.Generator,
) -> np.ndarray:
    """Anchor-corrected local SGD using last round's controls."""
    correction = server_control - client.control
    return _local_sgd(
        x,
        client,
        cfg,
        lambda yk, batch, s: oracle.grad(client.id, yk, batch, s) + correction,
        stream,
    )


def qanchor_control_updates(
    client: ClientState,
    x_prev: np.ndarray,
    cfg: RoundConfig,
    oracle: FedOracle,
    stream: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """EMA refresh of both client controls at the round-start anchor.

    One mini-batch is drawn from the shard and shared by the raw-oracle and
    ZNE-oracle evaluations. Returns (new c_i, new c_i_zne, delta c_i_zne).
    """
    a = cfg.anchor_alpha
    if a == 0.0:
        zero = np.zeros_like(client.control)
        return client.control.copy(), client.zne_control.copy(), zero
    size = min(cfg.batch_size, len(client.shard))
    batch = stream.choice(np.asarray(client.shard), size=size, replace=False)
    g_raw = oracle.grad(client.id, x_prev, batch, stream)
    g_zne = oracle.grad_zne(client.id, x_prev, batch, stream)
    new_control = (1.0 - a) * client.control + a * g_raw
    new_zne = (1.0 - a) * client.zne_control + a * g_zne
    return new_control, new_zne, new_zne - client.zne_control


def server_aggregate(
    server: ServerState,
    client_deltas: list[tuple[int, np.ndarray]],
    cfg: RoundConfig,
    control_deltas: list[tuple[int, np.ndarray]] | None = None,
) -> ServerState:
    """Average client model deltas into the global model (id-sorted merge).

    control_deltas, when given, accumulate into the server control scaled by
    1/N (the full client count, not the participant count).
    """
    ids = [cid for cid, _ in client_deltas]
    if len(ids) != len(set(ids)):
        raise AggregationError("duplicate client ids in aggregation")
    if len(ids) != cfg.participants:
        raise AggregationError(
            f"expected {cfg.participants} deltas, got {len(ids)}"
        )
    ordered = sorted(client_deltas, key=lambda pair: pair[0])
    mean_delta = np.mean([d for _, d in ordered], axis=0)
    new_x = server.x + cfg.global_lr * mean_delta
    new_control = server.server_control
    if control_deltas is not None:
        ordered_c = sorted(control_deltas, key=lambda pair: pair[0])
        new_control = server.server_control + (
            np.sum([d for _, d in ordered_c], axis=0) / cfg.n_clients
        )
    return ServerState(
        x=new_x, round=server.round + 1, server_control=new_control.copy()
    )


def run_training(
    x0: np.ndarray,
    cfg: RoundConfig,
    oracle: FedOracle,
    shards: Sequence[Sequence[int]],
    seed: int,
    evaluator: Callable[[np.ndarray], dict[str, float]] | None = None,
    round_hook: Callable[[int, ServerState, list[ClientState]], None] | None = None,
) -> tuple[ServerState, list[ClientState], MetricsSeries]:
    """Run cfg.n_rounds federated rounds and collect per-round metrics.

    Each round: sample participants without replacement, run local updates
    from the current global model, refresh controls (scaffold: displacement
    form; anchor algorithm: EMA at the round-start model), aggregate, then
    evaluate. Unsampled clients keep their controls untouched. Fully
    deterministic given the seed.
    """
    if len(shards) != cfg.n_clients:
        raise ConfigError(
            f"expected {cfg.n_clients} shards, got {len(shards)}"
        )
    dim = np.asarray(x0).size
    server = ServerState(x=np.array(x0, dtype=float, copy=True))
    clients = [
        ClientState.fresh(i, shard, dim) for i, shard in enumerate(shards)
    ]
    metrics = MetricsSeries()

    for r in range(1, cfg.n_rounds + 1):
        t0 = time.perf_counter()
        sampler = _stream(seed, r, 0, PURPOSE_SAMPLING)
        sampled = sorted(
            int(i)
            for i in sampler.choice(
                cfg.n_clients, size=cfg.participants, replace=False
            )
        )
        x_prev = server.x
        model_deltas: list[tuple[int, np.ndarray]] = []
        control_deltas: list[tuple[int, np.ndarray]] | None = None
        pending_controls: list[tuple[int, np.ndarray, np.ndarray]] = []
        if cfg.algorithm is not Algorithm.FEDAVG:
            control_deltas = []

        for cid in sampled:
            client = clients[cid]
            local_stream = _stream(seed, r, cid, PURPOSE_LOCAL)
            if cfg.algorithm is Algorithm.FEDAVG:
                y = local_update_fedavg(x_prev, client, cfg, oracle, local_stream)
            elif cfg.algorithm is Algorithm.SCAFFOLD:
                y, new_c = local_update_scaffold(
                    x_prev, client, server.server_control, cfg, oracle, local_stream
                )
                control_deltas.append((cid, new_c - client.control))
                pending_controls.append((cid, new_c, client.zne_control))
            else:
                y = local_update_qanchor(
                    x_prev, client, server.server_control, cfg, oracle, local_stream
                )
                ctrl_stream = _stream(seed, r, cid, PURPOSE_CONTROL)
                new_c, new_zne, delta_zne = qanchor_control_updates(
                    client, x_prev, cfg, oracle, ctrl_stream
                )
                control_deltas.append((cid, delta_zne))
                pending_controls.append((cid, new_c, new_zne))
            model_deltas.append((cid, y - x_prev))

        server = server_aggregate(server, model_deltas, cfg, control_deltas)
        for cid, new_c, new_zne in pending_controls:
            clients[cid].control = new_c
            clients[cid].zne_control = new_zne

        if round_hook is not None:
            round_hook(r, server, clients)
        scores = evaluator(server.x) if evaluator is not None else {}
        metrics.rows.append(
            MetricsRow(
                round=r,
                algo=cfg.algorithm.value,
                train_loss=scores.get("train_loss", math.nan),
                train_acc=scores.get("train_acc", math.nan),
                test_loss=scores.get("test_loss", math.nan),
                test_acc=scores.get("test_acc", math.nan),
                grad_evals=oracle.evals,
                wall_ms=(time.perf_counter() - t0) * 1000.0,
            )
        )
    return server, clients, metrics


class QuantumOracle:
    """Adapter exposing the quantum gradient estimators as a FedOracle.

    Holds the dataset; batch indices select samples. `evals` counts circuit
    executions.
    """

    def __init__(
        self,
        samples: Sequence,
        noise: qoracle.NoiseLevel,
        mode: qoracle.GradientMode = qoracle.ANALYTIC,
        zne: qoracle.ZneConfig = qoracle.ZneConfig(),
        spec: CircuitSpec | None = None,
    ) -> None:
        self.samples = samples
        self.noise = noise
        self.mode = mode
        self.zne = zne
        self.spec = spec or CircuitSpec(noise_strength=noise.p)
        self.evals = 0

    def _batch(self, indices: Sequence[int]) -> list[tuple[np.ndarray, int]]:
        return [(self.samples[i].bits, self.samples[i].label) for i in indices]

    def grad(
        self,
        client_id: int,
        x: np.ndarray,
        indices: Sequence[int],
        stream: np.random.Generator,
    ) -> np.ndarray:
        est = qoracle.grad_param_shift(
            x, self._batch(indices), self.noise, self.mode, stream, self.spec
        )
        self.evals += est.circuit_evals
        return est.values

    def grad_zne(
        self,
        client_id: int,
        x: np.ndarray,
        indices: Sequence[int],
        stream: np.random.Generator,
    ) -> np.ndarray:
        est = qoracle.grad_zne(
            x,
            self._batch(indices),
            self.noise,
            self.mode,
            self.zne,
            stream,
            self.spec,
        )
        self.evals += est.circuit_evals
        return est.values
