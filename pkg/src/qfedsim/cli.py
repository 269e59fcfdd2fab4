"""Experiment orchestration command-line interface.

Subcommands: gen-data, bias-sweep, fl-compare, shot-sweep, synth-floor.
Parameters come from an INI-style config file (unknown keys rejected by
name); --seed and --out override the config, --paper-scale switches the
main comparison to full dataset sizes, --workers parallelizes independent
sweep cells. Exit codes: 0 success, 1 config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import data, fed, oracle, synth
from .errors import ConfigError, QFedSimError
from .fed import Algorithm, QuantumOracle, RoundConfig
from .oracle import NoiseLevel, ZneConfig
from .qsim import CircuitSpec

logger = logging.getLogger(__name__)

# seed-stream domain tags (keep distinct from fed's per-round purposes)
_TAG_TRAIN_DATA = 0
_TAG_TEST_DATA = 1
_TAG_PARTITION = 2
_TAG_INIT_PARAMS = 3
_TAG_BIAS_INSTANCE = 4
_TAG_SHOT_PROBE = 5


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def _fmt_seq(values: Sequence) -> str:
    return ", ".join(str(v) for v in values)


@dataclass
class ExperimentConfig:
    """All experiment parameters, loadable from an INI file."""

    seed: int = 42
    out: str = "out"
    # dataset
    n_train: int = 800
    n_test: int = 800
    flip_p: float = 0.05
    dirichlet_alpha: float = 0.3
    # federated rounds
    n_clients: int = 8
    sample_size: int | None = None
    n_rounds: int = 20
    local_epochs: int = 5
    batch_size: int = 16
    local_lr: float = 0.1
    global_lr: float = 1.0
    local_momentum: float = 0.9
    anchor_alpha: float = 0.1
    # hardware noise
    noise_p: float = 0.01
    noise_levels: tuple[float, ...] = (0.01, 0.02, 0.03, 0.04, 0.05)
    # zero-noise extrapolation
    zne_scale_factors: tuple[float, ...] = (1.0, 3.0, 5.0)
    zne_degree: int = 2
    # bias sweep
    bias_instances: int = 20
    # shot sweep
    shots: tuple[int, ...] = (5000, 20000, 50000, 100000)
    shot_trials: int = 10
    # synthetic floor sweep
    synth_dim: int = 20
    synth_clients: int = 16
    synth_rounds: int = 400
    synth_u_q: tuple[float, ...] = (0.5, 1.0, 2.0)
    synth_kappa_b: tuple[float, ...] = (1.0, 3.0, 10.0)
    synth_local_lr: float = 0.05
    synth_local_epochs: int = 2

    def round_config(self, algorithm: Algorithm) -> RoundConfig:
        return RoundConfig(
            algorithm=algorithm,
            n_clients=self.n_clients,
            sample_size=self.sample_size,
            n_rounds=self.n_rounds,
            local_epochs=self.local_epochs,
            batch_size=self.batch_size,
            local_lr=self.local_lr,
            global_lr=self.global_lr,
            local_momentum=self.local_momentum,
            anchor_alpha=self.anchor_alpha,
        )

    def synth_round_config(self, algorithm: Algorithm) -> RoundConfig:
        return RoundConfig(
            algorithm=algorithm,
            n_clients=self.synth_clients,
            n_rounds=self.synth_rounds,
            local_epochs=self.synth_local_epochs,
            batch_size=4,
            local_lr=self.synth_local_lr,
            local_momentum=self.local_momentum,
            anchor_alpha=self.anchor_alpha,
        )

    def zne_config(self) -> ZneConfig:
        return ZneConfig(
            scale_factors=self.zne_scale_factors, degree=self.zne_degree
        )


# (section, key) -> (attribute, parse, serialize)
_SCHEMA: dict[tuple[str, str], tuple[str, Callable, Callable]] = {
    ("experiment", "seed"): ("seed", int, str),
    ("experiment", "out"): ("out", str, str),
    ("dataset", "n_train"): ("n_train", int, str),
    ("dataset", "n_test"): ("n_test", int, str),
    ("dataset", "flip_p"): ("flip_p", float, str),
    ("dataset", "alpha"): ("dirichlet_alpha", float, str),
    ("rounds", "n_clients"): ("n_clients", int, str),
    ("rounds", "sample_size"): (
        "sample_size",
        lambda s: None if s == "none" else int(s),
        lambda v: "none" if v is None else str(v),
    ),
    ("rounds", "n_rounds"): ("n_rounds", int, str),
    ("rounds", "local_epochs"): ("local_epochs", int, str),
    ("rounds", "batch_size"): ("batch_size", int, str),
    ("rounds", "local_lr"): ("local_lr", float, str),
    ("rounds", "global_lr"): ("global_lr", float, str),
    ("rounds", "local_momentum"): ("local_momentum", float, str),
    ("rounds", "anchor_alpha"): ("anchor_alpha", float, str),
    ("noise", "p"): ("noise_p", float, str),
    ("noise", "levels"): ("noise_levels", _parse_floats, _fmt_seq),
    ("zne", "scale_factors"): ("zne_scale_factors", _parse_floats, _fmt_seq),
    ("zne", "degree"): ("zne_degree", int, str),
    ("bias", "instances"): ("bias_instances", int, str),
    ("shots", "shots"): ("shots", _parse_ints, _fmt_seq),
    ("shots", "trials"): ("shot_trials", int, str),
    ("synth", "dim"): ("synth_dim", int, str),
    ("synth", "n_clients"): ("synth_clients", int, str),
    ("synth", "rounds"): ("synth_rounds", int, str),
    ("synth", "u_q"): ("synth_u_q", _parse_floats, _fmt_seq),
    ("synth", "kappa_b"): ("synth_kappa_b", _parse_floats, _fmt_seq),
    ("synth", "local_lr"): ("synth_local_lr", float, str),
    ("synth", "local_epochs"): ("synth_local_epochs", int, str),
}

_SECTIONS = {section for section, _ in _SCHEMA}


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse an INI config, rejecting unknown sections/keys by name."""
    parser = configparser.ConfigParser()
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not read:
        raise ConfigError(f"config file not found: {path}")
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            spec = _SCHEMA.get((section, key))
            if spec is None:
                raise ConfigError(
                    f"unknown config key '{key}' in section [{section}]"
                )
            attr, parse, _ = spec
            try:
                setattr(cfg, attr, parse(raw))
            except (ValueError, TypeError) as exc:
                raise ConfigError(
                    f"bad value for '{key}' in section [{section}]: {raw!r}"
                ) from exc
    _validate(cfg)
    return cfg


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    """Serialize a config so that load_config(save_config(c)) == c."""
    parser = configparser.ConfigParser()
    for (section, key), (attr, _, fmt) in _SCHEMA.items():
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, fmt(getattr(cfg, attr)))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        parser.write(fh)


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError(f"seed {cfg.seed} outside [0, 2^64)")
    if cfg.n_train < 1 or cfg.n_test < 1:
        raise ConfigError("n_train and n_test must be >= 1")
    if not 0.0 <= cfg.flip_p < 0.5:
        raise ConfigError(f"flip_p {cfg.flip_p} outside [0, 0.5)")
    if cfg.dirichlet_alpha <= 0:
        raise ConfigError(f"alpha {cfg.dirichlet_alpha} must be > 0")
    if not 0.0 <= cfg.noise_p <= 1.0:
        raise ConfigError(f"noise p {cfg.noise_p} outside [0, 1]")
    if any(not 0.0 <= p <= 1.0 for p in cfg.noise_levels):
        raise ConfigError("noise levels must lie in [0, 1]")
    if not cfg.noise_levels:
        raise ConfigError("noise levels list must be nonempty")
    if not cfg.shots or any(s < 1 for s in cfg.shots):
        raise ConfigError("shots list must be nonempty positive integers")
    if cfg.shot_trials < 2:
        raise ConfigError("shot trials must be >= 2")
    if cfg.bias_instances < 1:
        raise ConfigError("bias instances must be >= 1")
    if cfg.synth_dim < 1 or cfg.synth_clients < 1 or cfg.synth_rounds < 1:
        raise ConfigError("synth dim/n_clients/rounds must be >= 1")
    if any(u < 0 for u in cfg.synth_u_q):
        raise ConfigError("synth u_q values must be >= 0")
    if any(k < 1 for k in cfg.synth_kappa_b):
        raise ConfigError("synth kappa_b values must be >= 1")
    cfg.round_config(Algorithm.FEDAVG)  # delegate range checks
    cfg.synth_round_config(Algorithm.FEDAVG)
    cfg.zne_config()


def _pmap(fn: Callable, items: list, workers: int) -> list:
    """Order-preserving map, optionally across processes."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _write_csv(path: Path, header: Sequence[str], rows: list[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


# --- gen-data ---------------------------------------------------------------

def run_gen_data(cfg: ExperimentConfig, out: Path) -> None:
    train = data.generate_blobs(cfg.n_train, cfg.flip_p, seed=cfg.seed + _TAG_TRAIN_DATA)
    test = data.generate_blobs(cfg.n_test, cfg.flip_p, seed=cfg.seed + _TAG_TEST_DATA)
    partition = data.dirichlet_partition(
        [s.label for s in train],
        cfg.n_clients,
        cfg.dirichlet_alpha,
        seed=cfg.seed + _TAG_PARTITION,
    )
    data.save_dataset_csv(train, out / "train.csv")
    data.save_dataset_csv(test, out / "test.csv")
    data.save_partition_json(partition, out / "partition.json")
    logger.info("wrote dataset (%d train / %d test) to %s", cfg.n_train, cfg.n_test, out)


# --- bias-sweep -------------------------------------------------------------

def _bias_cell(args: tuple) -> tuple[float, float]:
    """Fractional errors (raw, zne) for one (noise level, instance) cell."""
    cfg, p, instance = args
    rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, _TAG_BIAS_INSTANCE, int(p * 10**6), instance])
    )
    params = rng.normal(scale=0.5, size=60)
    sample = ((rng.random(16) > 0.5).astype(float), int(rng.integers(8)))
    ideal = oracle.grad_ideal(params, [sample])
    raw = oracle.grad_param_shift(params, [sample], NoiseLevel(p))
    zne = oracle.grad_zne(
        params, [sample], NoiseLevel(p), config=cfg.zne_config()
    )
    return (
        oracle.fractional_error(raw, ideal),
        oracle.fractional_error(zne, ideal),
    )


def run_bias_sweep(cfg: ExperimentConfig, out: Path, workers: int = 1) -> Path:
    rows = []
    for p in cfg.noise_levels:
        cells = _pmap(
            _bias_cell,
            [(cfg, p, i) for i in range(cfg.bias_instances)],
            workers,
        )
        raw = np.array([c[0] for c in cells])
        zne = np.array([c[1] for c in cells])
        rows.append(
            (p, raw.mean(), raw.std(ddof=1), zne.mean(), zne.std(ddof=1))
        )
    path = out / "bias_sweep.csv"
    _write_csv(path, ("p", "raw_mean", "raw_std", "zne_mean", "zne_std"), rows)
    return path


# --- fl-compare -------------------------------------------------------------

def _fl_single(args: tuple) -> tuple[str, list, dict]:
    """One algorithm's full training run; returns (algo, metric rows, final)."""
    cfg, algo_name = args
    algo = Algorithm(algo_name)
    train = data.generate_blobs(cfg.n_train, cfg.flip_p, seed=cfg.seed + _TAG_TRAIN_DATA)
    test = data.generate_blobs(cfg.n_test, cfg.flip_p, seed=cfg.seed + _TAG_TEST_DATA)
    partition = data.dirichlet_partition(
        [s.label for s in train],
        cfg.n_clients,
        cfg.dirichlet_alpha,
        seed=cfg.seed + _TAG_PARTITION,
    )
    init_rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, _TAG_INIT_PARAMS])
    )
    x0 = init_rng.normal(scale=0.1, size=CircuitSpec().n_params)
    orc = QuantumOracle(
        train, NoiseLevel(cfg.noise_p), zne=cfg.zne_config()
    )

    def evaluator(x: np.ndarray) -> dict[str, float]:
        train_loss, train_acc = data.evaluate(x, train)
        test_loss, test_acc = data.evaluate(x, test)
        return {
            "train_loss": train_loss,
            "train_acc": train_acc,
            "test_loss": test_loss,
            "test_acc": test_acc,
        }

    server, _, metrics = fed.run_training(
        x0,
        cfg.round_config(algo),
        orc,
        partition.shards,
        cfg.seed,
        evaluator=evaluator,
    )
    final = evaluator(server.x)
    return algo.value, metrics.rows, final


def run_fl_compare(cfg: ExperimentConfig, out: Path, workers: int = 1) -> Path:
    results = _pmap(
        _fl_single,
        [(cfg, a.value) for a in Algorithm],
        workers,
    )
    train = data.generate_blobs(cfg.n_train, cfg.flip_p, seed=cfg.seed + _TAG_TRAIN_DATA)
    test = data.generate_blobs(cfg.n_test, cfg.flip_p, seed=cfg.seed + _TAG_TEST_DATA)
    init_rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, _TAG_INIT_PARAMS])
    )
    x0 = init_rng.normal(scale=0.1, size=CircuitSpec().n_params)
    init_train = data.evaluate(x0, train)
    init_test = data.evaluate(x0, test)
    summary = {
        "seed": cfg.seed,
        "noise_p": cfg.noise_p,
        "init": {
            "train_loss": init_train[0],
            "train_acc": init_train[1],
            "test_loss": init_test[0],
            "test_acc": init_test[1],
        },
    }
    for algo_name, rows, final in results:
        series = fed.MetricsSeries(rows=rows)
        series.to_csv(out / f"fl_{algo_name}.csv", include_wall_ms=False)
        summary[algo_name] = {"final_" + k: v for k, v in final.items()}
    summary_path = out / "fl_summary.json"
    summary_path.parent.mkdir(parents=True, exist_ok=True)
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary_path


# --- shot-sweep -------------------------------------------------------------

def run_shot_sweep(cfg: ExperimentConfig, out: Path, workers: int = 1) -> Path:
    rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, _TAG_SHOT_PROBE])
    )
    params = rng.normal(scale=0.5, size=60)
    sample = ((rng.random(16) > 0.5).astype(float), int(rng.integers(8)))

    def cell(shots: int) -> tuple[int, float, float]:
        stream = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, _TAG_SHOT_PROBE, shots])
        )
        t0 = time.perf_counter()
        variance = oracle.variance_probe(
            params,
            sample,
            shots=shots,
            trials=cfg.shot_trials,
            noise=NoiseLevel(cfg.noise_p),
            stream=stream,
        )
        wall_ms = (time.perf_counter() - t0) * 1000.0 / cfg.shot_trials
        return shots, variance, wall_ms

    rows = [cell(s) for s in cfg.shots]
    path = out / "shot_sweep.csv"
    _write_csv(path, ("shots", "total_variance", "wall_ms"), rows)
    return path


# --- synth-floor ------------------------------------------------------------

def _synth_cell(args: tuple) -> dict:
    cfg, algo_name, u_q, kappa_b = args
    problem = synth.SynthProblem.generate(
        n_clients=cfg.synth_clients, dim=cfg.synth_dim, seed=cfg.seed
    )
    orc = synth.SynthOracle(
        problem, bias_norm=u_q, kappa_b=kappa_b, seed=cfg.seed
    )
    run_cfg = cfg.synth_round_config(Algorithm(algo_name))
    report = synth.measure_floor(
        problem,
        orc,
        Algorithm(algo_name),
        run_cfg,
        cfg.synth_rounds,
        cfg.seed,
        strict=False,
    )
    return synth.sweep_row(report, orc, run_cfg)


def run_synth_floor(cfg: ExperimentConfig, out: Path, workers: int = 1) -> Path:
    cells = [
        (cfg, algo.value, u_q, kappa_b)
        for algo in Algorithm
        for u_q in cfg.synth_u_q
        for kappa_b in cfg.synth_kappa_b
    ]
    rows = _pmap(_synth_cell, cells, workers)
    path = out / "synth_floor.csv"
    _write_csv(
        path,
        synth.SWEEP_COLUMNS,
        [[row[c] for c in synth.SWEEP_COLUMNS] for row in rows],
    )
    return path


# --- entry point ------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="qfedsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-data", "bias-sweep", "fl-compare", "shot-sweep", "synth-floor"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", type=str, default=None)
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--out", type=str, default=None)
        cmd.add_argument("--paper-scale", action="store_true")
        cmd.add_argument("--workers", type=int, default=1)
    return parser


_COMMANDS: dict[str, Callable[[ExperimentConfig, Path, int], object]] = {
    "bias-sweep": run_bias_sweep,
    "fl-compare": run_fl_compare,
    "shot-sweep": run_shot_sweep,
    "synth-floor": run_synth_floor,
}


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        args = _build_parser().parse_args(argv)
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError(f"--seed {args.seed} outside [0, 2^64)")
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if args.paper_scale:
            cfg.n_train, cfg.n_test = 5000, 10000
        if args.workers < 1:
            raise ConfigError(f"--workers {args.workers} must be >= 1")
        _validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        out = Path(cfg.out)
        if args.command == "gen-data":
            run_gen_data(cfg, out)
        else:
            _COMMANDS[args.command](cfg, out, args.workers)
        return 0
    except QFedSimError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
