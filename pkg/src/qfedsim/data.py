"""Binary Blobs dataset, non-IID Dirichlet partitioning, and evaluation.

Samples are 16-bit vectors derived from 8 fixed 4x4 reference patterns (4
single-row bars and 4 single-column bars) with independent bit-flip noise;
the label is the index of the originating pattern. Partitioning assigns each
class's samples across clients by Dirichlet(alpha) proportions, so small
alpha produces severe label skew.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import qsim
from .errors import PartitionError
from .oracle import PROB_CLAMP
from .qsim import CircuitSpec

logger = logging.getLogger(__name__)

N_BITS = 16
N_CLASSES = 8
MAX_PARTITION_RETRIES = 100


def _reference_patterns() -> np.ndarray:
    """8 deterministic 4x4 patterns flattened to 16 bits.

    Patterns 0-3 are single-row bars (rows 0-3), patterns 4-7 single-column
    bars (columns 0-3); each has exactly 4 ones, and pairwise Hamming
    distance is 8 within a family and 6 across families.
    """
    patterns = np.zeros((N_CLASSES, 4, 4), dtype=np.int64)
    for r in range(4):
        patterns[r, r, :] = 1
    for c in range(4):
        patterns[4 + c, :, c] = 1
    return patterns.reshape(N_CLASSES, N_BITS)


REFERENCE_PATTERNS = _reference_patterns()


@dataclass(frozen=True)
class BlobSample:
    """One 16-bit sample and the index of the pattern it was derived from."""

    bits: np.ndarray
    label: int

    def __post_init__(self) -> None:
        if self.bits.shape != (N_BITS,):
            raise ValueError(f"expected {N_BITS} bits, got {self.bits.shape}")
        if not 0 <= self.label < N_CLASSES:
            raise ValueError(f"label {self.label} outside 0..{N_CLASSES - 1}")


@dataclass(frozen=True)
class Partition:
    """Disjoint client shards (lists of sample indices) covering a dataset."""

    shards: tuple[tuple[int, ...], ...]
    alpha: float

    def __post_init__(self) -> None:
        flat = [i for shard in self.shards for i in shard]
        if len(flat) != len(set(flat)):
            raise PartitionError("overlapping shards")
        if any(len(shard) == 0 for shard in self.shards):
            raise PartitionError("empty shard")

    @property
    def n_clients(self) -> int:
        return len(self.shards)


def generate_blobs(
    n: int, flip_p: float = 0.05, seed: int = 0
) -> list[BlobSample]:
    """Draw n samples: uniform pattern choice + independent bit flips."""
    if not 0.0 <= flip_p < 0.5:
        raise ValueError(f"flip_p {flip_p} outside [0, 0.5)")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    labels = rng.integers(N_CLASSES, size=n)
    flips = rng.random((n, N_BITS)) < flip_p
    bits = np.bitwise_xor(REFERENCE_PATTERNS[labels], flips.astype(np.int64))
    return [
        BlobSample(bits=bits[i].astype(float), label=int(labels[i]))
        for i in range(n)
    ]


def dirichlet_partition(
    labels: list[int] | np.ndarray, n_clients: int, alpha: float, seed: int = 0
) -> Partition:
    """Split sample indices across clients with per-class Dirichlet weights.

    If any client ends up empty the entire draw is resampled (up to
    MAX_PARTITION_RETRIES), preserving the distributional definition instead
    of patching shards sample by sample.
    """
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    y = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    for attempt in range(MAX_PARTITION_RETRIES):
        shards: list[list[int]] = [[] for _ in range(n_clients)]
        for cls in np.unique(y):
            idx = np.flatnonzero(y == cls)
            rng.shuffle(idx)
            props = rng.dirichlet(np.full(n_clients, alpha))
            cuts = np.floor(np.cumsum(props) * idx.size).astype(int)[:-1]
            for client, chunk in enumerate(np.split(idx, cuts)):
                shards[client].extend(int(i) for i in chunk)
        if all(shards):
            if attempt:
                logger.info("partition succeeded after %d resamples", attempt)
            return Partition(
                shards=tuple(tuple(sorted(s)) for s in shards), alpha=alpha
            )
    raise PartitionError(
        f"no nonempty partition after {MAX_PARTITION_RETRIES} resamples "
        f"(n_clients={n_clients}, alpha={alpha})"
    )


def evaluate(
    params: np.ndarray,
    samples: list[BlobSample],
    spec: CircuitSpec | None = None,
) -> tuple[float, float]:
    """Mean noiseless NLL and accuracy (argmax ties -> lowest class index)."""
    if not samples:
        raise ValueError("evaluate needs at least one sample")
    spec = spec or CircuitSpec(noise_strength=0.0)
    if spec.noise_strength != 0.0:
        spec = CircuitSpec(spec.n_qubits, spec.n_layers, 0.0)
    inputs = np.asarray([s.bits for s in samples], dtype=float)
    labels = np.asarray([s.label for s in samples])
    probs = qsim.class_probabilities(
        qsim.run_circuit_batch(params, inputs, spec)
    )
    p_true = probs[np.arange(labels.size), labels]
    loss = float(np.mean(-np.log(np.maximum(p_true, PROB_CLAMP))))
    accuracy = float(np.mean(np.argmax(probs, axis=1) == labels))
    return loss, accuracy


def save_dataset_csv(samples: list[BlobSample], path: str | Path) -> None:
    """Write samples as CSV: 16 bit columns then the label column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"bit{i}" for i in range(N_BITS)] + ["label"])
        for s in samples:
            writer.writerow([int(b) for b in s.bits] + [s.label])


def load_dataset_csv(path: str | Path) -> list[BlobSample]:
    """Inverse of save_dataset_csv."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            BlobSample(
                bits=np.asarray(
                    [float(row[f"bit{i}"]) for i in range(N_BITS)]
                ),
                label=int(row["label"]),
            )
            for row in reader
        ]


def save_partition_json(partition: Partition, path: str | Path) -> None:
    """Write a partition as JSON mapping client id -> sorted index list."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "alpha": partition.alpha,
        "shards": {str(i): list(s) for i, s in enumerate(partition.shards)},
    }
    path.write_text(json.dumps(payload, indent=2) + "\n")


def load_partition_json(path: str | Path) -> Partition:
    """Inverse of save_partition_json."""
    payload = json.loads(Path(path).read_text())
    shards = payload["shards"]
    ordered = [tuple(shards[str(i)]) for i in range(len(shards))]
    return Partition(shards=tuple(ordered), alpha=float(payload["alpha"]))
