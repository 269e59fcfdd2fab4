"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the three primitive kernels on batched density matrices and a full
parameter-shift gradient through each backend. Run:

    python3 bench/benchmark_backends.py [--batch 16] [--repeats 50]

The backend is swapped by monkeypatching qfedsim.backend's function table,
which is exactly the indirection the package uses at import time.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qfedsim import backend, oracle, qsim
from qfedsim import _kernels_py as python_kernels
from qfedsim.oracle import NoiseLevel

try:
    from qfedsim import _kernels as compiled_kernels
except ImportError:
    compiled_kernels = None


def timeit(fn, repeats: int) -> float:
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernels(mod, batch: int, repeats: int) -> dict[str, float]:
    rng = np.random.default_rng(0)
    rhos = np.ascontiguousarray(
        rng.normal(size=(batch, 16, 16)) + 1j * rng.normal(size=(batch, 16, 16))
    )
    gate = qsim.rotation_matrix("y", 0.7)
    return {
        "apply_1q": timeit(lambda: mod.apply_1q(rhos, gate, 1), repeats),
        "apply_cnot": timeit(lambda: mod.apply_cnot(rhos, 0, 1), repeats),
        "depolarize": timeit(lambda: mod.depolarize(rhos, 2, 0.03), repeats),
    }


def bench_gradient(mod, batch: int, repeats: int) -> float:
    saved = (backend.apply_1q, backend.apply_cnot, backend.depolarize)
    backend.apply_1q = mod.apply_1q
    backend.apply_cnot = mod.apply_cnot
    backend.depolarize = mod.depolarize
    try:
        rng = np.random.default_rng(1)
        params = rng.normal(scale=0.5, size=60)
        samples = [
            ((rng.random(16) > 0.5).astype(float), int(rng.integers(8)))
            for _ in range(batch)
        ]
        return timeit(
            lambda: oracle.grad_param_shift(params, samples, NoiseLevel(0.01)),
            max(1, repeats // 10),
        )
    finally:
        backend.apply_1q, backend.apply_cnot, backend.depolarize = saved


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=16)
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    backends = {"python": python_kernels}
    if compiled_kernels is not None:
        backends["compiled"] = compiled_kernels
    else:
        print("compiled extension not built; benchmarking fallback only")

    results = {}
    for name, mod in backends.items():
        kernels = bench_kernels(mod, args.batch, args.repeats)
        grad = bench_gradient(mod, args.batch, args.repeats)
        results[name] = {**kernels, "full_gradient": grad}

    header = f"{'operation':<16}" + "".join(f"{n:>14}" for n in results)
    if len(results) == 2:
        header += f"{'speedup':>10}"
    print(f"\nbatch={args.batch}, repeats={args.repeats}")
    print(header)
    for op in ("apply_1q", "apply_cnot", "depolarize", "full_gradient"):
        row = f"{op:<16}"
        times = [results[n][op] for n in results]
        row += "".join(f"{t * 1e3:>12.3f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
