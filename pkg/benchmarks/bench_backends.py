#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-NumPy fallback.

Workloads: single-gate application on the full 12-qubit register, one full
circuit evaluation (compact register), and one finite-difference feature
gradient. Run:

    python benchmarks/bench_backends.py [--repeat 2000]
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from qgnoise import backend
from qgnoise.graphs import generate_synthetic
from qgnoise.model import compile_program, program_features
from qgnoise.training import FINITE_DIFFERENCE, feature_gradient


def _time(fn, repeat: int) -> float:
    fn()  # warm-up (and numba compilation)
    start = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - start) / repeat


def _workloads(repeat: int):
    rng = np.random.default_rng(0)
    amps = np.zeros(1 << 12, dtype=np.complex128)
    amps[0] = 1.0

    graph = max(generate_synthetic(40, seed=5), key=lambda g: g.n_atoms)
    program = compile_program(graph, 1)
    params = rng.uniform(-math.pi, math.pi, 14)
    buffer = np.empty(1 << program.n_qubits, dtype=np.complex128)
    gz = rng.normal(size=12)

    def single_gate():
        backend.impl.apply_ry(amps, 5, 0.3)

    def circuit_eval():
        program_features(program, params, buffer)

    def fd_gradient():
        feature_gradient(program, params, gz, mode=FINITE_DIFFERENCE, buffer=buffer)

    return [
        ("RY on 12-qubit register", single_gate, repeat),
        (f"circuit eval ({graph.n_atoms} atoms, {len(program)} gates)", circuit_eval, repeat),
        ("FD feature gradient", fd_gradient, max(1, repeat // 20)),
    ]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=2000)
    args = parser.parse_args()

    results: dict[str, dict[str, float]] = {}
    for name in ("numpy", "numba"):
        try:
            backend.select(name)
        except ImportError:
            print(f"backend {name} unavailable, skipping")
            continue
        for label, fn, repeat in _workloads(args.repeat):
            results.setdefault(label, {})[name] = _time(fn, repeat)
    backend.select("auto")

    width = max(len(label) for label in results)
    print(f"{'workload':<{width}}  {'numpy':>12}  {'numba':>12}  {'speedup':>8}")
    for label, times in results.items():
        np_t = times.get("numpy")
        nb_t = times.get("numba")
        ratio = f"{np_t / nb_t:7.1f}x" if np_t and nb_t else "     n/a"
        fmt = lambda t: f"{t * 1e6:10.1f} us" if t else "       n/a"
        print(f"{label:<{width}}  {fmt(np_t)}  {fmt(nb_t)}  {ratio}")


if __name__ == "__main__":
    main()
