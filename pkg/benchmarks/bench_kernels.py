"""Timing comparison between the compiled and pure-numpy kernel backends.

Runs each hot kernel (multi-threshold update, spike-driven linear,
compensated spiking product) at sizes comparable to the toy pipeline and
prints a per-kernel table. Both backends compute the same values and report
identical operation counts; only wall time differs.

    python benchmarks/bench_kernels.py --repeat 5
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from vit2snn.backend import get_backend
from vit2snn.neuron import build_ladder


def _timeit(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_mt_step(backend, size: int, levels: int, repeat: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    lad = build_ladder(0.6, 0.8, levels)
    v0 = rng.normal(size=size)
    current = rng.normal(scale=1.2, size=size)

    def run():
        v = v0.copy()
        spikes = np.zeros(size, dtype=np.int32)
        counts = np.zeros(2 * levels + 1, dtype=np.int64)
        backend.mt_step(v, current, spikes, lad.pos_bounds, lad.neg_bounds,
                        lad.values, counts, 2.0 * float(lad.values[levels - 1]))

    return _timeit(run, repeat)


def bench_spike_linear(backend, rows: int, fan_in: int, fan_out: int,
                       levels: int, repeat: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    spikes = ((rng.random((rows, fan_in)) < 0.3)
              * rng.integers(1, 2 * levels + 1, size=(rows, fan_in))).astype(np.int32)
    banks = rng.normal(size=(2 * levels, fan_in, fan_out))
    bias = rng.normal(size=fan_out)

    def run():
        out = np.empty((rows, fan_out), dtype=np.float64)
        out[:] = bias
        backend.spike_linear(spikes, banks, out)

    return _timeit(run, repeat)


def bench_matmul_ec(backend, slices: int, n_dim: int, p_dim: int, m_dim: int,
                    levels: int, repeat: int, seed: int, density: float) -> float:
    rng = np.random.default_rng(seed)
    lad = build_ladder(0.5, 0.7, levels)
    lut_ab = np.ascontiguousarray(np.outer(lad.values, lad.values))
    lut_pos = np.ascontiguousarray(lad.theta1 * lad.values)
    lut_neg = np.ascontiguousarray(lad.theta2 * lad.values)
    spk_a = ((rng.random((slices, n_dim, p_dim)) < density)
             * rng.integers(1, 2 * levels + 1, size=(slices, n_dim, p_dim))).astype(np.int32)
    spk_b = ((rng.random((slices, p_dim, m_dim)) < density)
             * rng.integers(1, 2 * levels + 1, size=(slices, p_dim, m_dim))).astype(np.int32)

    def run():
        cum_a = np.zeros((slices, n_dim, p_dim))
        cum_b = np.zeros((slices, p_dim, m_dim))
        sc_b_pos = np.zeros((slices, p_dim, m_dim))
        sc_b_neg = np.zeros((slices, p_dim, m_dim))
        sc_a_pos = np.zeros((slices, n_dim, p_dim))
        sc_a_neg = np.zeros((slices, n_dim, p_dim))
        cum_prod = np.zeros((slices, n_dim, m_dim))
        k_out = np.zeros((slices, n_dim, m_dim))
        for _ in range(4):
            backend.matmul_ec_step(
                spk_a, spk_b, lad.values, lad.values,
                lut_ab, lut_pos, lut_neg, lut_pos, lut_neg,
                levels, levels,
                cum_a, cum_b, sc_b_pos, sc_b_neg, sc_a_pos, sc_a_neg,
                cum_prod, k_out,
            )

    return _timeit(run, repeat)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="keep the best of this many runs")
    parser.add_argument("--levels", type=int, default=8, help="threshold rungs per polarity")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = {}
    backends["python"] = get_backend("python")
    try:
        backends["compiled"] = get_backend("compiled")
    except ImportError:
        print("compiled backend unavailable; timing python only")

    cases = [
        ("mt_step (139k neurons)",
         lambda be: bench_mt_step(be, 256 * 17 * 32, args.levels, args.repeat, args.seed)),
        ("spike_linear (4352x32 -> 96)",
         lambda be: bench_spike_linear(be, 4352, 32, 96, args.levels, args.repeat, args.seed)),
        ("matmul_ec (1024x 17x8 @ 8x17, 30% firing)",
         lambda be: bench_matmul_ec(be, 1024, 17, 8, 17, args.levels, args.repeat,
                                    args.seed, density=0.30)),
        ("matmul_ec (1024x 17x8 @ 8x17, 5% firing)",
         lambda be: bench_matmul_ec(be, 1024, 17, 8, 17, args.levels, args.repeat,
                                    args.seed, density=0.05)),
    ]

    width = max(len(name) for name, _ in cases)
    header = f"{'kernel':<{width}}  " + "".join(f"{name:>12}" for name in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, bench in cases:
        times = {bname: bench(be) for bname, be in backends.items()}
        line = f"{name:<{width}}  " + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        if len(times) == 2:
            line += f"{times['python'] / times['compiled']:>9.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
