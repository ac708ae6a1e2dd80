"""Throughput of the batch samplers: compiled kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--paths N] [--repeat K] [--csv PATH]

Rows with backend ``numba`` time the njit kernels (compilation excluded by a
warm-up call), ``numpy`` the vectorised fallback that ``ZRP_DISABLE_NUMBA=1``
selects, and ``python`` the same kernel source run by the interpreter on a
reduced path count (it is only there to show what compilation buys).
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from zrp import ModelSpec, RateFunction, NUMBA_ENABLED
from zrp import _numpy_batch, kernels
from zrp.io import write_csv
from zrp.rng import make_rng
from zrp.sim import construction1_cap, construction2_cap, jump_tables

CASES = (
    # (label, n, m, alpha, t_end)
    ("small", 3, 3, 1.0, 1.0),
    ("medium", 8, 32, 0.5, 2.0),
    ("large", 32, 128, 0.5, 1.0),
)


def _calls(spec, t_end):
    x = np.zeros(spec.n, dtype=np.int64)
    x[0] = spec.m
    r = np.ascontiguousarray(spec.rates())
    c1 = construction1_cap(spec)
    c2 = construction2_cap(spec)
    weight, cumP = jump_tables(spec)
    return {
        "c1": lambda mod, size, rng: mod.c1_batch(x, r, c1, t_end, size, rng),
        "c2": lambda mod, size, rng: mod.c2_batch(x, r, c2, t_end, size, rng),
        "gillespie": lambda mod, size, rng: mod.gillespie_batch(x, r, weight, cumP, t_end, size, rng),
    }


class _Interpreted:
    """Adapter exposing the uncompiled kernel sources under the batch names."""

    c1_batch = staticmethod(kernels.c1_batch.py_func)
    c2_batch = staticmethod(kernels.c2_batch.py_func)
    gillespie_batch = staticmethod(kernels.gillespie_batch.py_func)


def _best_of(fn, repeat):
    best = float("inf")
    for k in range(repeat):
        start = time.perf_counter()
        fn(k)
        best = min(best, time.perf_counter() - start)
    return best


def run(paths: int, repeat: int, python_fraction: float):
    backends = [("numpy", _numpy_batch, paths), ("python", _Interpreted, max(1, int(paths * python_fraction)))]
    if NUMBA_ENABLED:
        backends.insert(0, ("numba", kernels, paths))
    rows = []
    for label, n, m, alpha, t_end in CASES:
        spec = ModelSpec(RateFunction.power(alpha), n, m)
        for engine, call in _calls(spec, t_end).items():
            for backend, mod, size in backends:
                call(mod, min(size, 16), make_rng(0))  # warm-up, triggers compilation
                secs = _best_of(lambda k: call(mod, size, make_rng(k)), repeat)
                rows.append((label, n, m, engine, backend, size, secs, size / secs))
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--python-fraction", type=float, default=0.02,
                    help="share of --paths given to the interpreted kernels")
    ap.add_argument("--csv", help="also write the table to this CSV file")
    args = ap.parse_args(argv)

    header = ("case", "n", "m", "engine", "backend", "paths", "seconds", "paths_per_second")
    rows = run(args.paths, args.repeat, args.python_fraction)
    print(f"numba enabled: {NUMBA_ENABLED}")
    print("{:<7} {:>3} {:>4} {:<10} {:<7} {:>7} {:>9} {:>14}".format(*header[:7], "paths/s"))
    for case, n, m, engine, backend, size, secs, rate in rows:
        print(f"{case:<7} {n:>3} {m:>4} {engine:<10} {backend:<7} {size:>7} {secs:>9.4f} {rate:>14.0f}")
    if args.csv:
        write_csv(args.csv, header, rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
