"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N]

Times each kernel on K=10 inputs, then a full T=10^4 run per backend in a
fresh interpreter (the backend is fixed at import time).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from fogoffload import _kernels_py

try:
    from fogoffload import _kernels as _compiled
except ImportError:
    _compiled = None

RUN_SNIPPET = """
import time
from fogoffload import kernels
from fogoffload.env import EnvConfig
from fogoffload.sim import PolicySpec, simulate
best = float("inf")
for _ in range({repeat}):
    t0 = time.perf_counter()
    h = simulate(EnvConfig(), PolicySpec("tod"), seed=7)
    best = min(best, time.perf_counter() - t0)
print(kernels.BACKEND, best, repr(float(h.latency.mean())))
"""


def kernel_calls(mod, K=10):
    rng = np.random.default_rng(0)
    n, w, p = rng.uniform(0.5, 50, K), rng.uniform(0, 2, K), rng.uniform(0.1, 5, K)
    tx, q = rng.uniform(0, 0.06, K), rng.uniform(0, 20, K)
    cw, cpu = rng.uniform(1, 10, K), rng.uniform(1, 10, K)
    add = [np.zeros(K) for _ in range(3)]
    bufs = [np.empty(K) for _ in range(4)]
    out = np.empty(K)
    return {
        "ucb_scores": lambda: mod.ucb_scores(n, w, p, 7.0, tx, q, 20.0, 0.6, 120.0, True, out),
        "discount_merge": lambda: mod.discount_merge(0.9985, n, w, p, *add),
        "realize_slot": lambda: mod.realize_slot(7.0, 4.0, cw, cpu, tx, q, 5.5, *bufs),
        "evolve_queues": lambda: mod.evolve_queues(q, add[0], cpu, 0.18, 3, 0.0),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--calls", type=int, default=20_000)
    args = ap.parse_args()

    backends = [("python", _kernels_py)] + ([("cython", _compiled)] if _compiled else [])
    print(f"{'kernel':<16}" + "".join(f"{name:>14}" for name, _ in backends) + "   (us/call)")
    for kernel in kernel_calls(_kernels_py):
        row = []
        for _, mod in backends:
            fn = kernel_calls(mod)[kernel]
            row.append(min(timeit.repeat(fn, number=args.calls, repeat=args.repeat))
                       / args.calls * 1e6)
        print(f"{kernel:<16}" + "".join(f"{x:>14.2f}" for x in row))

    print("\nfull run, T=10000 K=10 (best of %d):" % args.repeat)
    for flag in ("1", "0"):
        env = {**os.environ, "FOGOFFLOAD_PURE_PYTHON": flag}
        r = subprocess.run([sys.executable, "-c", RUN_SNIPPET.format(repeat=args.repeat)],
                           env=env, capture_output=True, text=True, check=True)
        name, secs, lat = r.stdout.split()
        print(f"  {name:<8} {float(secs):6.3f} s   mean latency {lat}")


if __name__ == "__main__":
    main()
