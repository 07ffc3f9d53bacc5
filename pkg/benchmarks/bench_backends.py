"""Compare the numba and numpy scoring kernels, and a whole swarm run on each.

    python benchmarks/bench_backends.py [--repeat 200]

The swarm comparison launches subprocesses with and without
OPTDES_DISABLE_NUMBA so each uses the backend selected at import time.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from optdes import kernels
from optdes.criteria import moment_matrix

CASES = [(1, 5), (2, 9), (3, 10), (3, 16)]
SWARM = [50, 500]

RUN_SNIPPET = """
import time, optdes
from optdes.pso import PsoConfig, run
run("D", 9, 2, PsoConfig(swarm_size=20, seed=0, max_iterations=3))  # warm-up / compile
t = time.perf_counter()
r = run("D", 9, 2, PsoConfig(swarm_size=50, seed=1))
print(optdes.backend_name(), time.perf_counter() - t, r.function_evaluations)
"""


def time_kernel(fn, designs, repeat):
    fn(designs)  # compile
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(designs)
    return (time.perf_counter() - t0) / repeat


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    print(f"{'K':>2} {'N':>3} {'S':>4} {'crit':>4} {'numba us/design':>16} {'numpy us/design':>16} {'speedup':>8}")
    for K, N in CASES:
        W = moment_matrix(K)
        for S in SWARM:
            designs = rng.uniform(-1, 1, size=(S, N, K))
            for crit, nb, npy in (
                ("D", lambda d: kernels.d_scores(d, use_numba=True), lambda d: kernels.d_scores(d, use_numba=False)),
                ("I", lambda d: kernels.iv_scores(d, W, use_numba=True), lambda d: kernels.iv_scores(d, W, use_numba=False)),
            ):
                a = time_kernel(nb, designs, args.repeat) / S * 1e6
                b = time_kernel(npy, designs, args.repeat) / S * 1e6
                print(f"{K:>2} {N:>3} {S:>4} {crit:>4} {a:>16.3f} {b:>16.3f} {b / a:>8.1f}")

    print("\nfull run, K=2 N=9 D, S=50, local topology:")
    for disable in ("0", "1"):
        env = dict(os.environ, OPTDES_DISABLE_NUMBA=disable)
        out = subprocess.run([sys.executable, "-c", RUN_SNIPPET], env=env, capture_output=True, text=True, check=True)
        name, secs, fevals = out.stdout.split()
        print(f"  {name:<6} {float(secs):8.3f} s  {int(fevals)} evaluations")


if __name__ == "__main__":
    main()
