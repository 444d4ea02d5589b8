"""Compare the compiled simplex kernel with the pure-Python fallback.

Usage: python3 benchmarks/bench_simplex.py [--repeat N] [--iters K]

Three workloads: small random LPs, portfolio stage LPs built from a cut set
after a few iterations, and a short end-to-end solver run.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from rddp import bellman, lp, portfolio, solver

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from conftest import random_bounded_lp  # noqa: E402


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def small_lps(count=300):
    rng = np.random.default_rng(0)
    return [random_bounded_lp(rng) for _ in range(count)]


def stage_lps(iters):
    model = portfolio.build_instance(portfolio.default_params().replace(lam=0.2, alpha=0.7))
    cuts = solver.run(model, solver.RddpConfig(max_iterations=iters)).cuts
    rng = np.random.default_rng(1)
    out = []
    for _ in range(20):
        x = rng.uniform(0.0, 0.5, 4)
        d = int(rng.integers(model.num_d))
        t = int(rng.integers(0, model.horizon - 1))
        out.append(bellman.build_stage_lp(model, t, d, x, cuts).problem)
    return model, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--iters", type=int, default=3, help="solver iterations for the stage LPs")
    args = ap.parse_args()

    if "compiled" not in lp.BACKENDS:
        print("compiled kernel not built; only the fallback is available")
    small = small_lps()
    model, stages = stage_lps(args.iters)
    sizes = [p.num_vars for p in stages]
    print(f"stage LPs: {len(stages)} problems, {min(sizes)}-{max(sizes)} variables")

    rows = []
    for name in lp.BACKENDS:
        t_small = best_of(lambda: [lp.solve(p, backend=name) for p in small], args.repeat)
        t_stage = best_of(lambda: [lp.solve(p, backend=name) for p in stages], args.repeat)
        cfg = solver.RddpConfig(max_iterations=2, backend=name)
        t_run = best_of(lambda: solver.run(model, cfg), 1)
        rows.append((name, t_small, t_stage, t_run))

    print(f"{'backend':<10}{'300 small LPs':>16}{'20 stage LPs':>16}{'2 iterations':>16}")
    for name, a, b, c in rows:
        print(f"{name:<10}{a:>15.3f}s{b:>15.3f}s{c:>15.3f}s")
    if len(rows) == 2:
        (_, a0, b0, c0), (_, a1, b1, c1) = rows
        print(f"{'speedup':<10}{a1 / a0:>15.1f}x{b1 / b0:>15.1f}x{c1 / c0:>15.1f}x")


if __name__ == "__main__":
    main()
