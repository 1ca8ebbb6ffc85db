"""Time the numba and numpy backends on the same workloads.

The backend is fixed at import time, so every (backend, workload) pair runs
in its own interpreter.  The first call (which includes JIT compilation for
numba) is reported separately from the best of the timed repeats, and the
outputs of the two backends are compared.

    python3 benchmarks/bench_backends.py [--repeat 3] [--workloads initial,solve]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

WORKLOADS = ("initial", "heat", "solve", "q_table")


def _build(name: str):
    import math

    from fracgreen.fractional import TimeGrid
    from fracgreen.kernels import SPDOperator
    from fracgreen.levi import CoefficientField, OperatorSpec, SpaceTimeGrid, solve_Q
    from fracgreen.solver import (
        CauchyProblem,
        heat_potential,
        initial_potential,
        solve_cauchy,
    )

    alpha = 0.5

    def grid(count, levels):
        return SpaceTimeGrid.periodic_box(TimeGrid.graded(1.0, levels, 2.0 / alpha), [-math.pi], [math.pi], [count])

    variable = OperatorSpec.isotropic(alpha, 1, CoefficientField.trig(1.0, 0.3, [1.0]))
    ident = SPDOperator.identity(1)
    mode = CoefficientField.trig(0.0, 1.0, [2.0], math.pi / 2)
    if name == "initial":
        g = grid(32, 24)
        return lambda: initial_potential(ident, mode, g, alpha).u
    if name == "heat":
        g = grid(32, 12)
        return lambda: heat_potential(ident, mode, g, alpha).u
    if name == "solve":
        g = grid(16, 8)
        prob = CauchyProblem(alpha, 1.0, variable, CoefficientField.constant(1.0))
        return lambda: solve_cauchy(prob, g, estimate_error=False).u
    if name == "q_table":
        g = grid(16, 4)
        return lambda: solve_Q(variable, g, g.points[5]).values[1:]
    raise ValueError(name)


def worker(name: str, repeat: int) -> None:
    from fracgreen._accel import BACKEND

    fn = _build(name)
    start = time.perf_counter()
    out = fn()
    first = time.perf_counter() - start
    best = first
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    print(json.dumps({"backend": BACKEND, "workload": name, "first": first, "best": best,
                      "result": np.asarray(out).ravel().tolist()}))


def run_one(backend: str, name: str, repeat: int) -> dict:
    env = dict(os.environ, FRACGREEN_BACKEND=backend)
    env.pop("FRACGREEN_DISABLE_NUMBA", None)
    proc = subprocess.run([sys.executable, __file__, "--worker", name, "--repeat", str(repeat)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--workloads", default=",".join(WORKLOADS))
    p.add_argument("--worker", help=argparse.SUPPRESS)
    args = p.parse_args()
    if args.worker:
        worker(args.worker, args.repeat)
        return
    names = [w for w in args.workloads.split(",") if w]
    print(f"{'workload':<10} {'numba first':>12} {'numba best':>11} {'numpy best':>11} {'speedup':>8} {'max diff':>10}")
    for name in names:
        fast = run_one("numba", name, args.repeat)
        slow = run_one("numpy", name, args.repeat)
        diff = float(np.max(np.abs(np.subtract(fast["result"], slow["result"]))))
        print(f"{name:<10} {fast['first']:>11.2f}s {fast['best']:>10.3f}s {slow['best']:>10.3f}s "
              f"{slow['best'] / fast['best']:>7.1f}x {diff:>10.1e}", flush=True)


if __name__ == "__main__":
    main()
