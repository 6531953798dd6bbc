"""Time the compiled and pure-Python kernels on identical workloads.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each row reports the best wall time per backend and the speedup. The two
backends must return identical costs; the script aborts otherwise.
"""

import argparse
import logging
import time

import numpy as np

from stepwise import kernels, pmp, problems as P, schedule as S
from stepwise.ode import TimeGrid

STEPS = {"intro": 2000, "chemo": 2000, "dsdi": 2000}


def best_time(fn, repeat):
    out, best = None, np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def workloads(name):
    p = P.builtin(name)
    g = TimeGrid.over(p.T, STEPS[name])
    rng = np.random.default_rng(0)
    n = 5
    vals = rng.uniform(p.bounds[:, 0], p.bounds[:, 1], (n, p.m))
    s = S.ControlSchedule(S.widths_to_breakpoints(rng.uniform(0.2, 1, n), p.T), vals, p.bounds)
    obj = {b: P.StepwiseObjective(p, "variable", n, g, backend=b) for b in kernels.available()}
    pop = rng.uniform(obj["python"].bounds[:, 0], obj["python"].bounds[:, 1],
                      (64, obj["python"].dim))
    return {
        "cost": lambda b: P.raw_cost(p, s, g, backend=b),
        "batch64": lambda b: obj[b].batch(pop),
        "fbs10": lambda b: pmp.fbs(p, g, max_iter=10, backend=b).raw,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    logging.getLogger("stepwise").setLevel(logging.ERROR)  # truncated sweeps warn
    backends = kernels.available()
    print(f"backends: {', '.join(backends)}")
    print(f"{'problem':8s} {'workload':8s} " + " ".join(f"{b:>10s}" for b in backends)
          + (f" {'speedup':>8s}" if len(backends) > 1 else ""))
    for name in P.NAMES:
        for label, fn in workloads(name).items():
            times, outs = {}, {}
            for b in backends:
                times[b], outs[b] = best_time(lambda: fn(b), args.repeat)
            ref = outs[backends[0]]
            for b in backends[1:]:
                if not np.allclose(outs[b], ref, rtol=1e-9, equal_nan=True):
                    raise SystemExit(f"{name}/{label}: backends disagree")
            row = f"{name:8s} {label:8s} " + " ".join(f"{times[b]:10.4f}" for b in backends)
            if "cython" in times and "python" in times:
                row += f" {times['python'] / times['cython']:7.1f}x"
            print(row)


if __name__ == "__main__":
    main()
