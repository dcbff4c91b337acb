"""Compare the compiled and numpy RK4 kernels on the bundled scenarios.

    python3 benchmarks/bench_kernel.py [--repeat 3] [--horizon 1.0]
"""

import argparse
import time

import numpy as np

from duio import kernel
from duio import reproduce as R
from duio import scenario as S
from duio import simulator as sim


def bench(which, backend, repeat, horizon):
    sc = S.load_bundled(which)
    cfg = R.config_for(sc, R.simulation_design(sc), horizon=horizon)
    best, trace = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        trace = sim.simulate(cfg, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, trace


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--horizon", type=float, default=1.0)
    ap.add_argument("--scenarios", default="1,2,3")
    args = ap.parse_args(argv)
    names = sorted(kernel.backends())
    print(f"backends: {', '.join(names)} (default {kernel.BACKEND})")
    print(f"{'scenario':>8} {'steps':>8} " + " ".join(f"{n + ' [s]':>12}" for n in names) + f" {'speedup':>8} {'max |dx|':>10}")
    for which in args.scenarios.split(","):
        times, traces = {}, {}
        for name in names:
            times[name], traces[name] = bench(which, name, args.repeat, args.horizon)
        steps = len(traces[names[0]].times) - 1
        if len(names) == 2:
            speed = times["python"] / times["cython"]
            dev = float(np.max(np.abs(traces["python"].x_hat - traces["cython"].x_hat)))
        else:
            speed, dev = float("nan"), float("nan")
        cols = " ".join(f"{times[n]:12.3f}" for n in names)
        print(f"{which:>8} {steps:>8} {cols} {speed:8.1f} {dev:10.2e}")


if __name__ == "__main__":
    main()
