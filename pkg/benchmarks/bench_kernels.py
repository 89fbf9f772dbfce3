"""Compare the compiled and NumPy scenario-reduction kernels.

    python3 benchmarks/bench_kernels.py [--days 365] [--locations 4] [--keep 10] [--repeat 5]

Random per-unit scenario vectors stand in for real weather; the workload
shape (days x 48*locations) matches the bundled dataset by default.
"""

import argparse
import importlib
import time

import numpy as np

from gridplan._ext import _kernels_py


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--days", type=int, default=365)
    ap.add_argument("--locations", type=int, default=4)
    ap.add_argument("--keep", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    X = rng.random((args.days, 48 * args.locations))
    prob = np.full(args.days, 1.0 / args.days)

    backends = {"python": _kernels_py}
    try:
        backends["cython"] = importlib.import_module("gridplan._ext._kernels")
    except ImportError:
        print("compiled extension not built; only the NumPy backend is timed")

    results = {}
    for name, mod in backends.items():
        t_dist, dist = _best_of(lambda: mod.pairwise_distances(X), args.repeat)
        t_sel, kept = _best_of(lambda: mod.forward_select(dist, prob, args.keep), args.repeat)
        results[name] = (t_dist, t_sel, dist, list(kept))

    print(f"{'backend':8s} {'distances [ms]':>15s} {'selection [ms]':>15s}")
    for name, (t_dist, t_sel, _, _) in results.items():
        print(f"{name:8s} {1e3 * t_dist:15.2f} {1e3 * t_sel:15.2f}")
    if len(results) == 2:
        py, cy = results["python"], results["cython"]
        print(f"speed-up: distances x{py[0] / cy[0]:.1f}, selection x{py[1] / cy[1]:.1f}")
        print(f"max |distance difference| {np.max(np.abs(py[2] - cy[2])):.2e}; "
              f"same selection: {py[3] == cy[3]}")


if __name__ == "__main__":
    main()
