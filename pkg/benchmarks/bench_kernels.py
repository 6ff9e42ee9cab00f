"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --samples 200000 --points 20000
"""
import argparse
import timeit

import numpy as np

from plrsoh import _kernels_py

try:
    from plrsoh import _kernels
except ImportError:
    _kernels = None


def occupancy_args(n, n_intervals, rng):
    times = np.cumsum(rng.uniform(1.0, 20.0, n))
    values = rng.normal(size=(6, n))
    thresholds = np.sort(rng.normal(size=(6, 4)), axis=1)
    interval = (times[-1] - times[0]) / n_intervals
    return times, values, times[0], interval, n_intervals, thresholds


def density_args(n, n_grid, rng):
    x = rng.uniform(size=n)
    return x, -x + 0.05 * rng.normal(size=n), np.linspace(0, 1, n_grid), 0.1, 0.1


def best_of(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=200_000, help="samples per occupancy call")
    ap.add_argument("--intervals", type=int, default=500)
    ap.add_argument("--points", type=int, default=20_000, help="data points per smoothing call")
    ap.add_argument("--grid", type=int, default=201)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    cases = {
        "occupancy": occupancy_args(args.samples, args.intervals, rng),
        "smooth_density": density_args(args.points, args.grid, rng),
    }
    print(f"{'kernel':<16}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}{'max |diff|':>14}")
    for name, call_args in cases.items():
        py_fn = getattr(_kernels_py, name)
        t_py = best_of(py_fn, call_args, args.repeat)
        if _kernels is None:
            print(f"{name:<16}{1e3 * t_py:>14.2f}{'n/a':>14}{'n/a':>10}{'n/a':>14}")
            continue
        cy_fn = getattr(_kernels, name)
        t_cy = best_of(cy_fn, call_args, args.repeat)
        ref, got = py_fn(*call_args), cy_fn(*call_args)
        ref, got = (ref,) if isinstance(ref, np.ndarray) else ref, (got,) if isinstance(got, np.ndarray) else got
        diff = max(float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) for a, b in zip(ref, got))
        print(f"{name:<16}{1e3 * t_py:>14.2f}{1e3 * t_cy:>14.2f}{t_py / t_cy:>10.1f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
