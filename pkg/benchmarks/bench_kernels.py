"""Time the numba and numpy kernel backends on the same problems and check they agree.

    python3 benchmarks/bench_kernels.py [--n 64] [--repeat 3]
"""

import argparse
import time

import numpy as np

from sparselab.averaging import Quadrature, bilinear_spherical_average, linear_spherical_average
from sparselab.fields import GridSpec, RegionSpec, make_indicator


def _best(fn, repeat):
    fn()  # warm up (jit compile on the first numba call)
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    spec = GridSpec.cube(2, 2.0, args.n)
    f = make_indicator(RegionSpec.ball((0.0, 0.0), 0.8), spec)
    g = make_indicator(RegionSpec.annulus((0.2, 0.0), 0.3, 0.6), spec)
    quad = Quadrature(32, 64, 1.0)
    cases = {
        "linear A_1 f": lambda b: linear_spherical_average(f, 1.0, quad=quad, backend=b).values,
        "bilinear A_1(f, g)": lambda b: bilinear_spherical_average(f, g, 1.0, quad=quad, backend=b).values,
    }
    print(f"{'case':<22}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, run in cases.items():
        t_nb, v_nb = _best(lambda: run("numba"), args.repeat)
        t_np, v_np = _best(lambda: run("numpy"), args.repeat)
        diff = float(np.max(np.abs(v_nb - v_np)))
        print(f"{name:<22}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>10.1f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
