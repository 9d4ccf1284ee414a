"""Compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--size 128] [--steps 200] [--repeat 3]

Prints the best wall time of each kernel per backend and the speedup.
"""

import argparse
import time

import numpy as np

from hmlab import DomainGrid, Potential, Region, TargetChart, kernels
from hmlab.initial import build_initial


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=128, help="grid nodes per side (2D)")
    ap.add_argument("--steps", type=int, default=200, help="flow steps per timing")
    ap.add_argument("--geo-steps", type=int, default=10000, help="RK4 steps per timing")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    h = 1.0 / args.size
    grid = DomainGrid(Region.box([[0.0, 1.0], [0.0, 1.0]]), h, bc="periodic")
    chart = TargetChart(2, "hyperbolic")
    pot = Potential("quadratic_radial", [-0.5])
    field = build_initial(grid, chart, {"kind": "random", "seed": 0, "amplitude": 0.3})
    act, nbr = grid.flow_stencil()
    params = (chart.sign, chart.curvature_scale, *pot.kernel_params())
    dt = 0.1 * h * h
    y0, v0 = np.array([0.1, 0.2]), np.array([0.3, -0.1])

    backends = [("python", kernels.reference)]
    if kernels.compiled is not None:
        backends.insert(0, ("compiled", kernels.compiled))
    else:
        print("compiled extension not built; timing the fallback only")

    cases = {
        "residual_rows": lambda b: b.residual_rows(field.values, act, nbr, h, *params),
        "flow_steps": lambda b: b.flow_steps(field.values, act, nbr, h, dt, args.steps,
                                             *params),
        "rk4_path": lambda b: b.rk4_path(y0, v0, 1e-3, args.geo_steps, 1e-3, *params),
    }
    print(f"grid {grid.size} nodes, {args.steps} flow steps, {args.geo_steps} RK4 steps")
    print(f"{'kernel':<14} " + " ".join(f"{name:>12}" for name, _ in backends) + "   speedup")
    for label, fn in cases.items():
        t = [best_of(lambda b=b: fn(b), args.repeat) for _, b in backends]
        speed = f"{t[1] / t[0]:8.1f}x" if len(t) == 2 else ""
        print(f"{label:<14} " + " ".join(f"{x:>11.4f}s" for x in t) + "  " + speed)


if __name__ == "__main__":
    main()
