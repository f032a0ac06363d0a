"""Benchmark the compiled kernel against the pure-numpy reference.

Times one energy+gradient evaluation per backend over a range of grid
resolutions and reports the speedup, plus a small end-to-end solver timing.

Usage: python benchmarks/bench_backends.py [--resolutions 10 20 30]
"""

import argparse
import time

import numpy as np

from cosplast.backends import HAVE_COMPILED, get_backend
from cosplast.energy import MaterialParams, PlasticHistory, energy_and_gradient
from cosplast.grid import FieldState, build_grid
from cosplast.optimizer import LbfgsConfig
from cosplast.solver import ScenarioSpec, run_simulation


def random_state(grid, rng):
    xyz = grid.coords()
    phi = xyz + 0.01 * rng.standard_normal(xyz.shape)
    rot = np.tile([1.0, 0.0, 0.0, 0.0], (grid.num_nodes, 1))
    rot += 0.01 * rng.standard_normal(rot.shape)
    gamma = 0.01 * rng.standard_normal(grid.num_nodes)
    return FieldState(phi=phi, rot=rot, gamma=gamma)


def time_eval(backend, state, hist, grid, p, repeats):
    energy_and_gradient(state, hist, grid, p, backend=backend)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        energy_and_gradient(state, hist, grid, p, backend=backend)
    return (time.perf_counter() - t0) / repeats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--resolutions", type=int, nargs="+", default=[10, 20, 30])
    ap.add_argument("--repeats", type=int, default=10)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    p = MaterialParams()
    numpy_backend = get_backend("numpy")
    compiled = get_backend("compiled") if HAVE_COMPILED else None

    print(f"{'grid':>10} {'numpy ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for d in args.resolutions:
        grid = build_grid((1.0, 1.0, 1.0), (d, d, d))
        state = random_state(grid, rng)
        hist = PlasticHistory.zeros(grid.num_nodes)
        t_np = time_eval(numpy_backend, state, hist, grid, p, args.repeats)
        if compiled is None:
            print(f"{d}^3      {1e3 * t_np:>10.2f} {'n/a':>12} {'n/a':>8}")
            continue
        t_c = time_eval(compiled, state, hist, grid, p, args.repeats)
        e_np = energy_and_gradient(state, hist, grid, p,
                                   backend=numpy_backend)[0]
        e_c = energy_and_gradient(state, hist, grid, p, backend=compiled)[0]
        assert abs(e_np - e_c) <= 1e-10 * max(1.0, abs(e_np)), (e_np, e_c)
        print(f"{str(d) + '^3':>10} {1e3 * t_np:>10.2f} {1e3 * t_c:>12.2f} "
              f"{t_np / t_c:>8.1f}x")

    print("\nend-to-end shear benchmark, 6^3, two steps:")
    import cosplast.backends as B
    for name in ("numpy", "compiled") if HAVE_COMPILED else ("numpy",):
        import os
        os.environ["COSPLAST_BACKEND"] = name
        spec = ScenarioSpec.benchmark("shear", d=(6, 6, 6), t_final=0.2,
                                      lbfgs=LbfgsConfig(eps0=1e-7))
        t0 = time.perf_counter()
        reports, *_ = run_simulation(spec)
        dt = time.perf_counter() - t0
        iters = sum(r.total_iters for r in reports)
        print(f"  {name:>8}: {dt:6.2f} s for {iters} iterations")
    os.environ.pop("COSPLAST_BACKEND", None)


if __name__ == "__main__":
    main()
