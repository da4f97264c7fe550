"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--nx 64] [--points 200000]

The first numba call (compilation, or loading the on-disk cache) is timed
separately and excluded from the steady-state numbers.
"""
import argparse
import time

import numpy as np

from ucfem import kernels
from ucfem._accel import HAVE_NUMBA
from ucfem.mesh import build_structured_mesh
from ucfem.space import lagrange_space


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(nx, n_points, seed=0):
    rng = np.random.default_rng(seed)
    mesh = build_structured_mesh(nx)
    V = lagrange_space(mesh, 2)
    px, py = rng.random(n_points), rng.random(n_points)
    cells, xi, eta = kernels.locate_points_np(px, py, 0.0, 0.0, 1.0 / nx, 1.0 / nx, nx, nx)
    vals = kernels.lagrange_values_np(2, xi, eta)
    w = np.full(n_points, 1.0 / n_points)
    local = rng.standard_normal((mesh.n_cells, 6, 6))
    # Gram restricted to a small block so the dense output stays modest
    block_dofs = np.where(V.cell_dofs < 400, V.cell_dofs, -1)
    return {
        "locate_points": (
            lambda: kernels.locate_points_np(px, py, 0.0, 0.0, 1.0 / nx, 1.0 / nx, nx, nx),
            lambda: kernels.locate_points_nb(px, py, 0.0, 0.0, 1.0 / nx, 1.0 / nx, nx, nx)),
        "lagrange_values": (
            lambda: kernels.lagrange_values_np(2, xi, eta),
            lambda: kernels.lagrange_values_nb(2, xi, eta)),
        "scatter_triplets": (
            lambda: kernels.scatter_triplets_np(V.cell_dofs, V.cell_dofs, local),
            lambda: kernels.scatter_triplets_nb(V.cell_dofs, V.cell_dofs, local)),
        "weighted_gram": (
            lambda: kernels.weighted_gram_np(cells, vals, block_dofs, w, 400),
            lambda: kernels.weighted_gram_nb(cells, vals, block_dofs, w, 400)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--nx", type=int, default=64)
    ap.add_argument("--points", type=int, default=200_000)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return 0
    print(f"{'kernel':<18}{'first nb [s]':>14}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, (f_np, f_nb) in cases(args.nx, args.points).items():
        t0 = time.perf_counter()
        f_nb()
        first = time.perf_counter() - t0
        t_np = _best(f_np, args.repeat)
        t_nb = _best(f_nb, args.repeat)
        print(f"{name:<18}{first:>14.4f}{t_np:>12.5f}{t_nb:>12.5f}{t_np / t_nb:>10.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
