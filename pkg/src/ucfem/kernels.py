"""Hot inner loops, each in a numba flavour (``*_nb``) and a numpy flavour (``*_np``).

The public names (``locate_points``, ``lagrange_values``, ``scatter_triplets``,
``weighted_gram``) are bound at import time according to
:data:`ucfem._accel.USE_NUMBA`.  Both flavours are always importable so the
test-suite and ``benchmarks/bench_kernels.py`` can compare them directly.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


# ---------------------------------------------------------------------------
# point location on the structured crossed-diagonal grid
# ---------------------------------------------------------------------------
# Cell 2*(j*nx + i) is the lower triangle (v_ij, v_i+1j, v_i+1j+1) of grid
# square (i, j), cell 2*(j*nx + i) + 1 the upper one (v_ij, v_i+1j+1, v_ij+1).

def locate_points_np(px, py, x0, y0, dx, dy, nx, ny, tol=1e-12):
    s = (np.asarray(px, dtype=float) - x0) / dx
    t = (np.asarray(py, dtype=float) - y0) / dy
    outside = (s < -tol) | (s > nx + tol) | (t < -tol) | (t > ny + tol)
    i = np.clip(np.floor(s).astype(np.int64), 0, nx - 1)
    j = np.clip(np.floor(t).astype(np.int64), 0, ny - 1)
    ls = np.clip(s - i, 0.0, 1.0)
    lt = np.clip(t - j, 0.0, 1.0)
    upper = lt > ls
    cells = 2 * (j * nx + i) + upper.astype(np.int64)
    xi = np.where(upper, ls, ls - lt)
    eta = np.where(upper, lt - ls, lt)
    cells[outside] = -1
    return cells, xi, eta


@njit(cache=True)
def locate_points_nb(px, py, x0, y0, dx, dy, nx, ny, tol=1e-12):
    n = px.shape[0]
    cells = np.empty(n, dtype=np.int64)
    xi = np.empty(n)
    eta = np.empty(n)
    for k in range(n):
        s = (px[k] - x0) / dx
        t = (py[k] - y0) / dy
        if s < -tol or s > nx + tol or t < -tol or t > ny + tol:
            cells[k] = -1
            xi[k] = 0.0
            eta[k] = 0.0
            continue
        i = min(max(int(np.floor(s)), 0), nx - 1)
        j = min(max(int(np.floor(t)), 0), ny - 1)
        ls = min(max(s - i, 0.0), 1.0)
        lt = min(max(t - j, 0.0), 1.0)
        if lt > ls:
            cells[k] = 2 * (j * nx + i) + 1
            xi[k] = ls
            eta[k] = lt - ls
        else:
            cells[k] = 2 * (j * nx + i)
            xi[k] = ls - lt
            eta[k] = lt
    return cells, xi, eta


# ---------------------------------------------------------------------------
# Lagrange P1/P2 shape functions on the reference triangle
# ---------------------------------------------------------------------------
# Local order: vertices 0,1,2 then midpoints of edges (0,1), (1,2), (2,0).

def lagrange_values_np(degree, xi, eta):
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    l0 = 1.0 - xi - eta
    if degree == 1:
        return np.stack([l0, xi, eta], axis=-1)
    return np.stack([
        l0 * (2.0 * l0 - 1.0),
        xi * (2.0 * xi - 1.0),
        eta * (2.0 * eta - 1.0),
        4.0 * l0 * xi,
        4.0 * xi * eta,
        4.0 * eta * l0,
    ], axis=-1)


@njit(cache=True)
def lagrange_values_nb(degree, xi, eta):
    n = xi.shape[0]
    nloc = 3 if degree == 1 else 6
    out = np.empty((n, nloc))
    for k in range(n):
        a = xi[k]
        b = eta[k]
        c = 1.0 - a - b
        if degree == 1:
            out[k, 0] = c
            out[k, 1] = a
            out[k, 2] = b
        else:
            out[k, 0] = c * (2.0 * c - 1.0)
            out[k, 1] = a * (2.0 * a - 1.0)
            out[k, 2] = b * (2.0 * b - 1.0)
            out[k, 3] = 4.0 * c * a
            out[k, 4] = 4.0 * a * b
            out[k, 5] = 4.0 * b * c
    return out


# ---------------------------------------------------------------------------
# COO scatter of local element/facet matrices
# ---------------------------------------------------------------------------

def scatter_triplets_np(row_dofs, col_dofs, local):
    nr = row_dofs.shape[1]
    nc = col_dofs.shape[1]
    rows = np.broadcast_to(row_dofs[:, :, None], (row_dofs.shape[0], nr, nc))
    cols = np.broadcast_to(col_dofs[:, None, :], (col_dofs.shape[0], nr, nc))
    keep = (rows >= 0) & (cols >= 0)
    return rows[keep], cols[keep], np.asarray(local)[keep]


@njit(cache=True)
def scatter_triplets_nb(row_dofs, col_dofs, local):
    ne, nr = row_dofs.shape
    nc = col_dofs.shape[1]
    count = 0
    for e in range(ne):
        for a in range(nr):
            if row_dofs[e, a] < 0:
                continue
            for b in range(nc):
                if col_dofs[e, b] >= 0:
                    count += 1
    rows = np.empty(count, dtype=np.int64)
    cols = np.empty(count, dtype=np.int64)
    vals = np.empty(count)
    k = 0
    for e in range(ne):
        for a in range(nr):
            ra = row_dofs[e, a]
            if ra < 0:
                continue
            for b in range(nc):
                cb = col_dofs[e, b]
                if cb >= 0:
                    rows[k] = ra
                    cols[k] = cb
                    vals[k] = local[e, a, b]
                    k += 1
    return rows, cols, vals


# ---------------------------------------------------------------------------
# dense weighted Gram sum_k w_k phi(X_k) phi(X_k)^T from per-point local values
# ---------------------------------------------------------------------------

def weighted_gram_np(cells, values, cell_dofs, weights, n):
    # local outer products, then one scatter-add into the dense result
    dofs = cell_dofs[cells]                                   # (npts, nloc)
    wv = values * weights[:, None]
    local = wv[:, :, None] * values[:, None, :]               # (npts, nloc, nloc)
    ra = np.broadcast_to(dofs[:, :, None], local.shape)
    cb = np.broadcast_to(dofs[:, None, :], local.shape)
    keep = (ra >= 0) & (cb >= 0)
    flat = ra[keep] * n + cb[keep]
    return np.bincount(flat, weights=local[keep], minlength=n * n).reshape(n, n)


@njit(cache=True)
def weighted_gram_nb(cells, values, cell_dofs, weights, n):
    out = np.zeros((n, n))
    npts, nloc = values.shape
    for k in range(npts):
        c = cells[k]
        w = weights[k]
        for a in range(nloc):
            da = cell_dofs[c, a]
            if da < 0:
                continue
            va = w * values[k, a]
            for b in range(nloc):
                db = cell_dofs[c, b]
                if db >= 0:
                    out[da, db] += va * values[k, b]
    return out


if USE_NUMBA:
    locate_points = locate_points_nb
    lagrange_values = lagrange_values_nb
    scatter_triplets = scatter_triplets_nb
    weighted_gram = weighted_gram_nb
else:
    locate_points = locate_points_np
    lagrange_values = lagrange_values_np
    scatter_triplets = scatter_triplets_np
    weighted_gram = weighted_gram_np
