"""Sparse assembly of the bilinear and linear forms of the stabilised method.

All matrices are ``scipy.sparse.csr_matrix``.  Forms on a space with
Dirichlet-masked nodes only carry rows/columns for the free DOFs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .observe import NoiseModel, ObservationSet
from .space import (FeFunction, FeSpace, cell_geometry, line_rule, ref_gradients,
                    ref_hessians, ref_values, sample_matrix, triangle_rule)


def _coo(row_dofs, col_dofs, local, shape):
    r, c, v = kernels.scatter_triplets(np.ascontiguousarray(row_dofs, dtype=np.int64),
                                       np.ascontiguousarray(col_dofs, dtype=np.int64),
                                       np.ascontiguousarray(local, dtype=float))
    m = sp.coo_matrix((v, (r, c)), shape=shape).tocsr()
    m.sum_duplicates()
    return m


def _cell_tables(space: FeSpace, degree=None):
    rule = triangle_rule(degree if degree is not None else 2 * space.degree + 2)
    geo = cell_geometry(space.mesh)
    ref = rule.ref_points
    phi = ref_values(space.degree, ref[:, 0], ref[:, 1])
    dphi = ref_gradients(space.degree, ref[:, 0], ref[:, 1])
    grads = np.einsum("cji,qkj->cqki", geo.inv_jac, dphi)
    wq = geo.det[:, None] * rule.weights[None, :]
    xq = geo.origin[:, None, :] + np.einsum("cij,qj->cqi", geo.jac, ref)
    return phi, grads, wq, xq


def _check_same_mesh(a: FeSpace, b: FeSpace):
    if a.mesh is not b.mesh:
        raise ValueError("spaces live on different meshes")


def assemble_mass(space: FeSpace, region=None) -> sp.csr_matrix:
    """``int phi_i phi_j`` over ``region`` (whole domain by default)."""
    phi, _, wq, _ = _cell_tables(space)
    cells = space.mesh.region_cells(region)
    local = np.einsum("cq,qa,qb->cab", wq[cells], phi, phi)
    n = space.dof_count
    return _coo(space.cell_dofs[cells], space.cell_dofs[cells], local, (n, n))


def assemble_stiffness(space: FeSpace) -> sp.csr_matrix:
    """``int grad(phi_i) . grad(phi_j)``."""
    _, grads, wq, _ = _cell_tables(space)
    local = np.einsum("cq,cqai,cqbi->cab", wq, grads, grads)
    n = space.dof_count
    return _coo(space.cell_dofs, space.cell_dofs, local, (n, n))


def assemble_weighted_h1(space: FeSpace, weight: float) -> sp.csr_matrix:
    """``weight**2 * (mass + stiffness)``, i.e. the Gram matrix of ``||weight * v||_{H^1}``."""
    if not weight > 0:
        raise ValueError("weight must be positive")
    return (weight ** 2) * (assemble_mass(space) + assemble_stiffness(space))


def _element_laplacians(space: FeSpace) -> np.ndarray:
    """Per-cell Laplacians of the local basis, shape ``(ncell, nloc)`` (constant for k <= 2)."""
    geo = cell_geometry(space.mesh)
    H = ref_hessians(space.degree)
    # physical Hessian J^{-T} H J^{-1}; trace of it
    phys = np.einsum("cji,kjl,clm->ckim", geo.inv_jac, H, geo.inv_jac)
    return np.einsum("ckii->ck", phys)


def assemble_element_laplacian_product(space: FeSpace, weight: float) -> sp.csr_matrix:
    """``sum_K weight**2 int_K lap(phi_i) lap(phi_j)`` with the element-wise Laplacian."""
    lap = _element_laplacians(space)
    area = cell_geometry(space.mesh).det * 0.5
    local = (weight ** 2) * area[:, None, None] * lap[:, :, None] * lap[:, None, :]
    n = space.dof_count
    return _coo(space.cell_dofs, space.cell_dofs, local, (n, n))


def assemble_laplacian_source(space_v: FeSpace, space_w: FeSpace) -> sp.csr_matrix:
    """``L[i, j] = sum_K int_K lap(phi^V_i) phi^W_j``, shape ``(nV, nW)``."""
    _check_same_mesh(space_v, space_w)
    lap = _element_laplacians(space_v)
    phi_w, _, wq, _ = _cell_tables(space_w, 2 * space_v.degree + 2)
    local = np.einsum("ca,cq,qb->cab", lap, wq, phi_w)
    return _coo(space_v.cell_dofs, space_w.cell_dofs, local, (space_v.dof_count, space_w.dof_count))


def assemble_coupling(space_v: FeSpace, space_w: FeSpace) -> sp.csr_matrix:
    """``C[i, j] = a(phi^V_j, phi^W_i)``, shape ``(nW, nV)``."""
    _check_same_mesh(space_v, space_w)
    deg = 2 * max(space_v.degree, space_w.degree) + 2
    _, gv, wq, _ = _cell_tables(space_v, deg)
    _, gw, _, _ = _cell_tables(space_w, deg)
    local = np.einsum("cq,cqai,cqbi->cab", wq, gw, gv)
    return _coo(space_w.cell_dofs, space_v.cell_dofs, local, (space_w.dof_count, space_v.dof_count))


def _facet_side_gradients(space: FeSpace, facet_ids, side: int, n_quad: int):
    """Physical gradients of the local basis of ``facet_cells[:, side]`` at facet quadrature points."""
    mesh = space.mesh
    geo = cell_geometry(mesh)
    s, w = line_rule(n_quad)
    p = mesh.vertices[mesh.facets[facet_ids]]                        # (f, 2, 2)
    xq = p[:, 0][:, None, :] + s[None, :, None] * (p[:, 1] - p[:, 0])[:, None, :]
    cells = mesh.facet_cells[facet_ids, side]
    ref = np.einsum("fij,fqj->fqi", geo.inv_jac[cells], xq - geo.origin[cells][:, None, :])
    nf, nq = ref.shape[:2]
    g = ref_gradients(space.degree, ref[..., 0].ravel(), ref[..., 1].ravel())
    g = g.reshape(nf, nq, space.n_local, 2)
    g = np.einsum("fji,fqkj->fqki", geo.inv_jac[cells], g)
    return g, w, cells


def assemble_jump(space: FeSpace, h: float | None = None) -> sp.csr_matrix:
    """Gradient-jump stabiliser ``sum_F int_F h [grad u.n][grad v.n] dS`` over interior facets.

    ``h`` defaults to the global mesh parameter.
    """
    mesh = space.mesh
    h = mesh.h if h is None else h
    ids = mesh.interior_facet_ids
    n = space.dof_count
    if ids.size == 0:
        return sp.csr_matrix((n, n))
    nq = space.degree + 1
    nrm = mesh.facet_normals()[ids]
    length = mesh.facet_lengths()[ids]
    gl, w, cl = _facet_side_gradients(space, ids, 0, nq)
    gr, _, cr = _facet_side_gradients(space, ids, 1, nq)
    jl = np.einsum("fqki,fi->fqk", gl, nrm)
    jr = -np.einsum("fqki,fi->fqk", gr, nrm)
    jv = np.concatenate([jl, jr], axis=2)                            # (f, q, 2k)
    local = h * np.einsum("f,q,fqa,fqb->fab", length, w, jv, jv)
    dofs = np.hstack([space.cell_dofs[cl], space.cell_dofs[cr]])
    return _coo(dofs, dofs, local, (n, n))


def assemble_boundary_flux(space: FeSpace, h: float | None = None) -> sp.csr_matrix:
    """``sum_{F in dOmega} int_F h (grad u.n)(grad v.n) dS``."""
    mesh = space.mesh
    h = mesh.h if h is None else h
    ids = mesh.boundary_facet_ids
    n = space.dof_count
    nq = space.degree + 1
    nrm = mesh.facet_normals()[ids]
    length = mesh.facet_lengths()[ids]
    g, w, cells = _facet_side_gradients(space, ids, 0, nq)
    bv = np.einsum("fqki,fi->fqk", g, nrm)
    local = h * np.einsum("f,q,fqa,fqb->fab", length, w, bv, bv)
    dofs = space.cell_dofs[cells]
    return _coo(dofs, dofs, local, (n, n))


def assemble_wh_inner(space_w: FeSpace, h: float | None = None) -> sp.csr_matrix:
    """Gram matrix of ``||w||_{W_h}^2 = J_h(w,w) + int_dOmega h|grad w.n|^2 + ||h w||_{H^1}^2``."""
    if not space_w.dirichlet:
        raise ValueError("W_h inner product needs the zero-trace space")
    h = space_w.mesh.h if h is None else h
    return (assemble_jump(space_w, h) + assemble_boundary_flux(space_w, h)
            + assemble_weighted_h1(space_w, h)).tocsr()


def assemble_vh_inner(space_v: FeSpace, alpha: float, h: float | None = None) -> sp.csr_matrix:
    """Gram matrix of ``||v||_{V_h}^2 = J_h(v,v) + ||h^(alpha-1) v||_{H^1}^2``."""
    h = space_v.mesh.h if h is None else h
    return (assemble_jump(space_v, h) + assemble_weighted_h1(space_v, h ** (alpha - 1.0))).tocsr()


def assemble_sh(space_v: FeSpace, alpha: float, h: float | None = None) -> sp.csr_matrix:
    """Matrix of ``s_h(u, v) = <u, v>_{V_h} + sum_K <h lap u, h lap v>_K``."""
    h = space_v.mesh.h if h is None else h
    return (assemble_vh_inner(space_v, alpha, h)
            + assemble_element_laplacian_product(space_v, h)).tocsr()


def assemble_load(space: FeSpace, f) -> np.ndarray:
    """``(int f phi_i)_i`` for a pointwise field ``f``; ``None`` means zero."""
    n = space.dof_count
    if f is None:
        return np.zeros(n)
    phi, _, wq, xq = _cell_tables(space)
    fv = np.broadcast_to(np.asarray(f(xq[..., 0], xq[..., 1]), dtype=float), wq.shape)
    local = np.einsum("cq,cq,qa->ca", wq, fv, phi)
    dofs = space.cell_dofs.ravel()
    keep = dofs >= 0
    return np.bincount(dofs[keep], weights=local.ravel()[keep], minlength=n)


def project_source(space_w: FeSpace, f) -> FeFunction:
    """L2 projection ``f_h`` with ``<f_h, w>_{L2} = f(w)`` for all ``w`` in the space."""
    import scipy.sparse.linalg as spla

    rhs = assemble_load(space_w, f)
    if not np.any(rhs):
        return FeFunction(space_w, np.zeros(space_w.dof_count))
    M = assemble_mass(space_w).tocsc()
    return FeFunction(space_w, spla.spsolve(M, rhs))


# ---------------------------------------------------------------------------
# data misfit
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DataTerm:
    """Sample matrix ``Phi`` and the misfit weight ``shape^{-1}`` of the noise model."""

    phi: sp.csr_matrix
    noise: NoiseModel
    y: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.phi.shape[0]

    @property
    def sigma(self) -> float:
        return self.noise.sigma

    def gram(self):
        """``Phi^T shape^{-1} Phi`` (sparse unless the noise shape is dense)."""
        if self.noise.kind == "identity":
            return (self.phi.T @ self.phi).tocsr()
        if self.noise.kind == "diagonal":
            return (self.phi.T @ sp.diags(1.0 / self.noise.shape) @ self.phi).tocsr()
        dense = self.phi.toarray()
        return sp.csr_matrix(dense.T @ np.linalg.solve(self.noise.shape, dense))

    def rhs(self, y) -> np.ndarray:
        return self.phi.T @ self.noise.apply_inverse_shape(np.asarray(y, dtype=float))

    def quadratic(self, coeffs) -> float:
        """``(1/N) ||v(X_N)||^2_{shape^{-1}}``."""
        if self.n_samples == 0:
            return 0.0
        v = self.phi @ np.asarray(coeffs, dtype=float)
        return float(v @ self.noise.apply_inverse_shape(v)) / self.n_samples


def assemble_data_term(space: FeSpace, observations: ObservationSet) -> DataTerm:
    mesh = space.mesh
    locs = observations.locations
    if mesh.omega is not None and locs.shape[0] and not np.all(mesh.omega.contains(locs[:, 0], locs[:, 1])):
        raise ValueError("observation locations must lie in omega")
    return DataTerm(sample_matrix(space, locs), observations.noise, observations.values.copy())


def write_coo(path, matrix) -> None:
    """Dump ``row col value`` lines (0-based) for offline inspection."""
    m = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        fh.write(f"% {m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for r, c, v in zip(m.row, m.col, m.data):
            fh.write(f"{r} {c} {float(v)!r}\n")


def read_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        nr, nc = int(header[1]), int(header[2])
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix((nr, nc))
    return sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=(nr, nc)).tocsr()
