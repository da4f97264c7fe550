"""Lagrange P1/P2 spaces on a :class:`~ucfem.mesh.Mesh`, quadrature and pointwise evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .mesh import Mesh


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle ``(0,0), (1,0), (0,1)``.

    ``points`` are barycentric ``(l0, l1, l2)``; ``weights`` sum to 1/2.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def ref_points(self) -> np.ndarray:
        """Reference coordinates ``(xi, eta) = (l1, l2)``."""
        return self.points[:, 1:]


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Collapsed (Duffy) Gauss-Legendre rule exact for total degree ``degree``.

    With ``n`` points per direction the collapsed integrand has degree
    ``degree + 1`` in the collapsed variable, so ``n = ceil((degree+2)/2)``.
    """
    n = max(1, int(np.ceil((degree + 2) / 2)))
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    U, V = np.meshgrid(g, g, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    xi = U.ravel()
    eta = ((1.0 - U) * V).ravel()
    weights = (WU * WV * (1.0 - U)).ravel()
    pts = np.column_stack([1.0 - xi - eta, xi, eta])
    return QuadratureRule(points=pts, weights=weights, degree=degree)


@lru_cache(maxsize=None)
def line_rule(n: int):
    """Gauss-Legendre points on ``[0, 1]`` with weights summing to 1."""
    g, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (g + 1.0), 0.5 * w


# ---------------------------------------------------------------------------
# reference shape functions
# ---------------------------------------------------------------------------

_DL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
_P2_EDGES = ((0, 1), (1, 2), (2, 0))


def n_local(degree: int) -> int:
    return 3 if degree == 1 else 6


def ref_values(degree, xi, eta) -> np.ndarray:
    return kernels.lagrange_values_np(degree, xi, eta)


def ref_gradients(degree, xi, eta) -> np.ndarray:
    """Reference gradients, shape ``(npts, nloc, 2)``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    lam = np.stack([1.0 - xi - eta, xi, eta], axis=-1)
    if degree == 1:
        return np.broadcast_to(_DL, (xi.shape[0], 3, 2)).copy()
    out = np.empty((xi.shape[0], 6, 2))
    for i in range(3):
        out[:, i, :] = (4.0 * lam[:, i] - 1.0)[:, None] * _DL[i]
    for e, (a, b) in enumerate(_P2_EDGES):
        out[:, 3 + e, :] = 4.0 * (lam[:, b][:, None] * _DL[a] + lam[:, a][:, None] * _DL[b])
    return out


def ref_hessians(degree) -> np.ndarray:
    """Constant reference Hessians, shape ``(nloc, 2, 2)``."""
    if degree == 1:
        return np.zeros((3, 2, 2))
    out = np.empty((6, 2, 2))
    for i in range(3):
        out[i] = 4.0 * np.outer(_DL[i], _DL[i])
    for e, (a, b) in enumerate(_P2_EDGES):
        out[3 + e] = 4.0 * (np.outer(_DL[a], _DL[b]) + np.outer(_DL[b], _DL[a]))
    return out


def ref_nodes(degree) -> np.ndarray:
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    if degree == 1:
        return verts
    mids = np.array([0.5 * (verts[a] + verts[b]) for a, b in _P2_EDGES])
    return np.vstack([verts, mids])


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CellGeometry:
    origin: np.ndarray      # (ncell, 2) first vertex
    jac: np.ndarray         # (ncell, 2, 2) columns v1-v0, v2-v0
    inv_jac: np.ndarray     # (ncell, 2, 2)
    det: np.ndarray         # (ncell,) positive

    def to_physical(self, cells, ref):
        return self.origin[cells] + np.einsum("cij,cj->ci", self.jac[cells], ref)

    def to_reference(self, cells, x):
        return np.einsum("cij,cj->ci", self.inv_jac[cells], x - self.origin[cells])


def cell_geometry(mesh: Mesh) -> CellGeometry:
    if "geometry" not in mesh._cache:
        p = mesh.vertices[mesh.cells]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        det = np.linalg.det(jac)
        if np.any(det <= 0):
            raise ValueError("mesh contains non-positively oriented cells")
        mesh._cache["geometry"] = CellGeometry(p[:, 0].copy(), jac, np.linalg.inv(jac), det)
    return mesh._cache["geometry"]


# ---------------------------------------------------------------------------
# spaces and functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeSpace:
    """Continuous Lagrange space of degree 1 or 2.

    With ``dirichlet=True`` the nodes on the domain boundary are removed
    (``W_h``): they get ``node_to_dof == -1`` and ``cell_dofs`` carries -1
    in their slots.
    """

    mesh: Mesh
    degree: int
    dirichlet: bool
    node_coords: np.ndarray
    cell_nodes: np.ndarray
    dirichlet_mask: np.ndarray
    node_to_dof: np.ndarray
    cell_dofs: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dof_count(self) -> int:
        return int(np.count_nonzero(self.node_to_dof >= 0))

    @property
    def dof_coords(self) -> np.ndarray:
        return self.node_coords[self.node_to_dof >= 0]

    @property
    def n_local(self) -> int:
        return n_local(self.degree)

    @property
    def omega_dof_set(self) -> np.ndarray:
        """DOFs whose basis function does not vanish on omega."""
        cells = self.mesh.region_cells("omega")
        d = np.unique(self.cell_dofs[cells])
        return d[d >= 0]

    def region_dofs(self, region) -> np.ndarray:
        d = np.unique(self.cell_dofs[self.mesh.region_cells(region)])
        return d[d >= 0]

    def same_mesh(self, other: "FeSpace") -> bool:
        return self.mesh is other.mesh

    def function(self, coeffs=None) -> "FeFunction":
        if coeffs is None:
            coeffs = np.zeros(self.dof_count)
        return FeFunction(self, coeffs)


def lagrange_space(mesh: Mesh, degree: int = 1, dirichlet: bool = False) -> FeSpace:
    """Build ``V_h^k`` (``dirichlet=False``) or ``V_h^k`` with zero trace (``dirichlet=True``)."""
    if degree not in (1, 2):
        raise ValueError(f"degree must be 1 or 2, got {degree}")
    nv = mesh.n_vertices
    if degree == 1:
        coords = mesh.vertices.copy()
        cell_nodes = mesh.cells.copy()
    else:
        mids = mesh.vertices[mesh.facets].mean(axis=1)
        coords = np.vstack([mesh.vertices, mids])
        cell_nodes = np.hstack([mesh.cells, nv + mesh.cell_facets])
    d = mesh.domain
    tol = 1e-12 * max(1.0, abs(d.x1 - d.x0), abs(d.y1 - d.y0))
    on_boundary = ((np.abs(coords[:, 0] - d.x0) < tol) | (np.abs(coords[:, 0] - d.x1) < tol)
                   | (np.abs(coords[:, 1] - d.y0) < tol) | (np.abs(coords[:, 1] - d.y1) < tol))
    mask = on_boundary if dirichlet else np.zeros(coords.shape[0], dtype=bool)
    node_to_dof = np.full(coords.shape[0], -1, dtype=np.int64)
    node_to_dof[~mask] = np.arange(np.count_nonzero(~mask))
    return FeSpace(mesh=mesh, degree=degree, dirichlet=dirichlet, node_coords=coords,
                   cell_nodes=cell_nodes, dirichlet_mask=mask, node_to_dof=node_to_dof,
                   cell_dofs=node_to_dof[cell_nodes])


@dataclass(eq=False)
class FeFunction:
    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.dof_count,):
            raise ValueError(f"expected {self.space.dof_count} coefficients, got {self.coeffs.shape}")

    def __call__(self, points):
        return evaluate(self, points)

    def local_coeffs(self) -> np.ndarray:
        """Per-cell local coefficient table, zeros in constrained slots."""
        full = np.concatenate([self.coeffs, [0.0]])
        return full[self.space.cell_dofs]  # -1 picks the appended zero


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, 2)
    return pts


def nodal_interpolate(space: FeSpace, f) -> FeFunction:
    """Lagrange interpolant of a pointwise field ``f(x, y)``."""
    xy = space.dof_coords
    vals = np.asarray(f(xy[:, 0], xy[:, 1]), dtype=float)
    vals = np.broadcast_to(vals, (xy.shape[0],)).copy()
    if not np.all(np.isfinite(vals)):
        raise ValueError("field is not finite at every interpolation node")
    return FeFunction(space, vals)


def locate(mesh: Mesh, points):
    """Cell index and reference coordinates of each point; raises outside the domain."""
    pts = np.ascontiguousarray(_as_points(points))
    d = mesh.domain
    cells, xi, eta = kernels.locate_points(
        np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]),
        d.x0, d.y0, mesh.dx, mesh.dy, mesh.nx, mesh.ny)
    if np.any(cells < 0):
        bad = pts[np.flatnonzero(cells < 0)[0]]
        raise ValueError(f"point {tuple(bad)} lies outside the domain")
    return cells, xi, eta


def evaluate(fn: FeFunction, points) -> np.ndarray:
    space = fn.space
    cells, xi, eta = locate(space.mesh, points)
    phi = kernels.lagrange_values(space.degree, xi, eta)
    return np.einsum("pk,pk->p", phi, fn.local_coeffs()[cells])


def evaluate_gradient(fn: FeFunction, points, cells=None) -> np.ndarray:
    """Gradient at ``points``; ``cells`` selects the side on shared facets."""
    space = fn.space
    pts = _as_points(points)
    geo = cell_geometry(space.mesh)
    if cells is None:
        cells, xi, eta = locate(space.mesh, pts)
    else:
        cells = np.asarray(cells, dtype=np.int64)
        ref = geo.to_reference(cells, pts)
        xi, eta = ref[:, 0], ref[:, 1]
    g = ref_gradients(space.degree, xi, eta)
    g = np.einsum("pji,pkj->pki", geo.inv_jac[cells], g)
    return np.einsum("pki,pk->pi", g, fn.local_coeffs()[cells])


def sample_matrix(space: FeSpace, points):
    """Sparse ``Phi[i, j] = phi_j(points[i])`` in CSR format."""
    import scipy.sparse as sp

    pts = _as_points(points)
    n = pts.shape[0]
    if n == 0:
        return sp.csr_matrix((0, space.dof_count))
    cells, xi, eta = locate(space.mesh, pts)
    phi = kernels.lagrange_values(space.degree, xi, eta)
    rows = np.repeat(np.arange(n), space.n_local)
    cols = space.cell_dofs[cells].ravel()
    vals = phi.ravel()
    keep = cols >= 0
    return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, space.dof_count))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def _quadrature_tables(space: FeSpace, cells, rule: QuadratureRule):
    geo = cell_geometry(space.mesh)
    ref = rule.ref_points
    phi = ref_values(space.degree, ref[:, 0], ref[:, 1])              # (q, k)
    dphi = ref_gradients(space.degree, ref[:, 0], ref[:, 1])          # (q, k, 2)
    grads = np.einsum("cji,qkj->cqki", geo.inv_jac[cells], dphi)     # (c, q, k, 2)
    xq = geo.origin[cells][:, None, :] + np.einsum("cij,qj->cqi", geo.jac[cells], ref)
    wq = geo.det[cells][:, None] * rule.weights[None, :]
    return phi, grads, xq, wq


def h1_l2_seminorms(fn: FeFunction, tag_filter=None):
    """``(||u||_L2, |u|_H1)`` over the cells of ``tag_filter`` (whole domain if ``None``)."""
    l2, h1 = error_norms(fn, None, None, tag_filter)
    return l2, h1


def error_norms(fn: FeFunction, exact=None, exact_grad=None, region=None, quad_degree=None):
    """L2 norm and H1 seminorm of ``fn - exact`` over ``region``.

    ``exact(x, y)`` and ``exact_grad(x, y) -> (gx, gy)`` default to zero.
    """
    space = fn.space
    cells = space.mesh.region_cells(region)
    if cells.size == 0:
        return 0.0, 0.0
    rule = triangle_rule(quad_degree if quad_degree is not None else 2 * space.degree + 2)
    phi, grads, xq, wq = _quadrature_tables(space, cells, rule)
    loc = fn.local_coeffs()[cells]                                     # (c, k)
    val = loc @ phi.T                                                  # (c, q)
    grad = np.einsum("cqki,ck->cqi", grads, loc)
    if exact is not None:
        val = val - np.asarray(exact(xq[..., 0], xq[..., 1]), dtype=float)
    if exact_grad is not None:
        gx, gy = exact_grad(xq[..., 0], xq[..., 1])
        grad = grad - np.stack([np.broadcast_to(gx, val.shape), np.broadcast_to(gy, val.shape)], axis=-1)
    l2 = float(np.sqrt(max(np.sum(wq * val ** 2), 0.0)))
    h1 = float(np.sqrt(max(np.sum(wq * np.sum(grad ** 2, axis=-1)), 0.0)))
    return l2, h1


def field_norms(mesh: Mesh, u, grad=None, region=None, quad_degree=8):
    """L2 norm and H1 seminorm of an analytic field over ``region`` by quadrature."""
    cells = mesh.region_cells(region)
    geo = cell_geometry(mesh)
    rule = triangle_rule(quad_degree)
    xq = geo.origin[cells][:, None, :] + np.einsum("cij,qj->cqi", geo.jac[cells], rule.ref_points)
    wq = geo.det[cells][:, None] * rule.weights[None, :]
    v = np.asarray(u(xq[..., 0], xq[..., 1]), dtype=float)
    l2 = float(np.sqrt(np.sum(wq * v ** 2)))
    if grad is None:
        return l2, float("nan")
    gx, gy = grad(xq[..., 0], xq[..., 1])
    h1 = float(np.sqrt(np.sum(wq * (np.asarray(gx) ** 2 + np.asarray(gy) ** 2))))
    return l2, h1


def quadrature_points(mesh: Mesh, region=None, quad_degree=4):
    """Physical quadrature points and weights over ``region`` (flattened)."""
    cells = mesh.region_cells(region)
    geo = cell_geometry(mesh)
    rule = triangle_rule(quad_degree)
    xq = geo.origin[cells][:, None, :] + np.einsum("cij,qj->cqi", geo.jac[cells], rule.ref_points)
    wq = geo.det[cells][:, None] * rule.weights[None, :]
    return xq.reshape(-1, 2), wq.ravel()
