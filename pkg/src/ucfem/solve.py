"""Mixed saddle-point MAP solve, posterior covariance quantities and exact posterior draws.

Unknowns are ``(u, z)`` with ``u`` in ``V_h`` and ``z`` in ``W_h`` the Riesz
representative of ``-lap(u) - f`` in the ``W_h`` inner product.  The block
system is kept symmetric quasi-definite by working with ``h**beta * z``::

    [ U            h^b C^T ] [ u       ]   [ rhs_u     ]
    [ h^b C        -M_W    ] [ h^b z   ] = [ h^b F     ]

with ``U = W/N + h^{2b} S``, ``W = Phi^T shape^{-1} Phi``, ``S`` the
matrix of ``s_h``, ``C`` the Dirichlet form between ``V_h`` and ``W_h``,
``M_W`` the ``W_h`` Gram matrix and ``F = (f(w_i))``.

Eliminating ``z`` gives the normal-equation matrix ``W/N + K`` with
``K = h^{2b} (S + C^T M_W^{-1} C)``.  The posterior on ``V_h`` is Gaussian
with precision ``P = (N / sigma^2) (W/N + K)``: the log-density is
``-(N / sigma^2)`` times the quadratic cost, the prior carrying the
``N / (2 sigma^2)`` scaling and the likelihood ``1 / (2 sigma^2)``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import forms
from .observe import derive_seed, sample_locations
from .space import FeFunction, FeSpace, lagrange_space, locate, quadrature_points
from . import kernels
from .mesh import Rect


class SolverError(RuntimeError):
    """The saddle-point solve could not be verified to tolerance."""


RESIDUAL_RTOL = 1e-10


@dataclass(eq=False)
class AssembledSystem:
    space_v: FeSpace
    space_w: FeSpace
    data: forms.DataTerm
    alpha: float
    beta: int
    h: float
    u_block: sp.csr_matrix
    coupling: sp.csr_matrix        # h^beta C, shape (nW, nV)
    z_block: sp.csr_matrix         # -M_W
    rhs_u: np.ndarray
    rhs_z: np.ndarray              # h^beta F
    parts: dict = field(default_factory=dict, repr=False)
    _lu: object = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.data.n_samples

    @property
    def n_v(self) -> int:
        return self.space_v.dof_count

    @property
    def n_w(self) -> int:
        return self.space_w.dof_count

    @property
    def sigma(self) -> float:
        return self.data.sigma

    def matrix(self) -> sp.csc_matrix:
        return sp.bmat([[self.u_block, self.coupling.T],
                        [self.coupling, self.z_block]], format="csc")

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_u, self.rhs_z])

    def factor(self):
        if self._lu is None:
            self._lu = spla.splu(self.matrix(), permc_spec="COLAMD")
        return self._lu

    def with_values(self, y) -> "AssembledSystem":
        """Same design and operators, new observed values ``y``; reuses the factorisation."""
        y = np.asarray(y, dtype=float)
        data = replace(self.data, y=y)
        rhs_u = self.rhs_u - self.parts["data_rhs"] + _data_rhs(data)
        new = replace(self, data=data, rhs_u=rhs_u, parts=dict(self.parts))
        new.parts["data_rhs"] = _data_rhs(data)
        new._lu = self._lu
        return new


@dataclass(eq=False)
class MapSolution:
    u: FeFunction
    z: FeFunction
    residual_norm: float
    wall_time: float


def _data_rhs(data: forms.DataTerm) -> np.ndarray:
    n = data.phi.shape[1]
    if data.n_samples == 0 or data.y is None:
        return np.zeros(n)
    return data.rhs(data.y) / data.n_samples


def build_system(space_v: FeSpace, space_w: FeSpace, data: forms.DataTerm, f=None,
                 alpha: float = 2.0, beta: int = 1) -> AssembledSystem:
    """Assemble the mixed system for prior ``pi_0`` (``beta=1``) or ``pi_1`` (``beta=0``).

    ``f`` is the source as a pointwise field, or ``None`` for ``f = 0``.
    """
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    if beta not in (0, 1):
        raise ValueError("beta must be 0 or 1")
    if space_v.mesh is not space_w.mesh:
        raise ValueError("V_h and W_h must share a mesh")
    if space_v.dirichlet or not space_w.dirichlet or space_w.degree != 1:
        raise ValueError("expected unconstrained V_h and the zero-trace P1 space W_h")
    if data.phi.shape[1] != space_v.dof_count:
        raise ValueError("data term was assembled on a different space")
    h = space_v.mesh.h
    hb = h ** beta
    N = data.n_samples

    S = forms.assemble_sh(space_v, alpha, h)
    C = forms.assemble_coupling(space_v, space_w)
    M_W = forms.assemble_wh_inner(space_w, h)
    F = forms.assemble_load(space_w, f)
    f_h = forms.project_source(space_w, f)
    L_vw = forms.assemble_laplacian_source(space_v, space_w)

    u_block = (h ** (2 * beta)) * S
    if N > 0:
        u_block = u_block + data.gram() / N
    data_rhs = _data_rhs(data)
    elem_rhs = -(h ** (2 + 2 * beta)) * (L_vw @ f_h.coeffs)
    parts = dict(S=S, C=C, M_W=M_W, F=F, f_h=f_h, L_vw=L_vw,
                 data_rhs=data_rhs, elem_rhs=elem_rhs, f=f)
    return AssembledSystem(space_v=space_v, space_w=space_w, data=data, alpha=alpha, beta=beta,
                           h=h, u_block=sp.csr_matrix(u_block), coupling=(hb * C).tocsr(),
                           z_block=(-M_W).tocsr(), rhs_u=data_rhs + elem_rhs, rhs_z=hb * F,
                           parts=parts)


def solve_map(system: AssembledSystem, max_refine: int = 3) -> MapSolution:
    """Direct sparse LU solve of the block system with iterative refinement.

    Raises :class:`SolverError` if the relative residual stays above 1e-10.
    """
    t0 = time.perf_counter()
    A = system.matrix()
    b = system.rhs()
    nv = system.n_v
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x = np.zeros_like(b)
        res = 0.0
    else:
        lu = system.factor()
        x = lu.solve(b)
        res = np.linalg.norm(b - A @ x) / bnorm
        for _ in range(max_refine):
            if res <= RESIDUAL_RTOL * 0.1:
                break
            x = x + lu.solve(b - A @ x)
            res = np.linalg.norm(b - A @ x) / bnorm
        if not np.all(np.isfinite(x)) or res > RESIDUAL_RTOL:
            raise SolverError(f"saddle-point residual {res:.3e} exceeds {RESIDUAL_RTOL:g}")
    hb = system.h ** system.beta
    u = FeFunction(system.space_v, x[:nv])
    z = FeFunction(system.space_w, x[nv:] / hb)
    return MapSolution(u=u, z=z, residual_norm=float(res), wall_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# norms and functionals
# ---------------------------------------------------------------------------

def _mw_solve(system: AssembledSystem, rhs):
    if "M_W_lu" not in system.parts:
        system.parts["M_W_lu"] = spla.splu(system.parts["M_W"].tocsc())
    return system.parts["M_W_lu"].solve(rhs)


def dual_norm_sq(system: AssembledSystem, functional) -> float:
    """``||l||^2_{W_h^*}`` of a functional given by its values on the ``W_h`` basis."""
    functional = np.asarray(functional, dtype=float)
    if functional.size == 0:
        return 0.0
    return float(functional @ _mw_solve(system, functional))


def triple_norm_sq(system: AssembledSystem, coeffs) -> float:
    """``(1/N)||v||^2 + s_h(h^b v, h^b v) + ||h^b lap v||^2_{W_h^*}``."""
    v = np.asarray(coeffs, dtype=float)
    p = system.parts
    h2b = system.h ** (2 * system.beta)
    val = h2b * float(v @ (p["S"] @ v)) + h2b * dual_norm_sq(system, p["C"] @ v)
    return val + system.data.quadratic(v)


def map_cost(system: AssembledSystem, coeffs) -> float:
    """Quadratic cost whose minimiser is the MAP estimate (posterior log-density up to ``-N/sigma^2``)."""
    u = np.asarray(coeffs, dtype=float)
    p = system.parts
    h, b = system.h, system.beta
    data = system.data
    misfit = 0.0
    if data.n_samples:
        r = data.phi @ u - data.y
        misfit = float(r @ data.noise.apply_inverse_shape(r)) / data.n_samples
    vh = forms.assemble_vh_inner(system.space_v, system.alpha, h)
    lap = forms.assemble_element_laplacian_product(system.space_v, 1.0)
    fh = p["f_h"].coeffs
    mass_w = forms.assemble_mass(system.space_w)
    elem = float(u @ (lap @ u) + 2.0 * u @ (p["L_vw"] @ fh) + fh @ (mass_w @ fh))
    dual = dual_norm_sq(system, p["C"] @ u - p["F"])
    prior = h ** (2 * b) * float(u @ (vh @ u)) + h ** (2 + 2 * b) * elem + h ** (2 * b) * dual
    return 0.5 * misfit + 0.5 * prior


def riesz_residual(system: AssembledSystem, sol: MapSolution) -> np.ndarray:
    """``<z, w_i>_{W_h} - (a(u, w_i) - f(w_i))`` for every ``W_h`` basis function."""
    p = system.parts
    return p["M_W"] @ sol.z.coeffs - (p["C"] @ sol.u.coeffs - p["F"])


def saddle_residual(system: AssembledSystem, sol: MapSolution) -> float:
    x = np.concatenate([sol.u.coeffs, sol.z.coeffs * system.h ** system.beta])
    b = system.rhs()
    r = b - system.matrix() @ x
    return float(np.linalg.norm(r) / max(np.linalg.norm(b), np.finfo(float).tiny))


# ---------------------------------------------------------------------------
# posterior covariance
# ---------------------------------------------------------------------------

def _schur_columns(system: AssembledSystem, cols) -> np.ndarray:
    """Columns ``cols`` of ``(W/N + K)^{-1}`` via the block factorisation."""
    nv, nw = system.n_v, system.n_w
    rhs = np.zeros((nv + nw, len(cols)))
    rhs[cols, np.arange(len(cols))] = 1.0
    out = system.factor().solve(rhs)
    return out[:nv]


def expected_triple_norm_error(system: AssembledSystem) -> float:
    """``E_y |||u_h^y - u_beta|||_beta^2 = (sigma^2/N) tr((W/N + K)^{-1} W/N)``.

    Only the DOFs touched by samples carry ``W``, so the trace needs the
    columns of the inverse on that block only.
    """
    N = system.N
    sigma = system.sigma
    if N == 0 or sigma == 0.0:
        return 0.0
    W = system.data.gram().tocsc()
    active = np.flatnonzero(np.asarray(abs(W).sum(axis=0)).ravel() > 0)
    if active.size == 0:
        return 0.0
    inv_cols = _schur_columns(system, active)[active]          # (A^{-1})[active, active]
    W_blk = W[active][:, active].toarray()
    tr = float(np.sum(inv_cols * W_blk.T)) / N
    return sigma ** 2 / N * tr


def normal_matrix_dense(system: AssembledSystem) -> np.ndarray:
    """Dense ``W/N + K`` (z eliminated); intended for modest DOF counts."""
    p = system.parts
    h2b = system.h ** (2 * system.beta)
    C = p["C"].toarray()
    K = h2b * (p["S"].toarray() + C.T @ np.linalg.solve(p["M_W"].toarray(), C))
    if system.N:
        K = K + system.data.gram().toarray() / system.N
    return 0.5 * (K + K.T)


def posterior_precision(system: AssembledSystem) -> np.ndarray:
    """Dense ``P = (N / sigma^2) (W/N + K)``."""
    if system.sigma == 0.0:
        raise ValueError("posterior precision is unbounded for sigma = 0")
    return system.N / system.sigma ** 2 * normal_matrix_dense(system)


def posterior_sample(system: AssembledSystem, count: int, seed: int, solution: MapSolution | None = None):
    """Exact draws from ``N(u_map, P^{-1})``.

    With ``sigma = 0`` the posterior is the point mass at ``u_map``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if system.N < 1:
        raise ValueError("posterior sampling needs at least one observation")
    sol = solution if solution is not None else solve_map(system)
    mean = sol.u.coeffs
    if system.sigma == 0.0:
        return [FeFunction(system.space_v, mean.copy()) for _ in range(count)]
    try:
        L = np.linalg.cholesky(posterior_precision(system))
    except np.linalg.LinAlgError as exc:
        raise SolverError("posterior precision is not positive definite") from exc
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((L.shape[0], count))
    draws = sla.solve_triangular(L.T, xi, lower=False)
    return [FeFunction(system.space_v, mean + draws[:, i]) for i in range(count)]


# ---------------------------------------------------------------------------
# empirical Gram / matrix Chernoff check
# ---------------------------------------------------------------------------

@dataclass
class GramReport:
    min_eig_ratios: list
    failure_rate: float
    threshold: float
    n_block: int
    n_samples: int


def empirical_gram_check(space_v: FeSpace, omega, n_samples: int, trials: int, seed: int,
                         threshold: float = 0.5, locations=None, weights=None) -> GramReport:
    """Smallest-eigenvalue ratio of empirical vs exact Gram matrices on omega.

    The basis is the set of ``V_h`` functions not vanishing on omega, each
    scaled to unit ``L^2(omega)`` norm.  The exact Gram matrix is taken
    with respect to the uniform probability on omega, so that it is the
    expectation of the empirical one ``(1/N) sum_k phi(X_k) phi(X_k)^T``.

    If ``locations`` is given it replaces the random draws (one trial) and
    ``weights`` (default uniform) are normalised to sum to one.
    """
    omega = Rect.coerce(omega)
    mesh = space_v.mesh
    block = space_v.omega_dof_set
    nb = block.size
    M = forms.assemble_mass(space_v, region="omega")[block][:, block].toarray()
    scale = 1.0 / np.sqrt(np.diag(M))
    A = (scale[:, None] * M * scale[None, :]) / omega.area
    lam_ref = float(np.linalg.eigvalsh(A)[0])

    remap = np.full(space_v.dof_count + 1, -1, dtype=np.int64)
    remap[block] = np.arange(nb)
    cell_block = np.ascontiguousarray(remap[space_v.cell_dofs])

    def ratio(points, w):
        if points.shape[0] < nb:
            return 0.0
        cells, xi, eta = locate(mesh, points)
        vals = kernels.lagrange_values(space_v.degree, xi, eta)
        G = kernels.weighted_gram(cells, np.ascontiguousarray(vals), cell_block,
                                  np.ascontiguousarray(w / w.sum()), nb)
        G = scale[:, None] * G * scale[None, :]
        return max(float(np.linalg.eigvalsh(G)[0]), 0.0) / lam_ref

    ratios = []
    if locations is not None:
        pts = np.asarray(locations, dtype=float).reshape(-1, 2)
        w = np.ones(pts.shape[0]) if weights is None else np.asarray(weights, dtype=float)
        ratios.append(ratio(pts, w))
        n_samples = pts.shape[0]
    else:
        for t in range(trials):
            pts = sample_locations(n_samples, omega, derive_seed(seed, t))
            ratios.append(ratio(pts, np.ones(n_samples)))
    fail = float(np.mean(np.asarray(ratios) < threshold)) if ratios else 0.0
    return GramReport(min_eig_ratios=ratios, failure_rate=fail, threshold=threshold,
                      n_block=nb, n_samples=n_samples)


def omega_quadrature(space_v: FeSpace, degree=None):
    """Quadrature points/weights on omega exact for products of two ``V_h`` functions."""
    return quadrature_points(space_v.mesh, "omega", degree or 2 * space_v.degree)


def make_spaces(mesh, degree: int):
    """``(V_h^k, W_h^1)`` on ``mesh``."""
    return lagrange_space(mesh, degree), lagrange_space(mesh, 1, dirichlet=True)
