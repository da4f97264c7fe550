"""Conforming spectral estimator on harmonic polynomials.

The trial space holds ``1, Re w^j, Im w^j`` for ``j = 1..m`` with
``w = (z - z_c) / r``, ``z_c`` the domain centre and ``r`` its half
diameter.  Every member is harmonic, so the reconstruction is too.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .mesh import UNIT_SQUARE, Rect

DIM = 2


@dataclass(frozen=True)
class HarmonicBasis:
    max_degree: int
    domain: Rect = UNIT_SQUARE

    def __post_init__(self):
        if self.max_degree < 0:
            raise ValueError("max_degree must be non-negative")
        object.__setattr__(self, "domain", Rect.coerce(self.domain))

    @property
    def dimension(self) -> int:
        return 2 * self.max_degree + 1

    @property
    def center(self) -> complex:
        d = self.domain
        return complex(0.5 * (d.x0 + d.x1), 0.5 * (d.y0 + d.y1))

    @property
    def radius(self) -> float:
        d = self.domain
        return 0.5 * math.hypot(d.x1 - d.x0, d.y1 - d.y0)

    @property
    def degrees(self) -> np.ndarray:
        return np.concatenate([[0], np.repeat(np.arange(1, self.max_degree + 1), 2)])

    @property
    def labels(self) -> list:
        out = [(0, "re")]
        for j in range(1, self.max_degree + 1):
            out += [(j, "re"), (j, "im")]
        return out

    def evaluate(self, x, y) -> np.ndarray:
        """Design matrix, shape ``(n_points, dimension)``."""
        w = (np.asarray(x, dtype=float).ravel() + 1j * np.asarray(y, dtype=float).ravel() - self.center) / self.radius
        B = np.empty((w.size, self.dimension))
        B[:, 0] = 1.0
        p = np.ones_like(w)
        for j in range(1, self.max_degree + 1):
            p = p * w
            B[:, 2 * j - 1] = p.real
            B[:, 2 * j] = p.imag
        return B

    def field(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.dimension,):
            raise ValueError(f"expected {self.dimension} coefficients, got {coeffs.shape}")

        def u(x, y):
            shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
            xx, yy = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
            return (self.evaluate(xx, yy) @ coeffs).reshape(shape)
        return u

    def gradient(self, coeffs, x, y):
        """``(du/dx, du/dy)`` at the points: derivative of the analytic part."""
        coeffs = np.asarray(coeffs, dtype=float)
        w = (np.asarray(x, dtype=float).ravel() + 1j * np.asarray(y, dtype=float).ravel() - self.center) / self.radius
        d = np.zeros(w.shape, dtype=complex)
        p = np.ones_like(w)
        for j in range(1, self.max_degree + 1):
            # a Re w^j + b Im w^j = Re((a - ib) w^j)
            d += (coeffs[2 * j - 1] - 1j * coeffs[2 * j]) * j * p / self.radius
            p = p * w
        return d.real, -d.imag

    def gram(self, n_quad: int | None = None) -> np.ndarray:
        """``L^2(domain)`` Gram matrix by tensor Gauss-Legendre."""
        n_quad = n_quad or self.max_degree + 2
        t, wt = np.polynomial.legendre.leggauss(n_quad)
        d = self.domain
        xs = d.x0 + (d.x1 - d.x0) * (t + 1) / 2
        ys = d.y0 + (d.y1 - d.y0) * (t + 1) / 2
        X, Y = np.meshgrid(xs, ys)
        Wq = np.outer(wt, wt).ravel() * d.area / 4
        B = self.evaluate(X.ravel(), Y.ravel())
        return B.T @ (Wq[:, None] * B)

    def prefix(self, max_degree: int) -> "HarmonicBasis":
        if max_degree > self.max_degree:
            raise ValueError("prefix degree exceeds basis degree")
        return HarmonicBasis(max_degree, self.domain)


@dataclass(frozen=True)
class SpectralPrior:
    """Diagonal prior precision ``w_j = (1 + deg_j)^(2 alpha)`` on the harmonic basis.

    With ``rescale`` the precision term carries the factor ``N^(d/(2 alpha + d))``.
    ``weights`` overrides the default degree law (indexed like the basis).
    """

    alpha: float
    weights: np.ndarray | None = None
    rescale: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if np.any(w <= 0):
                raise ValueError("prior weights must be positive")
            object.__setattr__(self, "weights", w)

    def weights_for(self, basis: HarmonicBasis) -> np.ndarray:
        if self.weights is not None:
            if self.weights.size < basis.dimension:
                raise ValueError("explicit prior weights shorter than the basis")
            return self.weights[: basis.dimension]
        return (1.0 + basis.degrees) ** (2.0 * self.alpha)

    def scale(self, n_samples: int) -> float:
        if not self.rescale:
            return 1.0
        return float(n_samples) ** (DIM / (2.0 * self.alpha + DIM))


def _normal_system(basis, prior, locations, values):
    B = basis.evaluate(locations[:, 0], locations[:, 1])
    N = B.shape[0]
    D = prior.scale(N) * prior.weights_for(basis)
    return B, D


def solve_spectral_map(basis: HarmonicBasis, prior: SpectralPrior, observations) -> np.ndarray:
    """Coefficients ``c`` with ``(B^T B + s diag(w)) c = B^T y`` (unnormalised sum over samples)."""
    locs = np.asarray(observations.locations, dtype=float)
    y = np.asarray(observations.values, dtype=float)
    if y.size == 0:
        raise ValueError("spectral solve needs at least one observation")
    if basis.dimension > y.size:
        warnings.warn(f"basis dimension {basis.dimension} exceeds sample count {y.size}", stacklevel=2)
    B, D = _normal_system(basis, prior, locs, y)
    A = B.T @ B + np.diag(D)
    try:
        return sla.solve(A, B.T @ y, assume_a="pos")
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:  # pragma: no cover
        raise RuntimeError("spectral normal matrix is not positive definite") from exc


def check_galerkin_orthogonality(fine, coarse, observations, prior: SpectralPrior,
                                 basis: HarmonicBasis) -> float:
    """Largest ``|<u_f - u_c, v>_N + s <u_f - u_c, v>_prior|`` over coarse basis functions ``v``.

    ``basis`` is the fine basis; the coarse coefficients live on a prefix of it.
    """
    fine = np.asarray(fine, dtype=float)
    coarse = np.asarray(coarse, dtype=float)
    if fine.size != basis.dimension:
        raise ValueError("fine coefficients do not match the basis")
    if coarse.size > fine.size or coarse.size % 2 != 1:
        raise ValueError("coarse level is not a nested prefix of the fine basis")
    locs = np.asarray(observations.locations, dtype=float)
    B, D = _normal_system(basis, prior, locs, observations.values)
    diff = fine.copy()
    diff[: coarse.size] -= coarse
    n_c = coarse.size
    resid = B[:, :n_c].T @ (B @ diff) + D[:n_c] * diff[:n_c]
    return float(np.abs(resid).max()) if n_c else 0.0


def couple_dimension(N: int, alpha: float, l_schedule: str = "log", eps: float = 0.1) -> int:
    """``n = ceil((N l_N)^(d/(2 alpha + d)))`` with ``l_N = 1/log N`` or ``N^-eps``."""
    if N < 2:
        raise ValueError("N must be at least 2")
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    if l_schedule == "log":
        l_N = 1.0 / math.log(N)
    elif l_schedule == "power":
        if not 0 < eps < 1:
            raise ValueError("power schedule needs 0 < eps < 1")
        l_N = float(N) ** (-eps)
    else:
        raise ValueError(f"unknown l_schedule {l_schedule!r}")
    return max(1, math.ceil((N * l_N) ** (DIM / (2.0 * alpha + DIM))))


def degree_for_dimension(n: int) -> int:
    """Smallest ``m`` with ``2m + 1 >= n``."""
    return max(0, math.ceil((n - 1) / 2))


def write_coefficients(path, basis: HarmonicBasis, coeffs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["degree", "part", "value"])
        for (deg, part), c in zip(basis.labels, np.asarray(coeffs, dtype=float)):
            w.writerow([deg, part, repr(float(c))])
