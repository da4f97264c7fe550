"""Analytic ground-truth fields with closed-form gradients and sources ``f = -lap u``."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class GroundTruth:
    """Manufactured field on the closed domain.

    ``f`` is ``None`` for harmonic truths (zero source).  ``smoothness_alpha``
    is a nominal Sobolev index; the analytic families here are smooth on the
    closed domain, so it only labels how hard the field is in practice.
    """

    id: str
    u: Callable
    f: Callable | None
    grad: Callable
    smoothness_alpha: float
    is_harmonic: bool

    def __call__(self, x, y):
        return self.u(x, y)

    def source(self, x, y):
        if self.f is None:
            return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        return self.f(x, y)


def _poly2():
    return GroundTruth(
        "harmonic_poly_2",
        u=lambda x, y: x * x - y * y,
        f=None,
        grad=lambda x, y: (2.0 * x, -2.0 * y),
        smoothness_alpha=np.inf,
        is_harmonic=True,
    )


def _exp():
    return GroundTruth(
        "harmonic_exp",
        u=lambda x, y: np.exp(x) * np.cos(y),
        f=None,
        grad=lambda x, y: (np.exp(x) * np.cos(y), -np.exp(x) * np.sin(y)),
        smoothness_alpha=np.inf,
        is_harmonic=True,
    )


def _corner(gamma=0.5, delta=0.05):
    # branch point at (-delta, -delta), cut along the ray pointing away from
    # the domain, so the principal branch is analytic on the closed square
    if not delta > 0:
        raise ValueError("branch point must stay outside the closed domain (delta > 0)")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    z0 = complex(-delta, -delta)

    def g(x, y):
        return (np.asarray(x) + 1j * np.asarray(y) - z0) ** gamma

    def dg(x, y):
        return gamma * (np.asarray(x) + 1j * np.asarray(y) - z0) ** (gamma - 1.0)

    def grad(x, y):
        d = dg(x, y)
        return d.real, -d.imag

    return GroundTruth(
        "fractional_corner",
        u=lambda x, y: g(x, y).real,
        f=None,
        grad=grad,
        smoothness_alpha=1.0 + gamma,
        is_harmonic=True,
    )


def _bump():
    pi = np.pi
    return GroundTruth(
        "poisson_bump",
        u=lambda x, y: np.sin(pi * x) * np.sin(pi * y),
        f=lambda x, y: 2.0 * pi * pi * np.sin(pi * x) * np.sin(pi * y),
        grad=lambda x, y: (pi * np.cos(pi * x) * np.sin(pi * y), pi * np.sin(pi * x) * np.cos(pi * y)),
        smoothness_alpha=np.inf,
        is_harmonic=False,
    )


CATALOG = {
    "harmonic_poly_2": _poly2,
    "harmonic_exp": _exp,
    "fractional_corner": _corner,
    "poisson_bump": _bump,
}


def builtin_truth(id: str, **params) -> GroundTruth:
    try:
        factory = CATALOG[id]
    except KeyError:
        raise ValueError(f"unknown truth {id!r}; known: {sorted(CATALOG)}") from None
    return factory(**params)


def fd_laplacian(u, x, y, step=1e-4):
    """Five-point Laplacian of ``u`` at the given points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c = u(x, y)
    return (u(x + step, y) + u(x - step, y) + u(x, y + step) + u(x, y - step) - 4.0 * c) / step ** 2


def check_source_consistency(truth: GroundTruth, n_points=100, seed=0, step=1e-4, domain=(0.0, 1.0, 0.0, 1.0)):
    """Largest relative mismatch between ``-lap u`` (finite differences) and ``f``.

    The relative scale is ``max(1, max|f|, max|u|)`` over the test points,
    which keeps the check meaningful for harmonic truths where ``f = 0``.
    """
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = domain
    pad = 10 * step
    x = rng.uniform(x0 + pad, x1 - pad, n_points)
    y = rng.uniform(y0 + pad, y1 - pad, n_points)
    lap = fd_laplacian(truth.u, x, y, step)
    f = truth.source(x, y)
    scale = max(1.0, float(np.abs(f).max()), float(np.abs(truth.u(x, y)).max()))
    return float(np.abs(-lap - f).max() / scale)
