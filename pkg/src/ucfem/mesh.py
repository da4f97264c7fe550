"""Structured crossed-diagonal triangulations of a rectangle with tagged subdomains."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np


class Tag(enum.IntEnum):
    OTHER = 0
    OMEGA = 1
    B = 2
    OMEGA_AND_B = 3


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"degenerate rectangle {self}")

    @classmethod
    def coerce(cls, value) -> "Rect":
        if isinstance(value, Rect):
            return value
        x0, x1, y0, y1 = (float(v) for v in value)
        return cls(x0, x1, y0, y1)

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def contains(self, x, y, tol=1e-12):
        x = np.asarray(x)
        y = np.asarray(y)
        return ((x >= self.x0 - tol) & (x <= self.x1 + tol)
                & (y >= self.y0 - tol) & (y <= self.y1 + tol))

    def strictly_inside(self, other: "Rect", tol=1e-12) -> bool:
        return (self.x0 > other.x0 + tol and self.x1 < other.x1 - tol
                and self.y0 > other.y0 + tol and self.y1 < other.y1 - tol)

    def as_tuple(self):
        return (self.x0, self.x1, self.y0, self.y1)


UNIT_SQUARE = Rect(0.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation.

    Facets are numbered once; ``facet_cells[f, 1] == -1`` marks a boundary
    facet.  For interior facets ``facet_cells[f, 0] < facet_cells[f, 1]``.
    ``cell_facets[c, e]`` is the facet joining local vertices
    ``(e, (e+1) % 3)`` of cell ``c``.
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_cells: np.ndarray
    cell_facets: np.ndarray
    cell_tags: np.ndarray
    domain: Rect
    nx: int
    ny: int
    omega: Rect | None = None
    b_region: Rect | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return 2

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def dx(self) -> float:
        return (self.domain.x1 - self.domain.x0) / self.nx

    @property
    def dy(self) -> float:
        return (self.domain.y1 - self.domain.y0) / self.ny

    @property
    def interior_facet_ids(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] >= 0)

    @property
    def boundary_facet_ids(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] < 0)

    @property
    def interior_facets(self):
        ids = self.interior_facet_ids
        return [(tuple(self.facets[f]), int(self.facet_cells[f, 0]), int(self.facet_cells[f, 1]))
                for f in ids]

    @property
    def boundary_facets(self):
        ids = self.boundary_facet_ids
        return [(tuple(self.facets[f]), int(self.facet_cells[f, 0])) for f in ids]

    @property
    def cell_diameters(self) -> np.ndarray:
        if "diam" not in self._cache:
            p = self.vertices[self.cells]
            e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
            self._cache["diam"] = np.linalg.norm(e, axis=2).max(axis=1)
        return self._cache["diam"]

    @property
    def h_max(self) -> float:
        return float(self.cell_diameters.max())

    @property
    def h_min(self) -> float:
        return float(self.cell_diameters.min())

    @property
    def h(self) -> float:
        """Global mesh parameter (largest cell diameter)."""
        return self.h_max

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        a = p[:, 1] - p[:, 0]
        b = p[:, 2] - p[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    def facet_lengths(self) -> np.ndarray:
        p = self.vertices[self.facets]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    def facet_normals(self) -> np.ndarray:
        """Unit normals of all facets, oriented outward from ``facet_cells[:, 0]``.

        For interior facets that is the lower-indexed cell, so the normal
        points from the lower to the higher cell index; on the boundary it
        is the outward normal.
        """
        if "normals" not in self._cache:
            p = self.vertices[self.facets]
            t = p[:, 1] - p[:, 0]
            n = np.stack([t[:, 1], -t[:, 0]], axis=1)
            n /= np.linalg.norm(n, axis=1)[:, None]
            mid = p.mean(axis=1)
            away = mid - self.centroids()[self.facet_cells[:, 0]]
            flip = np.einsum("ij,ij->i", n, away) < 0
            n[flip] *= -1.0
            self._cache["normals"] = n
        return self._cache["normals"]

    def facet_normal(self, facet: int) -> np.ndarray:
        if not 0 <= facet < self.facets.shape[0]:
            raise IndexError(f"facet id {facet} out of range [0, {self.facets.shape[0]})")
        return self.facet_normals()[facet].copy()

    def cells_with_tags(self, *tags) -> np.ndarray:
        return np.flatnonzero(np.isin(self.cell_tags, [int(t) for t in tags]))

    def region_cells(self, region) -> np.ndarray:
        """Cells making up ``region`` (``None``/"all", "omega", "b", or a :class:`Tag`)."""
        if region is None or region == "all":
            return np.arange(self.n_cells)
        if isinstance(region, str):
            key = region.lower()
            if key == "omega":
                return self.cells_with_tags(Tag.OMEGA, Tag.OMEGA_AND_B)
            if key == "b":
                return self.cells_with_tags(Tag.B, Tag.OMEGA_AND_B)
            if key == "other":
                return self.cells_with_tags(Tag.OTHER)
            raise ValueError(f"unknown region {region!r}")
        return self.cells_with_tags(Tag(region))

    def to_json(self, path) -> None:
        payload = {
            "domain": list(self.domain.as_tuple()),
            "nx": self.nx,
            "ny": self.ny,
            "vertices": self.vertices.tolist(),
            "cells": self.cells.tolist(),
            "tags": [Tag(t).name for t in self.cell_tags],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)


def _grid_aligned(value, origin, step, tol=1e-9):
    r = (value - origin) / step
    return abs(r - round(r)) <= tol * max(1.0, abs(r))


def _check_subregion(name, region: Rect, domain: Rect, nx, ny):
    dx = (domain.x1 - domain.x0) / nx
    dy = (domain.y1 - domain.y0) / ny
    for v in (region.x0, region.x1):
        if not _grid_aligned(v, domain.x0, dx):
            raise ValueError(f"{name} edge x={v} is not on a grid line of the nx={nx} mesh")
    for v in (region.y0, region.y1):
        if not _grid_aligned(v, domain.y0, dy):
            raise ValueError(f"{name} edge y={v} is not on a grid line of the nx={nx} mesh")
    if not region.strictly_inside(domain):
        raise ValueError(f"{name} {region.as_tuple()} must lie strictly inside the domain")


def build_structured_mesh(nx: int, domain=UNIT_SQUARE, omega=None, b_region=None,
                          rho: float = 2.0) -> Mesh:
    """Split an ``nx x nx`` grid of ``domain`` into lower-left/upper-right triangle pairs.

    ``omega`` and ``b_region`` must sit on grid lines so that they are exact
    unions of cells.  Both must stay away from the boundary, which also keeps
    ``B \\ omega`` off ``dOmega``.  Requesting subdomains needs ``nx >= 4``.
    """
    nx = int(nx)
    if nx < 1:
        raise ValueError("nx must be positive")
    domain = Rect.coerce(domain)
    omega = None if omega is None else Rect.coerce(omega)
    b_region = None if b_region is None else Rect.coerce(b_region)
    if (omega is not None or b_region is not None) and nx < 4:
        raise ValueError(f"nx={nx} < 4 cannot resolve interior subdomains")
    ny = nx
    if omega is not None:
        _check_subregion("omega", omega, domain, nx, ny)
    if b_region is not None:
        _check_subregion("b_region", b_region, domain, nx, ny)

    xs = np.linspace(domain.x0, domain.x1, nx + 1)
    ys = np.linspace(domain.y0, domain.y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    v00 = vid(ii, jj)
    v10 = vid(ii + 1, jj)
    v11 = vid(ii + 1, jj + 1)
    v01 = vid(ii, jj + 1)
    cells = np.empty((2 * nx * ny, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([v00, v10, v11])
    cells[1::2] = np.column_stack([v00, v11, v01])

    local_edges = np.stack([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]], axis=1)
    keys = np.sort(local_edges.reshape(-1, 2), axis=1)
    facets, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    cell_facets = inverse.reshape(-1, 3)

    facet_cells = np.full((facets.shape[0], 2), -1, dtype=np.int64)
    owner = np.repeat(np.arange(cells.shape[0]), 3)
    order = np.argsort(inverse, kind="stable")
    sorted_f = inverse[order]
    sorted_c = owner[order]
    first = np.ones(sorted_f.shape[0], dtype=bool)
    first[1:] = sorted_f[1:] != sorted_f[:-1]
    facet_cells[sorted_f[first], 0] = sorted_c[first]
    facet_cells[sorted_f[~first], 1] = sorted_c[~first]
    counts = np.bincount(inverse, minlength=facets.shape[0])
    if counts.max() > 2:
        raise RuntimeError("non-manifold facet in structured mesh")  # pragma: no cover

    cent = vertices[cells].mean(axis=1)
    in_omega = np.zeros(cells.shape[0], dtype=bool) if omega is None else omega.contains(cent[:, 0], cent[:, 1], tol=0.0)
    in_b = np.zeros(cells.shape[0], dtype=bool) if b_region is None else b_region.contains(cent[:, 0], cent[:, 1], tol=0.0)
    tags = np.full(cells.shape[0], int(Tag.OTHER), dtype=np.int64)
    tags[in_omega & ~in_b] = Tag.OMEGA
    tags[in_b & ~in_omega] = Tag.B
    tags[in_omega & in_b] = Tag.OMEGA_AND_B

    mesh = Mesh(vertices=vertices, cells=cells, facets=facets, facet_cells=facet_cells,
                cell_facets=cell_facets, cell_tags=tags, domain=domain, nx=nx, ny=ny,
                omega=omega, b_region=b_region)
    if mesh.h_max / mesh.h_min > rho:
        raise ValueError(f"mesh violates quasi-uniformity bound rho={rho}")
    for arr in (vertices, cells, facets, facet_cells, cell_facets, tags):
        arr.setflags(write=False)
    return mesh
