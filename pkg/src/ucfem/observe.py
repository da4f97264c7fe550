"""Random design on omega and Gaussian observation noise."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .mesh import Rect


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Noise covariance ``sigma**2 * shape``.

    ``shape`` is ``None`` (identity), a 1-D array of per-sample variance
    factors, or a dense SPD matrix.  The data misfit is weighted by
    ``shape^{-1}``; ``sigma`` is the overall noise level, so ``sigma = 0``
    is a valid noise-free model.
    """

    sigma: float = 0.0
    shape: np.ndarray | None = None
    var_bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if self.sigma < 0 or not np.isfinite(self.sigma):
            raise ValueError("sigma must be finite and non-negative")
        if self.shape is None:
            return
        s = np.asarray(self.shape, dtype=float)
        object.__setattr__(self, "shape", s)
        if s.ndim == 1:
            eig = s
        elif s.ndim == 2 and s.shape[0] == s.shape[1]:
            if not np.allclose(s, s.T, rtol=0, atol=1e-12 * max(1.0, np.abs(s).max())):
                raise ValueError("dense noise covariance must be symmetric")
            eig = np.linalg.eigvalsh(s)
        else:
            raise ValueError("noise shape must be a vector or a square matrix")
        if np.any(eig <= 0):
            raise ValueError("noise covariance must be positive definite")
        if self.var_bounds is not None:
            lo, hi = self.var_bounds
            if eig.min() < lo * (1 - 1e-12) or eig.max() > hi * (1 + 1e-12):
                raise ValueError(f"noise covariance eigenvalues outside [{lo}, {hi}]")

    @property
    def kind(self) -> str:
        if self.shape is None:
            return "identity"
        return "diagonal" if self.shape.ndim == 1 else "dense"

    def check_size(self, n: int) -> None:
        if self.shape is not None and self.shape.shape[0] != n:
            raise ValueError(f"noise model sized for {self.shape.shape[0]} samples, got {n}")

    def covariance(self, n: int) -> np.ndarray:
        self.check_size(n)
        if self.shape is None:
            return self.sigma ** 2 * np.eye(n)
        if self.shape.ndim == 1:
            return self.sigma ** 2 * np.diag(self.shape)
        return self.sigma ** 2 * self.shape

    def whiten_factor(self, n: int):
        """``L`` with ``L L^T = shape`` (``None`` for identity)."""
        self.check_size(n)
        if self.shape is None:
            return None
        if self.shape.ndim == 1:
            return np.sqrt(self.shape)
        return np.linalg.cholesky(self.shape)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """One noise vector.  Every model consumes the same ``n`` standard normals."""
        z = rng.standard_normal(n)
        L = self.whiten_factor(n)
        if L is None:
            return self.sigma * z
        if L.ndim == 1:
            return self.sigma * L * z
        return self.sigma * (L @ z)

    def apply_inverse_shape(self, v):
        """``shape^{-1} v`` for a vector or matrix ``v`` with samples along axis 0."""
        if self.shape is None:
            return v
        if self.shape.ndim == 1:
            return v / (self.shape[:, None] if np.ndim(v) == 2 else self.shape)
        return np.linalg.solve(self.shape, v)


@dataclass(eq=False)
class ObservationSet:
    locations: np.ndarray
    values: np.ndarray
    noise: NoiseModel
    seed: int | None = None
    truth_id: str | None = None

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.locations.shape[0] != self.values.shape[0]:
            raise ValueError("locations and values differ in length")
        self.noise.check_size(self.n)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y_coord", "value"])
            for (x, y), v in zip(self.locations, self.values):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])

    @classmethod
    def from_csv(cls, path, noise: NoiseModel | None = None) -> "ObservationSet":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :2], data[:, 2], noise or NoiseModel())


def derive_seed(*parts: int) -> int:
    """Deterministic 64-bit seed from integer parts, e.g. ``(base_seed, replicate)``."""
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_locations(n_samples: int, omega, seed: int) -> np.ndarray:
    """``n_samples`` i.i.d. uniform points on the rectangle ``omega``."""
    if n_samples < 0:
        raise ValueError("n_samples must be non-negative")
    omega = Rect.coerce(omega)
    rng = np.random.default_rng(seed)
    u = rng.random((n_samples, 2))
    return np.column_stack([omega.x0 + (omega.x1 - omega.x0) * u[:, 0],
                            omega.y0 + (omega.y1 - omega.y0) * u[:, 1]])


def draw_observations(truth, locations, noise: NoiseModel, seed: int, truth_id=None) -> ObservationSet:
    """``y_i = truth(X_i) + eps_i`` with ``eps ~ N(0, sigma^2 shape)``."""
    locations = np.asarray(locations, dtype=float).reshape(-1, 2)
    clean = np.asarray(truth(locations[:, 0], locations[:, 1]), dtype=float)
    clean = np.broadcast_to(clean, (locations.shape[0],))
    if not np.all(np.isfinite(clean)):
        raise ValueError("truth is not finite at every sample location")
    eps = noise.draw(locations.shape[0], np.random.default_rng(seed))
    return ObservationSet(locations, clean + eps, noise, seed=seed, truth_id=truth_id)


def observe(truth, omega, n_samples: int, noise: NoiseModel, seed: int, truth_id=None) -> ObservationSet:
    """Locations and noise from independent streams derived from ``seed``."""
    locs = sample_locations(n_samples, omega, derive_seed(seed, 0))
    obs = draw_observations(truth, locs, noise, derive_seed(seed, 1), truth_id=truth_id)
    obs.seed = seed
    return obs
