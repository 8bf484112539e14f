"""Velocity densities the operator estimators can consume.

Pointwise estimators need densities they can evaluate at pre-collisional
arguments; the Carleman form additionally wants the integral of the
density over an affine plane.  Three concrete classes cover the uses:

- IsotropicMaxwellian: mean-zero Gaussian with per-component variance
  ``theta`` (so its second moment is 3*theta).
- BallIndicator: the (unnormalized) indicator of a ball.
- GaussianKDE: kernel-density surrogate for a particle ensemble, with
  the per-component rule-of-thumb bandwidth h_j = 1.06 * sigma_j * N^(-1/5).

Plane integrals are exact: a Gaussian integrates over the affine plane
{point + z : z . normal = 0} to its one-dimensional marginal along the
normal, and a ball section is a disc.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import InputError, UnsupportedDensityError


class Density:
    """Interface: pointwise values, exact plane integrals, sampling."""

    def __call__(self, v: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def plane_integral(self, point: np.ndarray, normal: np.ndarray) -> np.ndarray:
        raise NotImplementedError  # pragma: no cover

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError  # pragma: no cover

    @property
    def mass(self) -> float:  # integral over R^3
        return 1.0


class IsotropicMaxwellian(Density):
    def __init__(self, theta: float, mean=None):
        if theta <= 0:
            raise InputError("theta must be positive")
        self.theta = float(theta)
        self.mean = np.zeros(3) if mean is None else np.asarray(mean, dtype=float)
        self._norm = (2.0 * math.pi * self.theta) ** -1.5

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        d2 = np.sum((v - self.mean) ** 2, axis=-1)
        return self._norm * np.exp(-0.5 * d2 / self.theta)

    def plane_integral(self, point, normal):
        # 1D marginal along the normal, evaluated at normal . point
        point = np.asarray(point, dtype=float)
        normal = np.asarray(normal, dtype=float)
        c = np.sum(normal * (point - self.mean), axis=-1)
        return np.exp(-0.5 * c * c / self.theta) / math.sqrt(2.0 * math.pi * self.theta)

    def sample(self, n, rng):
        return self.mean + rng.normal(scale=math.sqrt(self.theta), size=(n, 3))

    @property
    def second_moment(self) -> float:
        return 3.0 * self.theta + float(np.dot(self.mean, self.mean))


class BallIndicator(Density):
    """Indicator of B(center, radius); total mass (4/3) pi R^3."""

    def __init__(self, center, radius: float):
        if radius <= 0:
            raise InputError("radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        d2 = np.sum((v - self.center) ** 2, axis=-1)
        return (d2 <= self.radius * self.radius).astype(float)

    def plane_integral(self, point, normal):
        point = np.asarray(point, dtype=float)
        normal = np.asarray(normal, dtype=float)
        h = np.sum(normal * (point - self.center), axis=-1)
        return math.pi * np.maximum(0.0, self.radius * self.radius - h * h)

    def sample(self, n, rng):
        z = rng.normal(size=(n, 3))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        r = self.radius * rng.uniform(size=(n, 1)) ** (1.0 / 3.0)
        return self.center + r * z

    @property
    def mass(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius ** 3


class GaussianKDE(Density):
    """Gaussian product-kernel surrogate for a velocity ensemble.

    The bandwidth per component follows the 1.06 * sigma * N^(-1/5) rule
    computed on the full sample; evaluation may use a subsampled basis
    (``max_basis``) to keep pointwise costs bounded.  The bandwidths and
    basis size are reported so runs can record them.
    """

    def __init__(self, samples: np.ndarray, max_basis: int = 4096,
                 rng: np.random.Generator | None = None):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != 3:
            raise InputError("samples must have shape (n, 3)")
        n = samples.shape[0]
        sigma = samples.std(axis=0, ddof=1)
        if np.any(sigma == 0):
            raise InputError("degenerate ensemble: zero variance component")
        self.bandwidth = 1.06 * sigma * n ** (-0.2)
        if n > max_basis:
            rng = rng or np.random.default_rng(0)
            idx = rng.choice(n, size=max_basis, replace=False)
            self.basis = samples[idx]
        else:
            self.basis = samples
        self._norm = (2.0 * math.pi) ** -1.5 / float(np.prod(self.bandwidth))

    def __call__(self, v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        # chunked to bound the (n_eval, n_basis) temporary
        out = np.empty(v.shape[0])
        step = max(1, int(4e6 // max(self.basis.shape[0], 1)))
        h2 = self.bandwidth ** 2
        for i in range(0, v.shape[0], step):
            block = v[i:i + step]
            d2 = np.zeros((block.shape[0], self.basis.shape[0]))
            for j in range(3):
                diff = block[:, None, j] - self.basis[None, :, j]
                d2 += diff * diff / h2[j]
            out[i:i + step] = np.exp(-0.5 * d2).mean(axis=1)
        return self._norm * out

    def plane_integral(self, point, normal):
        point = np.atleast_2d(np.asarray(point, dtype=float))
        normal = np.atleast_2d(np.asarray(normal, dtype=float))
        var = np.sum((normal ** 2) * (self.bandwidth ** 2)[None, :], axis=-1)
        c = np.sum(normal * point, axis=-1)
        proj = self.basis @ normal.T  # (n_basis, n_eval)
        z = (c[None, :] - proj) ** 2 / var[None, :]
        return np.exp(-0.5 * z).mean(axis=0) / np.sqrt(2.0 * math.pi * var)

    def sample(self, n, rng):
        idx = rng.integers(0, self.basis.shape[0], size=n)
        return self.basis[idx] + rng.normal(size=(n, 3)) * self.bandwidth


def as_density(obj, max_basis: int = 4096) -> Density:
    """Coerce to a Density; raw arrays/ensembles get a KDE surrogate."""
    if isinstance(obj, Density):
        return obj
    velocities = getattr(obj, "velocities", obj)
    try:
        arr = np.asarray(velocities, dtype=float)
    except Exception as exc:  # pragma: no cover
        raise UnsupportedDensityError(f"cannot interpret {type(obj)!r} as a density") from exc
    if arr.ndim == 2 and arr.shape[1] == 3:
        return GaussianKDE(arr, max_basis=max_basis)
    raise UnsupportedDensityError(
        "pointwise estimators need a Density or an (n, 3) ensemble to wrap in a KDE")
