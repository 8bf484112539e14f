"""Exact collision transforms in both sphere parametrizations.

Impact-direction (n) form: n is the unit vector joining the particle
centers at contact, the impact speed is |u.n| with u = v - v_star, and

    v'      = v      - beta(|u.n|) (u.n) n
    v_star' = v_star + beta(|u.n|) (u.n) n

Sigma form: sigma = u_hat - 2 (u_hat.n) n parametrizes the deflection;
the impact speed becomes |u| sqrt((1 - u_hat.sigma)/2) and

    v'      = v      - beta * (u - |u| sigma)/2
    v_star' = v_star + beta * (u - |u| sigma)/2

Momentum is conserved identically; kinetic energy drops by
(1 - e^2)/2 * (u.n)^2 per collision.  All functions are vectorized over
leading axes; velocity arrays have shape (..., 3).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePairError, InputError
from .restitution import RestitutionModel, beta, eval_e, theta_inv


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


@dataclass(frozen=True)
class CollisionPair:
    """A velocity pair with its collision direction.

    ``parametrization`` selects how ``direction`` is read: "impact_n"
    (center-line unit vector n) or "sigma" (deflection direction).
    """

    v: np.ndarray
    v_star: np.ndarray
    direction: np.ndarray
    parametrization: str = "impact_n"

    def __post_init__(self):
        for name in ("v", "v_star", "direction"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.parametrization not in ("impact_n", "sigma"):
            raise InputError(f"unknown parametrization {self.parametrization!r}")
        if not (np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.v_star))):
            raise InputError("velocities must be finite")
        norm = np.linalg.norm(self.direction, axis=-1)
        if np.any(np.abs(norm - 1.0) > 1e-12):
            raise InputError("direction must be a unit vector (within 1e-12)")

    def post_collide(self, model: RestitutionModel):
        """(v', v_star') after the collision, per the pair's parametrization."""
        if self.parametrization == "impact_n":
            v1, v2, _ = post_collide_n(model, self.v, self.v_star, self.direction)
            return v1, v2
        return post_collide_sigma(model, self.v, self.v_star, self.direction)


def post_collide_n(model: RestitutionModel, v: np.ndarray, v_star: np.ndarray,
                   n: np.ndarray):
    """Post-collisional velocities and per-pair energy loss, n form.

    Returns (v', v_star', energy_loss) with energy_loss =
    (1 - e(|u.n|)^2)/2 * (u.n)^2 >= 0.  Grazing pairs (u.n = 0) pass
    through unchanged.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    n = np.asarray(n, dtype=float)
    un = _dot(v - v_star, n)
    x = np.abs(un)
    e = eval_e(model, x)
    b = 0.5 * (1.0 + e)
    kick = (b * un)[..., None] * n
    loss = 0.5 * (1.0 - e * e) * un * un
    return v - kick, v_star + kick, loss


def pre_collide_n(model: RestitutionModel, v: np.ndarray, v_star: np.ndarray,
                  n: np.ndarray):
    """Pre-collisional velocities ('v, 'v_star) that collide into (v, v_star).

    'v = v - xi(|u.n|) s n with xi(x) = (theta_inv(x) + x)/2 and
    s = sign(u.n); the sign keeps the map consistent for either
    orientation of n.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    n = np.asarray(n, dtype=float)
    un = _dot(v - v_star, n)
    x = np.abs(un)
    xi = 0.5 * (theta_inv(model, x) + x)
    kick = (np.sign(un) * xi)[..., None] * n
    return v - kick, v_star + kick


def post_collide_sigma(model: RestitutionModel, v: np.ndarray, v_star: np.ndarray,
                       sigma: np.ndarray, strict: bool = False):
    """Post-collisional velocities, sigma form.

    The impact speed is |u| sqrt((1 - u_hat.sigma)/2).  Pairs with u = 0
    have no defined sigma; they are passed through unchanged (a null
    collision) unless ``strict`` is set, in which case they raise
    DegeneratePairError so the caller can skip them explicitly.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    u = v - v_star
    unorm = np.linalg.norm(u, axis=-1)
    degenerate = unorm == 0.0
    if strict and np.any(degenerate):
        raise DegeneratePairError("zero relative velocity")
    safe = np.where(degenerate, 1.0, unorm)
    impact = unorm * np.sqrt(np.maximum(0.0, 0.5 * (1.0 - _dot(u, sigma) / safe)))
    b = np.asarray(beta(model, impact))
    transfer = 0.5 * b[..., None] * (u - np.asarray(unorm)[..., None] * sigma)
    transfer = np.where(np.asarray(degenerate)[..., None], 0.0, transfer)
    return v - transfer, v_star + transfer


def sigma_from_n(u: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Deflection direction sigma = u_hat - 2 (u_hat.n) n."""
    u = np.asarray(u, dtype=float)
    n = np.asarray(n, dtype=float)
    unorm = np.linalg.norm(u, axis=-1, keepdims=True)
    uhat = u / unorm
    return uhat - 2.0 * _dot(uhat, n)[..., None] * n


def energy(v: np.ndarray, v_star: np.ndarray) -> np.ndarray:
    return _dot(v, v) + _dot(v_star, v_star)


def random_unit_vectors(rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniform directions on the unit sphere."""
    z = rng.normal(size=(size, 3))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def cosine_weighted_directions(rng: np.random.Generator, uhat: np.ndarray) -> np.ndarray:
    """Directions n with density |uhat.n| / (2 pi) on the full sphere.

    Used for impact-direction sampling of the true hard-sphere angular
    kernel: the |u_hat.n| weight is then exact.
    """
    uhat = np.asarray(uhat, dtype=float)
    m = uhat.shape[0]
    cos_t = np.sqrt(rng.uniform(size=m))
    sign = np.where(rng.uniform(size=m) < 0.5, 1.0, -1.0)
    cos_t = cos_t * sign
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=m)

    # orthonormal frame (t1, t2, uhat); pick the helper axis to avoid
    # degeneracy when uhat is close to z
    helper = np.zeros_like(uhat)
    use_x = np.abs(uhat[:, 2]) > 0.9
    helper[use_x, 0] = 1.0
    helper[~use_x, 2] = 1.0
    t1 = np.cross(helper, uhat)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(uhat, t1)
    return (cos_t[:, None] * uhat
            + (sin_t * np.cos(phi))[:, None] * t1
            + (sin_t * np.sin(phi))[:, None] * t2)
