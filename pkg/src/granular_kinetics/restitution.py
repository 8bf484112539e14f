"""Coefficient-of-normal-restitution models and their derived scalar maps.

A model encodes e(r), the ratio of post- to pre-collisional normal
relative speed as a function of the impact speed r = |u.n|.  Admissible
models have e non-increasing with values in (0, 1], theta(r) = r*e(r)
strictly increasing, and e(r) ~ 1 - a*r**gamma near r = 0.  Everything
the collision kinematics and operator estimators need derives from e:

    theta(r)   = r*e(r)                 and its inverse theta_inv
    jacobian   = d(theta)/dr            (the collision-map Jacobian)
    beta(r)    = (1 + e(r))/2
    eta(r)     = r*beta(r)              and its inverse alpha
    spreading constants ell(delta), K(delta)

All maps are vectorized over numpy arrays; models are immutable and
thread-safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InputError, ModelClassViolation, NumericError

# truncated alternating series can dip below zero at large r; clamp keeps
# the model inside the admissible class numerically
SERIES_E_MIN = 1e-9

_MAX_BRACKET_DOUBLINGS = 200
_NEWTON_BISECT_ITERS = 80


@dataclass(frozen=True)
class RestitutionModel:
    """Immutable restitution model.

    kind is one of "elastic", "constant", "viscoelastic", "series".
    For "constant", ``e0`` is the value.  For "viscoelastic", ``a`` is the
    strength in the implicit law  e + a * r**(1/5) * e**(3/5) = 1.  For
    "series", ``coeffs`` are the a_k >= 0 of the truncated expansion
    e(r) = 1 + sum_k (-1)**k a_k r**(k/5).
    """

    kind: str
    e0: float = 1.0
    a: float = 0.0
    coeffs: tuple = ()
    gamma: float = 0.0
    e_infinity: float = 0.0
    theta_inv_tolerance: float = 1e-10
    # impact-speed dilation: the model evaluates e(scale * r).  Kept as a
    # separate field so composing dilations is a single float multiply
    # and therefore exactly associative at the parameter level.
    scale: float = 1.0

    # -- constructors ------------------------------------------------------

    @classmethod
    def elastic(cls) -> "RestitutionModel":
        return cls(kind="elastic", e0=1.0, gamma=0.0, e_infinity=1.0)

    @classmethod
    def constant(cls, e0: float, theta_inv_tolerance: float = 1e-10) -> "RestitutionModel":
        if not (0.0 < e0 <= 1.0):
            raise InputError(f"constant restitution needs e0 in (0, 1], got {e0}")
        return cls(kind="constant", e0=float(e0), gamma=0.0, e_infinity=float(e0),
                   theta_inv_tolerance=theta_inv_tolerance)

    @classmethod
    def viscoelastic(cls, a: float, theta_inv_tolerance: float = 1e-10) -> "RestitutionModel":
        if not (a > 0.0):
            raise InputError(f"viscoelastic strength must be positive, got {a}")
        return cls(kind="viscoelastic", a=float(a), gamma=0.2, e_infinity=0.0,
                   theta_inv_tolerance=theta_inv_tolerance)

    @classmethod
    def series(cls, coeffs, theta_inv_tolerance: float = 1e-10) -> "RestitutionModel":
        coeffs = tuple(float(c) for c in coeffs)
        if not coeffs or any(c < 0 for c in coeffs):
            raise InputError("series model needs at least one coefficient, all >= 0")
        return cls(kind="series", coeffs=coeffs, gamma=0.2, e_infinity=0.0,
                   theta_inv_tolerance=theta_inv_tolerance)

    @classmethod
    def from_dict(cls, spec: dict) -> "RestitutionModel":
        kind = spec.get("kind", "").lower()
        tol = float(spec.get("tolerance", spec.get("theta_inv_tolerance", 1e-10)))
        if kind == "elastic":
            return cls.elastic()
        if kind == "constant":
            return cls.constant(float(spec["e0"]), tol)
        if kind == "viscoelastic":
            return cls.viscoelastic(float(spec["a"]), tol)
        if kind == "series":
            return cls.series(spec["coeffs"], tol)
        raise InputError(f"unknown restitution kind {kind!r}")

    def describe(self) -> dict:
        out = {"kind": self.kind, "gamma": self.gamma, "e_infinity": self.e_infinity}
        if self.kind == "constant":
            out["e0"] = self.e0
        elif self.kind == "viscoelastic":
            out["a"] = self.a
        elif self.kind == "series":
            out["coeffs"] = list(self.coeffs)
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out


def _as_array(r) -> tuple[np.ndarray, bool]:
    arr = np.asarray(r, dtype=float)
    return arr, (arr.ndim == 0)


def _check_finite_nonneg(r: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(r)):
        raise InputError(f"{what} must be finite")
    if np.any(r < 0):
        raise InputError(f"{what} must be non-negative")


# -- e(r) -------------------------------------------------------------------

def _viscoelastic_e(a: float, r: np.ndarray) -> np.ndarray:
    # Solve y**5 + c*y**3 = 1 with c = a*r**(1/5), then e = y**5.  The left
    # side is increasing and convex in y, so Newton from y = 1 converges
    # monotonically from above.
    c = a * np.power(r, 0.2)
    y = np.ones_like(c)
    for _ in range(60):
        y2 = y * y
        y3 = y2 * y
        g = y3 * y2 + c * y3 - 1.0
        dg = 5.0 * y2 * y2 + 3.0 * c * y2
        step = g / dg
        y = y - step
        if np.all(np.abs(step) < 1e-15):
            break
    else:
        raise NumericError("viscoelastic e(r) Newton failed",
                           residual=float(np.max(np.abs(g))))
    return y ** 5


def eval_e(model: RestitutionModel, r) -> np.ndarray | float:
    """e(r) for impact speed(s) r >= 0."""
    arr, scalar = _as_array(r)
    _check_finite_nonneg(arr, "impact speed")
    eff = arr if model.scale == 1.0 else model.scale * arr
    if model.kind == "elastic":
        out = np.ones_like(arr)
    elif model.kind == "constant":
        out = np.full_like(arr, model.e0)
    elif model.kind == "viscoelastic":
        out = _viscoelastic_e(model.a, eff)
    elif model.kind == "series":
        out = np.ones_like(arr)
        for k, ak in enumerate(model.coeffs, start=1):
            out = out + ((-1) ** k) * ak * np.power(eff, k / 5.0)
        out = np.clip(out, SERIES_E_MIN, 1.0)
    else:
        raise InputError(f"unknown model kind {model.kind!r}")
    return float(out) if scalar else out


def beta(model: RestitutionModel, r):
    """beta(r) = (1 + e(r))/2, the momentum-transfer fraction."""
    return 0.5 * (1.0 + eval_e(model, r))


def theta(model: RestitutionModel, r):
    """theta(r) = r * e(r)."""
    arr, scalar = _as_array(r)
    out = arr * eval_e(model, arr)
    return float(out) if scalar else out


# -- Jacobian ---------------------------------------------------------------

def jacobian(model: RestitutionModel, r):
    """d(theta)/dr = e(r) + r e'(r), the collision-map Jacobian (> 0).

    Analytic for elastic/constant/viscoelastic; central finite difference
    with step max(1e-6, 1e-6*r) for the series model (whose clamp makes a
    closed form unreliable at large r).
    """
    arr, scalar = _as_array(r)
    _check_finite_nonneg(arr, "impact speed")
    if model.kind == "elastic":
        out = np.ones_like(arr)
    elif model.kind == "constant":
        out = np.full_like(arr, model.e0)
    elif model.kind == "viscoelastic":
        # Implicit differentiation of e + a r^(1/5) e^(3/5) = 1 gives
        # J = e * (e^(2/5) + (2/5) a r^(1/5)) / (e^(2/5) + (3/5) a r^(1/5));
        # a dilation only moves the evaluation point: J_scaled(r) = J(s r)
        e = eval_e(model, arr)
        t = model.a * np.power(model.scale * arr, 0.2)
        e25 = np.power(e, 0.4)
        out = e * (e25 + 0.4 * t) / (e25 + 0.6 * t)
    elif model.kind == "series":
        h = np.maximum(1e-6, 1e-6 * arr)
        lo = np.maximum(arr - h, 0.0)
        hi = arr + h
        out = (theta(model, hi) - theta(model, lo)) / (hi - lo)
    else:
        raise InputError(f"unknown model kind {model.kind!r}")
    if np.any(out <= 0):
        raise ModelClassViolation(
            "non-positive Jacobian: theta(r) is not strictly increasing")
    return float(out) if scalar else out


# -- generic monotone inversion ----------------------------------------------

def _invert_increasing(func, dfunc, x: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                       tol: float, what: str) -> np.ndarray:
    """Solve func(rho) = x for an increasing func with bracket [lo, hi].

    Vectorized safeguarded Newton: a Newton step is kept only when it lands
    inside the current bracket, otherwise the bracket is bisected.  dfunc
    may be None (pure bisection).
    """
    x = np.asarray(x, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), x.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), x.shape).copy()

    # grow the upper bracket where needed
    need = func(hi) < x
    doublings = 0
    while np.any(need):
        hi[need] = hi[need] * 2.0 + 1e-300
        doublings += 1
        if doublings > _MAX_BRACKET_DOUBLINGS:
            raise NumericError(f"{what}: bracket growth failed",
                               residual=float(np.max(x[need] - func(hi[need]))))
        need = func(hi) < x

    rho = 0.5 * (lo + hi)
    for _ in range(_NEWTON_BISECT_ITERS):
        f = func(rho) - x
        below = f < 0
        lo = np.where(below, rho, lo)
        hi = np.where(below, hi, rho)
        if dfunc is not None:
            df = dfunc(rho)
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = rho - f / df
            ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
            rho = np.where(ok, newton, 0.5 * (lo + hi))
        else:
            rho = 0.5 * (lo + hi)
        width = hi - lo
        if np.all(width <= tol * np.maximum(1.0, np.abs(rho))):
            break
    f = func(rho) - x
    resid = float(np.max(np.abs(f))) if f.size else 0.0
    if not np.all(np.isfinite(rho)):
        raise NumericError(f"{what}: inversion diverged", residual=resid)
    return rho


def theta_inv(model: RestitutionModel, x):
    """Inverse of theta: the unique rho with rho*e(rho) = x."""
    arr, scalar = _as_array(x)
    _check_finite_nonneg(arr, "theta value")
    if model.kind == "elastic":
        out = arr.copy()
    elif model.kind == "constant":
        out = arr / model.e0
    else:
        out = _invert_increasing(lambda p: theta(model, p),
                                 lambda p: jacobian(model, p),
                                 arr, lo=arr, hi=np.maximum(2.0 * arr, 1.0),
                                 tol=model.theta_inv_tolerance, what="theta_inv")
    return float(out) if scalar else out


def xi_map(model: RestitutionModel, x):
    """xi(x) = (theta_inv(x) + x)/2, the pre-collision displacement."""
    arr, scalar = _as_array(x)
    out = 0.5 * (theta_inv(model, arr) + arr)
    return float(out) if scalar else out


# -- eta / alpha --------------------------------------------------------------

def eta(model: RestitutionModel, r):
    """eta(r) = r * beta(r); strictly increasing with r/2 <= eta <= r."""
    arr, scalar = _as_array(r)
    out = arr * beta(model, arr)
    return float(out) if scalar else out


def _eta_prime(model: RestitutionModel, r):
    # eta'(r) = (1 + J(r))/2
    return 0.5 * (1.0 + jacobian(model, r))


def alpha(model: RestitutionModel, r):
    """Inverse of eta; satisfies r <= alpha(r) <= 2r."""
    arr, scalar = _as_array(r)
    _check_finite_nonneg(arr, "eta value")
    if model.kind == "elastic":
        out = arr.copy()
    elif model.kind == "constant":
        out = arr / (0.5 * (1.0 + model.e0))
    else:
        out = _invert_increasing(lambda p: eta(model, p),
                                 lambda p: _eta_prime(model, p),
                                 arr, lo=arr, hi=2.0 * arr,
                                 tol=model.theta_inv_tolerance, what="alpha")
    return float(out) if scalar else out


def eta_alpha(model: RestitutionModel, r):
    """(eta(r), alpha(r)) with the sandwich bounds enforced."""
    arr, _ = _as_array(r)
    et = eta(model, arr)
    al = alpha(model, arr)
    slack = 1e-9 * np.maximum(1.0, arr)
    if np.any(et < 0.5 * arr - slack) or np.any(et > arr + slack):
        raise ModelClassViolation("eta(r) left the [r/2, r] sandwich")
    if np.any(al < arr - slack) or np.any(al > 2.0 * arr + slack):
        raise ModelClassViolation("alpha(r) left the [r, 2r] sandwich")
    if np.isscalar(r) or np.asarray(r).ndim == 0:
        return float(et), float(al)
    return et, al


def carleman_delta(model: RestitutionModel, r):
    """Delta(r) = alpha(r) / (r^2 (1 + theta'(alpha(r)))) of the Carleman
    kernel; satisfies 1/2 <= r*Delta(r) <= 2."""
    arr, scalar = _as_array(r)
    al = alpha(model, arr)
    out = al / (arr * arr * (1.0 + jacobian(model, al)))
    return float(out) if scalar else out


# -- spreading constants -------------------------------------------------------

def lipschitz_theta_inv(model: RestitutionModel, delta: float,
                        base_points: int = 256, rel_tol: float = 0.01) -> float:
    """Lipschitz constant of theta_inv on [0, delta].

    theta_inv' = 1/J(theta_inv(x)); take the max over a grid including the
    endpoints, doubling the resolution until the value is stable to
    ``rel_tol`` (grid maxima under-estimate, doubling refines).
    """
    if delta <= 0:
        raise InputError("delta must be positive")
    if model.kind == "elastic":
        return 1.0
    if model.kind == "constant":
        return 1.0 / model.e0
    pts = base_points
    prev = None
    for _ in range(8):
        x = np.linspace(0.0, delta, pts + 1)
        rho = theta_inv(model, x)
        val = float(np.max(1.0 / jacobian(model, rho)))
        if prev is not None and abs(val - prev) <= rel_tol * val:
            return val
        prev = val
        pts *= 2
    return prev


def spreading_constants(model: RestitutionModel, delta: float) -> tuple[float, float]:
    """(ell(delta), K(delta)) controlling the gain operator's spreading.

    ell(delta) = delta*sqrt(1 + beta(delta)^2) is the exact support radius
    of the gain of two ball indicators of radius delta; K(delta) =
    delta / (theta_inv(delta) * Lip_[0,delta](theta_inv)) enters the
    quantitative positivity floor.
    """
    if delta <= 0:
        raise InputError("delta must be positive")
    b = beta(model, delta)
    ell = delta * math.sqrt(1.0 + b * b)
    k = delta / (theta_inv(model, delta) * lipschitz_theta_inv(model, delta))
    return ell, min(k, 1.0)


# -- scaling and thresholds ----------------------------------------------------

def scale_model(model: RestitutionModel, lam: float) -> RestitutionModel:
    """Model for e_lam(r) := e(lam * r).

    Dilations compose by one float multiply of the scale field, so
    scale(scale(m, l1), l2) == scale(m, l1*l2) exactly at the parameter
    level.
    """
    if not (lam > 0.0) or not math.isfinite(lam):
        raise InputError(f"scale factor must be positive and finite, got {lam}")
    if lam == 1.0 or model.kind in ("elastic", "constant"):
        return model
    return replace(model, scale=model.scale * lam)


def a0_threshold(e0: float) -> float:
    """Infimum admissible tail exponent 2*ln2 / ln(1 + ((1+e0)/2)^2)."""
    if not (0.0 <= e0 <= 1.0):
        raise InputError(f"e0 must be in [0, 1], got {e0}")
    return 2.0 * math.log(2.0) / math.log(1.0 + ((1.0 + e0) / 2.0) ** 2)


# -- class-membership audit ----------------------------------------------------

def validate_model(model: RestitutionModel, r_min: float = 1e-4, r_max: float = 1e4,
                   n: int = 64) -> None:
    """Sampled audit of the admissibility constraints on a log grid.

    Raises ModelClassViolation on failure.  Used by tests and by config
    validation before a run starts.
    """
    r = np.geomspace(r_min, r_max, n)
    e = eval_e(model, r)
    if np.any(e <= 0) or np.any(e > 1.0 + 1e-12):
        raise ModelClassViolation("e(r) left (0, 1]")
    if np.any(np.diff(e) > 1e-12):
        raise ModelClassViolation("e(r) is not non-increasing")
    th = theta(model, r)
    if np.any(np.diff(th) <= 0):
        raise ModelClassViolation("theta(r) is not strictly increasing")
    b = beta(model, r)
    if np.any(b <= 0.5 - 1e-12) or np.any(b > 1.0 + 1e-12):
        raise ModelClassViolation("beta(r) left (1/2, 1]")
    jacobian(model, r)  # raises if non-positive
