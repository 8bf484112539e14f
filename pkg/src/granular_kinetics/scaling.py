"""Bookkeeping between the original (cooling) and rescaled flows.

From a temperature trajectory E(tau) the rescaled clock and scales are

    V(tau) = sqrt(E(0)/E(tau))        t(tau) = Int_0^tau dr / V(r)
    s = inverse of t                   xi(t) = dV/dtau at s(t)
    z(t)  = 1 / V(s(t))

The cooling law E(tau) ~ (1+tau)^(-2/(1+gamma)) is fitted on the final
decade of the trajectory, and the fitted envelope constants feed the
closed-form two-sided brackets for s(t), xi(t) and z(t).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


def _smoothed_derivative(x: np.ndarray, y: np.ndarray, window: int = 5) -> np.ndarray:
    """dy/dx by local least-squares quadratics over ``window`` points.

    Handles non-uniform grids (trajectories are recorded log-spaced) and
    damps Monte Carlo noise the way a Savitzky-Golay stencil would on a
    uniform grid.
    """
    n = x.size
    if n < 3:
        raise InputError("need at least 3 samples to differentiate")
    window = max(3, min(window | 1, n))  # odd, at most n
    half = window // 2
    out = np.empty(n)
    for i in range(n):
        lo = max(0, min(i - half, n - window))
        sl = slice(lo, lo + window)
        xs = x[sl] - x[i]
        coeffs = np.polyfit(xs, y[sl], 2)
        out[i] = coeffs[1]  # derivative of the local quadratic at xs = 0
    return out


@dataclass
class ScalingTrajectory:
    """Row-aligned series linking original and rescaled variables.

    Row i holds (tau_i, E_i, V_i, t_i = t(tau_i), xi_i = xi(t_i),
    z_i = z(t_i)).
    """

    tau: np.ndarray
    energy: np.ndarray
    v_scale: np.ndarray
    t: np.ndarray
    xi: np.ndarray
    z: np.ndarray
    haff: dict = field(default_factory=dict)

    def s_of_t(self, t_query) -> np.ndarray:
        """Inverse clock s(t) by monotone interpolation of the rows."""
        return np.interp(t_query, self.t, self.tau)

    def t_of_tau(self, tau_query) -> np.ndarray:
        return np.interp(tau_query, self.tau, self.t)

    def as_rows(self) -> list[dict]:
        return [{"tau": float(a), "E": float(b), "V": float(c), "t": float(d),
                 "xi": float(e), "z": float(f)}
                for a, b, c, d, e, f in zip(self.tau, self.energy, self.v_scale,
                                            self.t, self.xi, self.z)]


def build_trajectory(tau: np.ndarray, energy: np.ndarray,
                     deriv_window: int = 5) -> ScalingTrajectory:
    """Derive (V, t, xi, z) from a sampled temperature series."""
    tau = np.asarray(tau, dtype=float)
    energy = np.asarray(energy, dtype=float)
    if tau.ndim != 1 or tau.size != energy.size or tau.size < 3:
        raise InputError("need matched 1-d tau/E series with >= 3 rows")
    if np.any(np.diff(tau) <= 0):
        raise InputError("tau grid must be strictly increasing")
    if np.any(energy <= 0) or not np.all(np.isfinite(energy)):
        raise InputError("E must be positive and finite")

    v = np.sqrt(energy[0] / energy)
    inv_v = 1.0 / v
    # t measured from the first row (runs start at tau = 0)
    t = np.concatenate([[0.0], np.cumsum(0.5 * (inv_v[1:] + inv_v[:-1]) * np.diff(tau))])
    dv_dtau = _smoothed_derivative(tau, v, deriv_window)
    xi = dv_dtau  # xi(t_i) = dV/dtau at s(t_i) = tau_i
    z = 1.0 / v
    return ScalingTrajectory(tau, energy, v, t, xi, z)


def haff_fit(traj: ScalingTrajectory, gamma: float, deriv_window: int = 5,
             bracket_slack: float = 1e-3) -> dict:
    """Cooling-law fit and envelope constants from a trajectory.

    exponent: least-squares slope of log E vs log(1+tau) over the final
    decade of (1+tau).  c1/c2: min/max of E (1+tau)^(2/(1+gamma)) over the
    run.  A1/A2: min/max of (-dE/dtau / 2) / E^((3+gamma)/2).
    bracket_violations counts rows whose (s, xi, z) leave the closed-form
    brackets built from those constants; ``bracket_slack`` is the relative
    tolerance absorbing quadrature and stencil error (for exact power
    laws the brackets collapse to zero width, so some slack is required).
    """
    tau, energy = traj.tau, traj.energy
    one_plus = 1.0 + tau
    span = one_plus[-1] / one_plus[0]
    if span < 100.0:
        raise InputError("trajectory must span at least two decades of (1+tau)")
    final = one_plus >= one_plus[-1] / 10.0
    slope, _ = np.polyfit(np.log(one_plus[final]), np.log(energy[final]), 1)

    exponent_theory = 2.0 / (1.0 + gamma)
    envelope = energy * one_plus ** exponent_theory
    c1, c2 = float(envelope.min()), float(envelope.max())

    de = _smoothed_derivative(tau, energy, deriv_window)
    rate = -0.5 * de / energy ** ((3.0 + gamma) / 2.0)
    interior = slice(1, -1)  # one-sided stencils at the ends are noisier
    a1, a2 = float(np.min(rate[interior])), float(np.max(rate[interior]))

    violations = 0
    if gamma > 0 and a1 > 0:
        br = xi_z_brackets(traj.t, gamma, c1, c2, a1, a2, float(energy[0]))
        # first/last rows use one-sided derivative stencils whose bias can
        # leave the envelope built from the interior; they are not counted
        s = bracket_slack

        def count(values, lo, hi, scale):
            v, l, h, sc = (x[interior] for x in (values, lo, hi, scale))
            return int(np.sum((v < l - s * sc) | (v > h + s * sc)))

        violations += count(traj.tau, br["s_lo"], br["s_hi"],
                            np.maximum(traj.tau, 1.0))
        violations += count(traj.xi, br["xi_lo"], br["xi_hi"], br["xi_hi"])
        violations += count(traj.z, br["z_lo"], br["z_hi"], br["z_hi"])
    fit = {"exponent": float(slope), "exponent_theory": -exponent_theory,
           "c1": c1, "c2": c2, "A1": a1, "A2": a2,
           "bracket_violations": violations}
    traj.haff = fit
    return fit


def xi_z_brackets(t, gamma: float, c1: float, c2: float, a1: float, a2: float,
                  e0: float = 1.0) -> dict:
    """Closed-form two-sided bounds for s(t), xi(t), z(t).

    The time-dilation constants inside (1 + gamma/(1+gamma) t/sqrt(.))
    come from the envelope of the *normalized* energy E/E(0), so the
    printed forms hold verbatim when E(0) = 1; for general E(0) the
    bounds use chat_i = c_i/E(0) there (and the unnormalized c_i in the
    xi prefactor, which also carries sqrt(E(0))).  gamma = 0 is flagged
    and handled with the exponential specialization (the (1+gamma)/gamma
    exponents degenerate).  Also returns
    cbar = (A2/A1) (c2/c1)^((1+gamma)/2) >= 1, the constant controlling
    Int_t^{s+t} xi <= cbar * Int_0^s xi.
    """
    if not (0 < c1 <= c2 and 0 < a1 <= a2):
        raise InputError("need 0 < c1 <= c2 and 0 < A1 <= A2")
    if e0 <= 0:
        raise InputError("E(0) must be positive")
    t = np.asarray(t, dtype=float)
    cbar = (a2 / a1) * (c2 / c1) ** ((1.0 + gamma) / 2.0)
    root_e0 = math.sqrt(e0)
    rc1, rc2 = math.sqrt(c1 / e0), math.sqrt(c2 / e0)  # sqrt(chat_i)
    if gamma == 0.0:
        return {
            "gamma_zero": True,
            "s_lo": np.expm1(t / rc2),
            "s_hi": np.expm1(t / rc1),
            "xi_lo": np.full_like(t, a1 * root_e0),
            "xi_hi": np.full_like(t, a2 * root_e0),
            "z_lo": rc1 * np.exp(-t / rc1),
            "z_hi": rc2 * np.exp(-t / rc2),
            "cbar": float(cbar),
        }
    gg = gamma / (1.0 + gamma)
    return {
        "gamma_zero": False,
        "s_lo": (1.0 + gg * t / rc2) ** (1.0 / gg) - 1.0,
        "s_hi": (1.0 + gg * t / rc1) ** (1.0 / gg) - 1.0,
        "xi_lo": a1 * root_e0 * c1 ** (gamma / 2.0) / (1.0 + gg * t / rc1),
        "xi_hi": a2 * root_e0 * c2 ** (gamma / 2.0) / (1.0 + gg * t / rc2),
        "z_lo": rc1 * (1.0 + gg * t / rc1) ** (-1.0 / gamma),
        "z_hi": rc2 * (1.0 + gg * t / rc2) ** (-1.0 / gamma),
        "cbar": float(cbar),
    }


def check_xi_integral_bound(traj: ScalingTrajectory, cbar: float,
                            n_offsets: int = 8) -> int:
    """Count violations of Int_t^{s+t} xi <= cbar Int_0^s xi on the rows."""
    t, xi = traj.t, np.maximum(traj.xi, 0.0)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (xi[1:] + xi[:-1]) * np.diff(t))])
    integral = lambda a, b: np.interp(b, t, cum) - np.interp(a, t, cum)
    bad = 0
    offsets = np.linspace(0, t[-1] / 2, n_offsets)
    spans = np.linspace(t[-1] / 16, t[-1] / 2, n_offsets)
    for t0 in offsets:
        for s in spans:
            if t0 + s > t[-1]:
                continue
            if integral(t0, t0 + s) > cbar * integral(0.0, s) * (1 + 1e-9):
                bad += 1
    return bad
