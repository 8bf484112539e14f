"""Moments, relative entropy, L1 distance, entropy dissipation, and the
lower-bound / entropy-balance verdicts computed on particle ensembles.

The Maxwellian reference is parametrized by the second moment E0; its
per-component variance defaults to E0/3 so that the reference carries
the same temperature as the ensemble (the "temperature" convention; a
"literal" convention with variance E0 is available for comparison).
Relative entropy uses a Kozachenko-Leonenko k-nearest-neighbor estimate
with k = 4 and the Euclidean metric; its small-sample bias band was
calibrated once on known Maxwellian ensembles and is shipped as a
constant table.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, erf

from .errors import InputError, NonUniformGridError, NumericError

V3_UNIT_BALL = 4.0 * math.pi / 3.0

# |H_hat(M | M)| + 3 sigma observed over repeated Maxwellian calibrations
# (k = 4, Euclidean); keys are sample sizes, log-interpolated in between.
KL_BIAS_BAND = {
    10_000: 0.025,
    30_000: 0.016,
    100_000: 0.011,
    200_000: 0.008,
    500_000: 0.006,
}


def entropy_bias_band(n: int) -> float:
    """Calibrated |bias| + noise allowance for the entropy estimate."""
    sizes = np.array(sorted(KL_BIAS_BAND))
    bands = np.array([KL_BIAS_BAND[s] for s in sizes])
    return float(np.interp(np.log(n), np.log(sizes), bands))


@dataclass(frozen=True)
class MaxwellianRef:
    """Reference Maxwellian with second moment E0."""

    e0: float
    convention: str = "temperature"  # per-component variance E0/3 ("literal": E0)

    def __post_init__(self):
        if self.e0 <= 0:
            raise InputError("E0 must be positive")
        if self.convention not in ("temperature", "literal"):
            raise InputError("convention must be 'temperature' or 'literal'")

    @property
    def per_component_variance(self) -> float:
        return self.e0 / 3.0 if self.convention == "temperature" else self.e0

    @classmethod
    def from_velocities(cls, velocities: np.ndarray, convention: str = "temperature"):
        v = np.asarray(velocities, dtype=float)
        return cls(float(np.mean(np.sum(v * v, axis=1))), convention)

    def log_density(self, v: np.ndarray) -> np.ndarray:
        theta = self.per_component_variance
        v = np.asarray(v, dtype=float)
        return (-1.5 * math.log(2.0 * math.pi * theta)
                - 0.5 * np.sum(v * v, axis=-1) / theta)

    def density(self, v: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(v))

    def speed_cdf(self, r: np.ndarray) -> np.ndarray:
        theta = self.per_component_variance
        x = np.asarray(r, dtype=float) / math.sqrt(theta)
        return erf(x / math.sqrt(2.0)) - x * np.sqrt(2.0 / math.pi) * np.exp(-0.5 * x * x)


def _velocities_of(ensemble) -> np.ndarray:
    v = np.asarray(getattr(ensemble, "velocities", ensemble), dtype=float)
    if v.ndim != 2 or v.shape[1] != 3:
        raise InputError("ensemble must be an (n, 3) velocity array")
    return v


# ---------------------------------------------------------------------------
# relative entropy
# ---------------------------------------------------------------------------

def relative_entropy(ensemble, ref: MaxwellianRef, k: int = 4,
                     rng: np.random.Generator | None = None):
    """(H, std_error) for H(g | M0) = Int g log(g/M0).

    Int g log g comes from the Kozachenko-Leonenko k-NN differential
    entropy; Int g log M0 is the sample mean of log M0.  Coincident
    points break the k-NN distances: they are jittered once at 1e-9 of
    the thermal scale and the estimate retried.  The returned H is raw
    (can be slightly negative within the bias band); callers clip for
    reporting.  The error bar is the sample std of the per-point
    contributions and ignores k-NN correlations, which the calibrated
    bias band absorbs.
    """
    v = _velocities_of(ensemble)
    n = v.shape[0]
    if n < 10_000:
        raise InputError("relative entropy needs n >= 1e4 samples")

    for attempt in range(2):
        tree = cKDTree(v)
        dist, _ = tree.query(v, k=k + 1, workers=-1)
        eps = dist[:, k]
        if np.all(eps > 0):
            break
        if attempt == 1:
            raise NumericError("duplicate velocities persist after jitter")
        rng = rng or np.random.default_rng(20_19)
        v = v + rng.normal(scale=1e-9 * math.sqrt(ref.per_component_variance),
                           size=v.shape)

    log_eps = np.log(eps)
    h_diff = digamma(n) - digamma(k) + math.log(V3_UNIT_BALL) + 3.0 * log_eps.mean()
    log_m0 = ref.log_density(v)
    h_rel = -h_diff - log_m0.mean()
    per_sample = -3.0 * log_eps - log_m0
    se = float(per_sample.std(ddof=1) / math.sqrt(n))
    return float(h_rel), se


# ---------------------------------------------------------------------------
# L1 distance to the Maxwellian
# ---------------------------------------------------------------------------

def isotropy_score(velocities: np.ndarray) -> float:
    """Largest relative deviation of the velocity covariance from an
    isotropic one (0 = perfectly isotropic)."""
    v = _velocities_of(velocities)
    cov = np.cov(v.T)
    theta = np.trace(cov) / 3.0
    return float(np.max(np.abs(cov / theta - np.eye(3))))


def l1_distance_to_maxwellian(ensemble, ref: MaxwellianRef, bins: int = 64,
                              mode: str = "radial", isotropy_threshold: float = 0.05):
    """(l1, std_error, info) estimating || g - M0 ||_L1.

    Radial mode compares the speed histogram (``bins`` bins up to
    6 sqrt(E0/3)) against the Maxwellian speed law and adds the analytic
    tail mass; it assumes isotropy and attaches a warning when the
    measured isotropy score is worse than the threshold.  The 3d mode
    histograms the velocity components directly (coarser, but valid for
    anisotropic data).
    """
    v = _velocities_of(ensemble)
    n = v.shape[0]
    theta = ref.per_component_variance
    info = {"mode": mode, "isotropy_score": isotropy_score(v), "anisotropy_warning": False}

    if mode == "radial":
        if info["isotropy_score"] > isotropy_threshold:
            info["anisotropy_warning"] = True
        edges = np.linspace(0.0, 6.0 * math.sqrt(theta), bins + 1)
        speeds = np.linalg.norm(v, axis=1)
        counts, _ = np.histogram(speeds, edges)
        p_hat = counts / n
        cdf = ref.speed_cdf(edges)
        p_ref = np.diff(cdf)
        tail_ref = 1.0 - cdf[-1]
        tail_hat = 1.0 - counts.sum() / n
        l1 = float(np.sum(np.abs(p_hat - p_ref)) + abs(tail_hat - tail_ref))
        p_all = np.concatenate([p_ref, [tail_ref]])
    elif mode == "3d":
        half = 5.0 * math.sqrt(theta)
        nb = max(8, int(round(bins ** (2 / 3))))  # keep the cell count comparable
        edges = np.linspace(-half, half, nb + 1)
        counts, _ = np.histogramdd(v, (edges, edges, edges))
        p_hat = counts.ravel() / n
        marg = np.diff(0.5 * (1.0 + erf(edges / math.sqrt(2.0 * theta))))
        p_ref = np.einsum("i,j,k->ijk", marg, marg, marg).ravel()
        tail_ref = 1.0 - p_ref.sum()
        tail_hat = 1.0 - p_hat.sum()
        l1 = float(np.sum(np.abs(p_hat - p_ref)) + abs(tail_hat - tail_ref))
        p_all = np.concatenate([p_ref, [tail_ref]])
    else:
        raise InputError("mode must be 'radial' or '3d'")

    # var(|p_hat - p|) ~ (1 - 2/pi) p(1-p)/n per cell near the null
    se = float(math.sqrt((1.0 - 2.0 / math.pi) * np.sum(p_all * (1.0 - p_all)) / n))
    return l1, se, info


# ---------------------------------------------------------------------------
# entropy dissipation of the elastic operator
# ---------------------------------------------------------------------------

def entropy_dissipation_d1(ensemble, ref: MaxwellianRef, n_pairs: int,
                           rng: np.random.Generator, knn_k: int = 16):
    """(D1, std_error, info) for D1 = -Int Q_1(g,g) log(g/M0).

    Weak form with psi = log(g/M0) and elastic collisions.  The density
    surrogate is a k-NN estimate built on one half of the ensemble and
    evaluated for pairs drawn from the other half: the split removes
    self-neighbor terms, and the k-NN log-density bias is a constant
    (log k - digamma(k)) which cancels exactly in the collision
    difference psi(v') + psi(v*') - psi(v) - psi(v*).  (A kernel
    surrogate's state-dependent log-noise bias does not cancel and was
    found to swamp the signal.)  Pairs with a degenerate neighbor
    distance are skipped and counted.
    """
    v = _velocities_of(ensemble)
    n = v.shape[0]
    if n < 10_000:
        raise InputError("entropy dissipation needs n >= 1e4 samples")
    half = n // 2
    tree = cKDTree(v[:half])
    pool = v[half:]

    i = rng.integers(0, pool.shape[0], size=n_pairs)
    j = rng.integers(0, pool.shape[0], size=n_pairs)
    vi, vj = pool[i], pool[j]
    u = vi - vj
    u_norm = np.linalg.norm(u, axis=1)
    sigma = rng.normal(size=(n_pairs, 3))
    sigma /= np.linalg.norm(sigma, axis=1, keepdims=True)
    transfer = 0.5 * (u - u_norm[:, None] * sigma)  # elastic: beta = 1
    vi_post, vj_post = vi - transfer, vj + transfer

    points = np.concatenate([vi_post, vj_post, vi, vj])
    dist, _ = tree.query(points, k=knn_k, workers=-1)
    eps = dist[:, -1]
    ok = (eps > 0).reshape(4, n_pairs).all(axis=0)
    skipped = int(n_pairs - ok.sum())
    # log g ~ digamma(k) - log n_half - log V3 - 3 log eps; the constant
    # part is irrelevant below but kept so psi is a genuine log-ratio
    log_g = (digamma(knn_k) - math.log(half) - math.log(V3_UNIT_BALL)
             - 3.0 * np.log(np.where(eps > 0, eps, 1.0)))
    psi = (log_g - ref.log_density(points)).reshape(4, n_pairs)
    dpsi = psi[0] + psi[1] - psi[2] - psi[3]
    w = np.where(ok, -0.5 * u_norm * dpsi, 0.0)
    kept = w[ok]
    if kept.size < 2:
        raise NumericError("all pairs skipped by degenerate neighbor distances")
    d1 = float(kept.mean())
    se = float(kept.std(ddof=1) / math.sqrt(kept.size))
    return d1, se, {"skipped": skipped, "knn_k": knn_k}


# ---------------------------------------------------------------------------
# exponential lower-bound fit
# ---------------------------------------------------------------------------

def lower_bound_fit(snapshots, a0: float, ref: MaxwellianRef,
                    shells: int = 24, r_max_factor: float = 4.0,
                    min_threshold: float | None = None) -> dict:
    """Largest exponential minorant c0 exp(-c1 r^a0) under the shell
    densities of pooled snapshots, with per-(time, shell) violations.

    snapshots: iterable of (time, velocities).  The radial density on
    each shell (up to r_max_factor * sqrt(E0/3)) is estimated per
    snapshot and pooled; the minorant is fitted to the cell-wise lower
    confidence envelope min_t (estimate - 3 sigma), choosing (c0, c1) to
    maximize the minorant's mass.  A cell violates when its estimate
    minus 3 sigma falls below the fitted minorant; empty shells beyond a
    snapshot's data range are excluded rather than counted.  Cells whose
    lower envelope is non-positive inside the data range make a positive
    minorant impossible: c0 = 0 is returned and those cells are the
    violations.
    """
    if min_threshold is not None and a0 < min_threshold:
        raise InputError(f"a0 = {a0} is below the admissible threshold {min_threshold}")
    snapshots = [(float(t), _velocities_of(v)) for t, v in snapshots]
    if not snapshots:
        raise InputError("need at least one snapshot")
    theta = ref.per_component_variance
    r_max = r_max_factor * math.sqrt(theta)
    edges = np.linspace(0.0, r_max, shells + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    vols = V3_UNIT_BALL * (edges[1:] ** 3 - edges[:-1] ** 3)

    est = np.zeros((len(snapshots), shells))
    sig = np.zeros_like(est)
    included = np.zeros_like(est, dtype=bool)
    for row, (_, v) in enumerate(snapshots):
        speeds = np.linalg.norm(v, axis=1)
        counts, _ = np.histogram(speeds, edges)
        n = v.shape[0]
        est[row] = counts / (n * vols)
        sig[row] = np.sqrt(np.maximum(counts, 1.0)) / (n * vols)
        included[row] = ~((counts == 0) & (centers > speeds.max()))

    lower = est - 3.0 * sig
    shell_envelope = np.where(included, lower, np.inf).min(axis=0)
    usable = np.isfinite(shell_envelope)
    bad_cells = int(np.sum(included & (lower <= 0.0)))
    if np.any(shell_envelope[usable] <= 0.0):
        return {"c0": 0.0, "c1": float("nan"), "violations": bad_cells,
                "a0": a0, "r_edges": edges.tolist(),
                "note": "lower envelope non-positive inside the data range"}

    r_u, env_u = centers[usable], shell_envelope[usable]
    # scan c1; for each, the largest admissible c0 pins the minorant to
    # the envelope, then keep the (c0, c1) of largest minorant mass
    c1_grid = np.geomspace(1e-3, 1e3, 241) * theta ** (-a0 / 2.0)
    best = (0.0, float("nan"), -np.inf)
    for c1 in c1_grid:
        log_c0 = np.min(np.log(env_u) + c1 * r_u ** a0)
        mass = np.sum(np.exp(log_c0 - c1 * centers ** a0) * vols)
        if mass > best[2]:
            best = (math.exp(log_c0), float(c1), mass)
    c0, c1, _ = best

    minorant = c0 * np.exp(-c1 * centers ** a0)
    violations = int(np.sum(included & (lower < minorant[None, :] * (1.0 - 1e-12))))
    return {"c0": c0, "c1": c1, "violations": violations, "a0": a0,
            "r_edges": edges.tolist(), "minorant": minorant.tolist(),
            "excluded_cells": int(np.sum(~included))}


# ---------------------------------------------------------------------------
# entropy balance screening
# ---------------------------------------------------------------------------

def entropy_balance_check(t, h, d1, xi, window_factor: float = 10.0) -> dict:
    """Screen dH/dt + D1 against the C xi(t) bound and the shape
    H <= C xi^(1/2) (epsilon = 1).

    Needs a uniform t grid (finite differences); raises
    NonUniformGridError otherwise.  C is fitted once as the largest
    ratio |dH/dt + D1| / xi over the interior rows; the shape report
    gives max/median of H xi^(-1/2) over the final window (rows with
    xi within ``window_factor`` of its final value).
    """
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    d1 = np.asarray(d1, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if t.size < 5:
        raise InputError("need at least 5 rows")
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-6 * abs(dt[0]):
        raise NonUniformGridError("entropy balance needs a uniform time grid")

    dh = (h[2:] - h[:-2]) / (2.0 * dt[0])
    residual = dh + d1[1:-1]
    xi_mid = xi[1:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.abs(residual) / xi_mid
    finite = np.isfinite(ratios)
    c_fit = float(np.max(ratios[finite])) if np.any(finite) else float("nan")

    shape = h / np.sqrt(np.maximum(xi, 1e-300))
    window = xi <= window_factor * xi[-1]
    shape_w = shape[window & np.isfinite(shape)]
    return {
        "residual": residual.tolist(),
        "xi": xi_mid.tolist(),
        "c_fit": c_fit,
        "bounded": bool(np.all(np.isfinite(residual))),
        "shape_max": float(np.max(shape_w)) if shape_w.size else float("nan"),
        "shape_median": float(np.median(shape_w)) if shape_w.size else float("nan"),
        "shape_values": shape.tolist(),
    }


# ---------------------------------------------------------------------------
# per-step records
# ---------------------------------------------------------------------------

RECORD_SCHEMA_VERSION = 1


@dataclass
class DiagnosticRecord:
    """One output row of a run; stochastic fields carry std errors and
    are null when not enabled for the run."""

    t: float
    n: int
    m0: float
    m1: float
    m2: float
    m3: float
    m4: float
    theta: float
    momentum: tuple
    n_collisions: int
    energy_dissipated: float
    xi: float | None = None
    z: float | None = None
    entropy: float | None = None          # clipped at 0
    entropy_raw: float | None = None
    entropy_se: float | None = None
    l1_dist: float | None = None
    l1_se: float | None = None
    d1: float | None = None
    d1_se: float | None = None
    isotropy: float | None = None
    # attached by window-level post-processing (lower_bound_fit): keys
    # c0, c1, a0, violations
    lower_bound: dict | None = None
    version: int = RECORD_SCHEMA_VERSION

    def to_json(self) -> str:
        d = asdict(self)
        d["momentum"] = list(self.momentum)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "DiagnosticRecord":
        d = json.loads(line)
        d["momentum"] = tuple(d["momentum"])
        return cls(**d)


@dataclass
class DiagnosticsOptions:
    entropy: bool = False
    l1: bool = False
    d1: bool = False
    d1_pairs: int = 50_000
    d1_knn_k: int = 16
    l1_bins: int = 64
    knn_k: int = 4


def compute_record(velocities: np.ndarray, t: float, ref: MaxwellianRef,
                   opts: DiagnosticsOptions, rng: np.random.Generator,
                   n_collisions: int, energy_dissipated: float,
                   xi: float | None = None, z: float | None = None) -> DiagnosticRecord:
    v = _velocities_of(velocities)
    speeds = np.linalg.norm(v, axis=1)
    rec = DiagnosticRecord(
        t=float(t), n=v.shape[0],
        m0=1.0, m1=float(np.mean(speeds)), m2=float(np.mean(speeds ** 2)),
        m3=float(np.mean(speeds ** 3)), m4=float(np.mean(speeds ** 4)),
        theta=float(np.mean(speeds ** 2)),
        momentum=tuple(float(x) for x in v.mean(axis=0)),
        n_collisions=int(n_collisions), energy_dissipated=float(energy_dissipated),
        xi=xi, z=z)
    if opts.entropy:
        h_raw, h_se = relative_entropy(v, ref, k=opts.knn_k, rng=rng)
        rec.entropy_raw, rec.entropy_se = h_raw, h_se
        rec.entropy = max(h_raw, 0.0)
    if opts.l1:
        l1, l1_se, info = l1_distance_to_maxwellian(v, ref, bins=opts.l1_bins)
        rec.l1_dist, rec.l1_se, rec.isotropy = l1, l1_se, info["isotropy_score"]
    if opts.d1:
        d1, d1_se, _ = entropy_dissipation_d1(v, ref, opts.d1_pairs, rng,
                                              knn_k=opts.d1_knn_k)
        rec.d1, rec.d1_se = d1, d1_se
    return rec


def write_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_jsonl(path) -> list[DiagnosticRecord]:
    with open(path) as fh:
        return [DiagnosticRecord.from_json(line) for line in fh if line.strip()]
