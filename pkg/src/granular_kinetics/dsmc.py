"""Direct simulation Monte Carlo for the homogeneous cooling gas.

The particle system realizes the sigma-form operator: each unordered
pair {i, j} collides at rate Phi(|v_i - v_j|)/N with a uniformly random
deflection sigma, which reproduces the weak form exactly in expectation.
Pairs are proposed by a random perfect matching per step (Nanbu-
Babovsky), so no particle can collide twice in a step, and a candidate
pair is accepted with probability Phi(|u|) dt (N-1)/N.  A tracked
majorant U of Phi bounds the acceptance probability: it is refreshed
from the current ensemble, auto-inflates (and the step re-runs) if an
observed |u| ever exceeds it, and the run aborts if it inflates by more
than 2^10 over its initial value.

Two flows are integrated:

- original:  d/dtau f = Q_e(f, f); collisions only, algebraic cooling.
- rescaled:  d/dt g + xi(t) div(v g) = Q_{e_t}(g, g) with
  e_t(r) = e(z(t) r); Lie splitting per step of (1) collisions with the
  scaled model, (2) the exact exponential drift v <- v e^(xi dt), and
  (3) z <- z e^(-xi dt).  In self-consistent mode xi is chosen each
  step so the drift returns the second moment to its initial value
  exactly (the measured dissipation divided by 2 Theta dt, to leading
  order); in prescribed mode xi(t) follows a user table.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import DiagnosticsOptions, MaxwellianRef, compute_record
from .errors import InputError, InstabilityError, SelfConsistencyError, TimestepError
from .kinematics import post_collide_sigma, random_unit_vectors
from .operator import KernelSpec
from .restitution import RestitutionModel, scale_model
from .rngtools import SeedLineage
from .scaling import ScalingTrajectory, build_trajectory

MAJORANT_CEILING = 2 ** 10


@dataclass
class VelocityEnsemble:
    """N particle velocities with bookkeeping."""

    velocities: np.ndarray
    time: float = 0.0
    seed_lineage: SeedLineage | None = None

    @property
    def n(self) -> int:
        return self.velocities.shape[0]

    @property
    def second_moment(self) -> float:
        return float(np.mean(np.sum(self.velocities ** 2, axis=1)))

    def copy(self) -> "VelocityEnsemble":
        return VelocityEnsemble(self.velocities.copy(), self.time, self.seed_lineage)


@dataclass(frozen=True)
class InitialCondition:
    """Sampling recipe for f0.

    kind: "maxwellian" (theta = per-component variance, so E0 = 3 theta),
    "two_temperature" (equal-weight mixture over ``thetas``), or
    "uniform_ball" (radius R, E0 = 3 R^2 / 5).
    """

    kind: str = "maxwellian"
    theta: float = 1.0
    thetas: tuple = (0.25, 1.75)
    fractions: tuple = (0.5, 0.5)
    radius: float = 1.0

    @property
    def target_second_moment(self) -> float:
        if self.kind == "maxwellian":
            return 3.0 * self.theta
        if self.kind == "two_temperature":
            return 3.0 * float(np.dot(self.fractions, self.thetas))
        if self.kind == "uniform_ball":
            return 3.0 * self.radius ** 2 / 5.0
        raise InputError(f"unknown initial condition {self.kind!r}")


def init_ensemble(n: int, initial: InitialCondition, seed: int | SeedLineage) -> VelocityEnsemble:
    """Sample f0, then shift to exactly zero mean and rescale to exactly
    the target second moment (so Theta(0) = E0 by construction)."""
    if n < 1000:
        raise InputError("ensembles smaller than 1e3 particles are not meaningful here")
    lineage = seed if isinstance(seed, SeedLineage) else SeedLineage(int(seed))
    rng = lineage.child("init").rng()

    if initial.kind == "maxwellian":
        v = rng.normal(scale=math.sqrt(initial.theta), size=(n, 3))
    elif initial.kind == "two_temperature":
        comp = rng.choice(len(initial.thetas), size=n, p=np.asarray(initial.fractions))
        scales = np.sqrt(np.asarray(initial.thetas, dtype=float))[comp]
        v = rng.normal(size=(n, 3)) * scales[:, None]
    elif initial.kind == "uniform_ball":
        z = rng.normal(size=(n, 3))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        v = initial.radius * rng.uniform(size=(n, 1)) ** (1.0 / 3.0) * z
    else:
        raise InputError(f"unknown initial condition {initial.kind!r}")

    v -= v.mean(axis=0)
    current = np.mean(np.sum(v * v, axis=1))
    v *= math.sqrt(initial.target_second_moment / current)
    return VelocityEnsemble(v, 0.0, lineage)


@dataclass
class MajorantState:
    """Tracked upper bound of the kinetic potential Phi(|u|)."""

    value: float
    initial: float
    inflations: int = 0
    margin: float = 1.5

    @classmethod
    def from_velocities(cls, velocities: np.ndarray, margin: float) -> "MajorantState":
        u0 = 4.0 * float(np.max(np.linalg.norm(velocities, axis=1)))
        return cls(value=u0, initial=u0, margin=margin)

    def refresh(self, velocities: np.ndarray) -> None:
        self.value = 4.0 * float(np.max(np.linalg.norm(velocities, axis=1)))

    def inflate_to_cover(self, observed: float) -> None:
        while self.value < observed:
            self.value *= self.margin
            self.inflations += 1
            if self.value > MAJORANT_CEILING * self.initial:
                raise InstabilityError(
                    f"majorant inflated beyond {MAJORANT_CEILING}x its initial value")


@dataclass
class CollisionTally:
    attempted: int = 0
    accepted: int = 0
    energy_dissipated: float = 0.0  # sum over collisions of the pair energy drop

    def merge(self, other: "CollisionTally") -> "CollisionTally":
        self.attempted += other.attempted
        self.accepted += other.accepted
        self.energy_dissipated += other.energy_dissipated
        return self


@dataclass
class SolverConfig:
    mode: str = "original"  # original | rescaled_self_consistent | rescaled_prescribed_xi
    model: RestitutionModel = field(default_factory=RestitutionModel.elastic)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    dt: float = 0.01
    dt_mode: str = "auto"   # "auto": dt = target_prob / majorant rate; "fixed": use dt
    target_collision_prob: float = 0.2
    majorant_margin: float = 1.5
    xi_table: tuple = ()    # rows (t, xi) for the prescribed mode
    theta_drift_tolerance: float = 0.05

    def __post_init__(self):
        if self.dt <= 0:
            raise InputError("dt must be positive")
        if self.majorant_margin <= 1.0:
            raise InputError("majorant_margin must exceed 1")
        if self.mode not in ("original", "rescaled_self_consistent", "rescaled_prescribed_xi"):
            raise InputError(f"unknown solver mode {self.mode!r}")
        if self.mode == "rescaled_prescribed_xi" and len(self.xi_table) == 0:
            raise InputError("prescribed-xi mode needs a non-empty xi table")


def collide_step(ensemble: VelocityEnsemble, config: SolverConfig, dt: float,
                 rng: np.random.Generator, majorant: MajorantState,
                 model: RestitutionModel | None = None) -> CollisionTally:
    """One collision substep; mutates the ensemble in place.

    Momentum is conserved pair by pair; the tally's energy_dissipated is
    the summed pair energy drop, so mean|v|^2 decreases by exactly
    energy_dissipated / n (a bookkeeping identity, not an estimate).
    """
    v = ensemble.velocities
    n = v.shape[0]
    model = model or config.model
    pair_factor = (n - 1) / n if n % 2 == 0 else 1.0

    for _attempt in range(MAJORANT_CEILING):
        perm = rng.permutation(n)
        k = n // 2
        left, right = perm[:k], perm[k:2 * k]
        u = v[left] - v[right]
        u_norm = np.linalg.norm(u, axis=1)
        theta_system = ensemble.second_moment if config.kernel.potential == "pseudo_maxwellian" else None
        rate = config.kernel.rate(u_norm, theta_system)
        observed = float(rate.max()) if rate.size else 0.0
        if observed > majorant.value:
            majorant.inflate_to_cover(observed)
            continue  # re-run the step under the inflated bound
        p_cap = majorant.value * dt * pair_factor
        if p_cap >= 0.5:
            raise TimestepError(
                f"per-particle collision probability bound {p_cap:.3f} >= 0.5; shrink dt")
        accept = rng.uniform(size=k) < rate * dt * pair_factor
        ia, ja = left[accept], right[accept]
        tally = CollisionTally(attempted=int(k), accepted=int(ia.size))
        if ia.size:
            sigma = random_unit_vectors(rng, ia.size)
            vi, vj = v[ia], v[ja]
            before = np.sum(vi * vi, axis=1) + np.sum(vj * vj, axis=1)
            vi_new, vj_new = post_collide_sigma(model, vi, vj, sigma)
            after = np.sum(vi_new * vi_new, axis=1) + np.sum(vj_new * vj_new, axis=1)
            v[ia], v[ja] = vi_new, vj_new
            tally.energy_dissipated = float(np.sum(before - after))
        return tally
    raise InstabilityError("collision step failed to stabilize its majorant")


@dataclass
class RunResult:
    records: list
    ensemble: VelocityEnsemble
    totals: CollisionTally
    trajectory: ScalingTrajectory | None = None
    snapshots: list = field(default_factory=list)
    reference: MaxwellianRef | None = None


def _schedule(times, t_end: float) -> np.ndarray:
    ts = np.asarray(sorted(set(float(t) for t in times if 0.0 <= t <= t_end + 1e-12)))
    if ts.size == 0 or ts[0] > 0.0:
        ts = np.concatenate([[0.0], ts])
    if ts[-1] < t_end:
        ts = np.concatenate([ts, [t_end]])
    return ts


def log_schedule(t_end: float, per_decade: int = 12) -> np.ndarray:
    """Record times log-spaced in (1 + t), endpoints included."""
    decades = math.log10(1.0 + t_end)
    k = max(2, int(round(per_decade * decades)))
    return np.geomspace(1.0, 1.0 + t_end, k + 1) - 1.0


def _nominal_dt(config: SolverConfig, majorant: MajorantState, n: int) -> float:
    if config.dt_mode == "fixed":
        return config.dt
    pair_factor = (n - 1) / n if n % 2 == 0 else 1.0
    return config.target_collision_prob / (majorant.value * pair_factor)


def run_original(config: SolverConfig, ensemble: VelocityEnsemble, tau_end: float,
                 record_times=None, snapshot_times=(), diagnostics: DiagnosticsOptions | None = None,
                 gamma_for_fit: float | None = None) -> RunResult:
    """Advance the free-cooling flow to tau_end.

    Records land exactly on the requested times (default: log-spaced in
    1 + tau).  Returns the scaling trajectory built from the recorded
    temperature series, with the cooling-law fit attached when the span
    allows it.
    """
    if config.mode != "original":
        raise InputError("run_original needs mode='original'")
    opts = diagnostics or DiagnosticsOptions()
    rec_times = _schedule(record_times if record_times is not None
                          else log_schedule(tau_end), tau_end)
    snap_times = sorted(float(t) for t in snapshot_times)
    ref = MaxwellianRef(ensemble.second_moment)
    rng = ensemble.seed_lineage.child("collisions").rng()
    rec_rng_root = ensemble.seed_lineage.child("records")

    majorant = MajorantState.from_velocities(ensemble.velocities, config.majorant_margin)
    totals = CollisionTally()
    records = []
    snapshots = []
    tau = 0.0
    next_rec = 0
    next_snap = 0

    def emit(time_now: float) -> None:
        nonlocal next_rec
        rec_rng = rec_rng_root.child(next_rec).rng()
        records.append(compute_record(ensemble.velocities, time_now, ref, opts, rec_rng,
                                      totals.accepted, totals.energy_dissipated))
        next_rec += 1

    emit(0.0)
    if snap_times and snap_times[0] == 0.0:
        snapshots.append((0.0, ensemble.velocities.copy()))
        next_snap += 1

    while tau < tau_end - 1e-12:
        majorant.refresh(ensemble.velocities)
        dt = _nominal_dt(config, majorant, ensemble.n)
        boundaries = [rec_times[next_rec]] if next_rec < rec_times.size else []
        if next_snap < len(snap_times):
            boundaries.append(snap_times[next_snap])
        boundary = min(boundaries) if boundaries else tau_end
        dt = min(dt, boundary - tau, tau_end - tau)
        if dt <= 0:
            dt = 1e-12
        totals.merge(collide_step(ensemble, config, dt, rng, majorant))
        tau += dt
        ensemble.time = tau
        if next_snap < len(snap_times) and tau >= snap_times[next_snap] - 1e-12:
            snapshots.append((tau, ensemble.velocities.copy()))
            next_snap += 1
        if next_rec < rec_times.size and tau >= rec_times[next_rec] - 1e-12:
            emit(tau)

    taus = np.array([r.t for r in records])
    energies = np.array([r.m2 for r in records])
    trajectory = build_trajectory(taus, energies) if taus.size >= 3 else None
    if trajectory is not None and gamma_for_fit is not None:
        from .scaling import haff_fit
        try:
            haff_fit(trajectory, gamma_for_fit)
        except InputError:
            pass  # span too short; leave the fit empty
    return RunResult(records, ensemble, totals, trajectory, snapshots, ref)


def _xi_from_table(table, t: float) -> float:
    ts = np.array([row[0] for row in table], dtype=float)
    xs = np.array([row[1] for row in table], dtype=float)
    return float(np.interp(t, ts, xs))


def run_rescaled(config: SolverConfig, ensemble: VelocityEnsemble, t_end: float,
                 record_times=None, snapshot_times=(),
                 diagnostics: DiagnosticsOptions | None = None) -> RunResult:
    """Advance the rescaled flow (collisions + anti-drift) to t_end."""
    if config.mode not in ("rescaled_self_consistent", "rescaled_prescribed_xi"):
        raise InputError("run_rescaled needs a rescaled mode")
    opts = diagnostics or DiagnosticsOptions()
    rec_times = _schedule(record_times if record_times is not None
                          else np.linspace(0.0, t_end, 33), t_end)
    snap_times = sorted(float(t) for t in snapshot_times)
    e_target = ensemble.second_moment
    ref = MaxwellianRef(e_target)
    rng = ensemble.seed_lineage.child("collisions").rng()
    rec_rng_root = ensemble.seed_lineage.child("records")

    majorant = MajorantState.from_velocities(ensemble.velocities, config.majorant_margin)
    totals = CollisionTally()
    records = []
    snapshots = []
    t = 0.0
    z = 1.0
    xi_now: float | None = None
    next_rec = 0
    next_snap = 0

    def emit(time_now: float) -> None:
        nonlocal next_rec
        rec_rng = rec_rng_root.child(next_rec).rng()
        records.append(compute_record(ensemble.velocities, time_now, ref, opts, rec_rng,
                                      totals.accepted, totals.energy_dissipated,
                                      xi=xi_now, z=z))
        next_rec += 1

    emit(0.0)
    if snap_times and snap_times[0] == 0.0:
        snapshots.append((0.0, ensemble.velocities.copy()))
        next_snap += 1

    while t < t_end - 1e-12:
        majorant.refresh(ensemble.velocities)
        dt = _nominal_dt(config, majorant, ensemble.n)
        boundaries = [rec_times[next_rec]] if next_rec < rec_times.size else []
        if next_snap < len(snap_times):
            boundaries.append(snap_times[next_snap])
        boundary = min(boundaries) if boundaries else t_end
        dt = min(dt, boundary - t, t_end - t)
        if dt <= 0:
            dt = 1e-12

        model_t = scale_model(config.model, z)
        totals.merge(collide_step(ensemble, config, dt, rng, majorant, model=model_t))
        e_coll = ensemble.second_moment
        if config.mode == "rescaled_self_consistent":
            # exact closure: the drift returns the second moment to E0
            xi_now = math.log(e_target / e_coll) / (2.0 * dt) if e_coll > 0 else 0.0
        else:
            xi_now = _xi_from_table(config.xi_table, t)
        growth = math.exp(xi_now * dt)
        ensemble.velocities *= growth
        z *= math.exp(-xi_now * dt)
        t += dt
        ensemble.time = t

        if config.mode == "rescaled_self_consistent":
            drift = abs(ensemble.second_moment - e_target) / e_target
            if drift > config.theta_drift_tolerance:
                raise SelfConsistencyError(
                    f"temperature drifted {drift:.2%} from E0 in self-consistent mode")

        if next_snap < len(snap_times) and t >= snap_times[next_snap] - 1e-12:
            snapshots.append((t, ensemble.velocities.copy()))
            next_snap += 1
        if next_rec < rec_times.size and t >= rec_times[next_rec] - 1e-12:
            emit(t)

    return RunResult(records, ensemble, totals, None, snapshots, ref)


def rescale_snapshots(snapshots, energy_tau: ScalingTrajectory):
    """Push Original-mode snapshots through the self-similar change of
    variables: at original time tau the rescaled sample is V(tau) w with
    V = sqrt(E(0)/E(tau)), living at rescaled time t(tau).

    E(tau) is read off the snapshot itself (its empirical second moment
    is the temperature at that instant), which avoids interpolation bias
    from the record grid; the trajectory supplies the clock map t(tau).
    Returns rows (t, rescaled velocities).  The V(tau)^3 density
    prefactor is automatic at the sample level (mass is carried by the
    particles).
    """
    e0 = energy_tau.energy[0]
    out = []
    for tau, velocities in snapshots:
        e_here = float(np.mean(np.sum(velocities * velocities, axis=1)))
        v_scale = math.sqrt(e0 / e_here)
        out.append((float(energy_tau.t_of_tau(tau)), velocities * v_scale))
    return out
