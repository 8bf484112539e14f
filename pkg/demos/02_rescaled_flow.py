"""The self-similar rescaled flow: frozen temperature, shrinking
restitution scale.

In rescaled variables the anti-drift term xi(t) div(v g) balances the
collisional cooling, the second moment stays pinned at E0, and the
effective restitution becomes e_t(r) = e(z(t) r) with z shrinking, so
collisions look progressively more elastic.  The run checks the
measured xi(t) and z(t) against the closed-form two-sided brackets
built from a paired free-cooling run.
"""
import numpy as np

from granular_kinetics import dsmc, scaling
from granular_kinetics.restitution import RestitutionModel
from granular_kinetics.rngtools import SeedLineage

model = RestitutionModel.viscoelastic(0.2)

# paired original run provides the envelope constants
ens = dsmc.init_ensemble(50_000, dsmc.InitialCondition("maxwellian", theta=1.0),
                         SeedLineage(11, ("original",)))
orig = dsmc.run_original(dsmc.SolverConfig(mode="original", model=model),
                         ens, tau_end=500.0, gamma_for_fit=0.2)
fit = orig.trajectory.haff
print(f"paired cooling run: exponent {fit['exponent']:+.3f}, "
      f"c1={fit['c1']:.3g} c2={fit['c2']:.3g} A1={fit['A1']:.3g} A2={fit['A2']:.3g}")

ens = dsmc.init_ensemble(50_000, dsmc.InitialCondition("maxwellian", theta=1.0),
                         SeedLineage(11, ("rescaled",)))
config = dsmc.SolverConfig(mode="rescaled_self_consistent", model=model)
res = dsmc.run_rescaled(config, ens, t_end=40.0,
                        record_times=np.linspace(0, 40, 21))

rows = [r for r in res.records if r.xi is not None]
t = np.array([r.t for r in rows])
br = scaling.xi_z_brackets(t, 0.2, fit["c1"], fit["c2"], fit["A1"], fit["A2"],
                           e0=float(orig.trajectory.energy[0]))

print("\n    t      Theta       xi     [xi_lo, xi_hi]       z      [z_lo, z_hi]")
inside = 0
for i, r in enumerate(rows):
    ok = (br["xi_lo"][i] * 0.999 <= r.xi <= br["xi_hi"][i] * 1.001
          and br["z_lo"][i] * 0.999 <= r.z <= br["z_hi"][i] * 1.001)
    inside += ok
    print(f"{r.t:7.2f} {r.theta:9.5f} {r.xi:8.4f}  [{br['xi_lo'][i]:.4f}, "
          f"{br['xi_hi'][i]:.4f}]  {r.z:8.5f} [{br['z_lo'][i]:.5f}, {br['z_hi'][i]:.5f}]"
          f"  {'ok' if ok else 'OUT'}")
print(f"\nrows inside both brackets: {inside}/{len(rows)}")
print(f"temperature drift over the run: "
      f"{max(abs(r.theta - rows[0].theta) / rows[0].theta for r in rows):.2e}")
