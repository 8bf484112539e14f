"""Three faces of the gain operator Q+.

The same bilinear operator is estimated (i) from the strong
impact-direction form with importance-sampled partners, (ii) from the
Carleman partner/plane representation with exact plane integrals, and
(iii) through weak-form moments.  At elastic equilibrium the exact
identity Q+(M, M) = M(v) * (mean relative speed) pins the absolute
normalization.
"""
import numpy as np

from granular_kinetics import operator as O
from granular_kinetics.densities import IsotropicMaxwellian
from granular_kinetics.restitution import RestitutionModel

maxwellian = IsotropicMaxwellian(theta=1.0)
kernel = O.KernelSpec()
rng = np.random.default_rng(3)

print("elastic equilibrium, pointwise gain at |v| = 0, 1, 2:")
elastic = RestitutionModel.elastic()
print("  |v|      exact      strong (3 s.e.)        carleman (3 s.e.)")
for speed in (0.0, 1.0, 2.0):
    v = np.array([speed, 0.0, 0.0])
    exact = O.elastic_equilibrium_gain(1.0, v)
    s = O.qplus_pointwise_strong(elastic, kernel, maxwellian, maxwellian, v, 200_000, rng)
    c = O.qplus_pointwise_carleman(elastic, maxwellian, maxwellian, v, 200_000, rng)
    print(f"  {speed:.1f}  {exact:9.6f}  {s.value:9.6f} +- {3 * s.std_error:.6f}"
          f"   {c.value:9.6f} +- {3 * c.std_error:.6f}")

print("\nviscoelastic a = 0.2, strong vs Carleman at |v| = 1:")
visco = RestitutionModel.viscoelastic(0.2)
v = np.array([1.0, 0.0, 0.0])
s = O.qplus_pointwise_strong(visco, kernel, maxwellian, maxwellian, v, 200_000, rng)
c = O.qplus_pointwise_carleman(visco, maxwellian, maxwellian, v, 200_000, rng)
print(f"  strong {s.value:.6f} +- {s.std_error:.6f}; carleman {c.value:.6f} "
      f"+- {c.std_error:.6f}; agree at 3 sigma: {s.agrees_with(c)}")

print("\nweak-form moments (Maxwellian inputs):")
for label, model in (("elastic", elastic), ("constant e0=0.5",
                                            RestitutionModel.constant(0.5))):
    for name, psi in (("mass", O.psi_mass), ("v_x", O.psi_momentum(0)),
                      ("|v|^2", O.psi_energy)):
        est = O.qplus_weak_moment(model, kernel, maxwellian, maxwellian, psi,
                                  200_000, rng)
        print(f"  {label:16s} psi={name:5s}: {est.value:+.5f} +- {est.std_error:.5f}")
