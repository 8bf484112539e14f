import math

import numpy as np
import pytest
from scipy import integrate

from granular_kinetics import operator as O
from granular_kinetics import restitution as R
from granular_kinetics.densities import BallIndicator, GaussianKDE, IsotropicMaxwellian
from granular_kinetics.errors import (InputError, InsufficientSamplesError,
                                      UnsupportedKernelError)

THETA = 1.0
MAXW = IsotropicMaxwellian(THETA)
HS = O.KernelSpec()


def test_kernel_normalization_true_hard_sphere():
    assert HS.angular_mass_defect() == 0.0


def test_kernel_normalization_custom():
    good = O.KernelSpec(angular="custom", b0=lambda s: abs(s) / (4 * math.pi))
    assert good.angular_mass_defect() < 1e-6
    bad = O.KernelSpec(angular="custom", b0=lambda s: s * s / (4 * math.pi))
    assert bad.angular_mass_defect() > 1e-3


def test_strong_matches_exact_elastic_gain(rng):
    el = R.RestitutionModel.elastic()
    for speed in (0.0, 0.7, 1.5, 3.0):
        v = np.array([speed, 0.0, 0.0])
        est = O.qplus_pointwise_strong(el, HS, MAXW, MAXW, v, 150_000, rng)
        exact = O.elastic_equilibrium_gain(THETA, v)
        assert abs(est.value - exact) < 4 * est.std_error


def test_carleman_matches_exact_elastic_gain(rng):
    el = R.RestitutionModel.elastic()
    for speed in (0.0, 1.0, 2.5):
        v = np.array([speed, 0.0, 0.0])
        est = O.qplus_pointwise_carleman(el, MAXW, MAXW, v, 150_000, rng)
        exact = O.elastic_equilibrium_gain(THETA, v)
        assert abs(est.value - exact) < 4 * est.std_error


def test_strong_carleman_cross_representation(rng, any_model):
    v = np.array([0.9, 0.0, 0.0])
    s = O.qplus_pointwise_strong(any_model, HS, MAXW, MAXW, v, 120_000, rng)
    c = O.qplus_pointwise_carleman(any_model, MAXW, MAXW, v, 120_000, rng)
    assert s.agrees_with(c)


def test_carleman_rejects_non_hard_sphere(rng):
    pm = O.KernelSpec(potential="pseudo_maxwellian")
    with pytest.raises(UnsupportedKernelError):
        O.qplus_pointwise_carleman(R.RestitutionModel.elastic(), MAXW, MAXW,
                                   np.zeros(3), 100, rng, kernel=pm)


def test_indicator_support(rng):
    ball = BallIndicator(np.zeros(3), 1.0)
    el = R.RestitutionModel.elastic()
    outside = O.qplus_pointwise_strong(el, HS, ball, ball,
                                       np.array([1.5, 0, 0]), 40_000, rng)
    assert outside.value == 0.0  # |v| > sqrt(2): outside the support
    center = O.qplus_pointwise_strong(el, HS, ball, ball, np.zeros(3), 40_000, rng)
    assert center.value - 3 * center.std_error > 0  # small-velocity floor


def test_weak_mass_and_momentum_vanish(rng, any_model):
    est = O.qplus_weak_moment(any_model, HS, MAXW, MAXW, O.psi_mass, 50_000, rng)
    assert est.value == 0.0
    for axis in range(3):
        est = O.qplus_weak_moment(any_model, HS, MAXW, MAXW,
                                  O.psi_momentum(axis), 50_000, rng)
        assert abs(est.value) < 1e-12


def test_weak_energy_elastic_zero(rng):
    el = R.RestitutionModel.elastic()
    est = O.qplus_weak_moment(el, HS, MAXW, MAXW, O.psi_energy, 50_000, rng)
    assert abs(est.value) < 1e-12


def test_weak_energy_matches_quadrature_oracle(rng):
    # For constant e the sphere integral is exact:
    # A[|v|^2] = -(1-e0^2) |u|^3 / 4, so the moment is
    # -(1-e0^2)/8 * E|u|^3 with u Gaussian of per-component variance 2 theta.
    c5 = R.RestitutionModel.constant(0.5)
    est = O.qplus_weak_moment(c5, HS, MAXW, MAXW, O.psi_energy, 500_000, rng)
    var = 2.0 * THETA
    norm = math.sqrt(2.0 / math.pi) / var ** 1.5
    e_u3, _ = integrate.quad(lambda s: s ** 5 * norm * math.exp(-0.5 * s * s / var),
                             0.0, 40.0)
    expected = -(1.0 - 0.25) / 8.0 * e_u3
    assert est.value == pytest.approx(expected, rel=0.02)
    assert abs(est.value - expected) < 4 * est.std_error
    assert est.value < 0


def test_weak_energy_nonpositive_inelastic(rng, any_model):
    est = O.qplus_weak_moment(any_model, HS, MAXW, MAXW, O.psi_energy, 50_000, rng)
    assert est.value <= 3 * est.std_error


def test_weak_linearity_sign_flip():
    c5 = R.RestitutionModel.constant(0.5)
    r1 = O.qplus_weak_moment(c5, HS, MAXW, MAXW, O.psi_energy, 20_000,
                             np.random.default_rng(7))
    r2 = O.qplus_weak_moment(c5, HS, MAXW, MAXW, lambda v: -O.psi_energy(v), 20_000,
                             np.random.default_rng(7))
    assert r1.value == pytest.approx(-r2.value, abs=1e-14)


def test_weak_pseudo_maxwellian_rate(rng):
    pm = O.KernelSpec(potential="pseudo_maxwellian")
    c5 = R.RestitutionModel.constant(0.5)
    est = O.qplus_weak_moment(c5, pm, MAXW, MAXW, O.psi_energy, 100_000, rng,
                              theta_system=3.0 * THETA)
    # vs hard-sphere: kinetic prefactor sqrt(Theta) replaces |u|
    assert est.value < 0
    var = 2.0 * THETA
    e_u2 = 3.0 * var
    expected = -math.sqrt(3.0 * THETA) * (1 - 0.25) / 8.0 * e_u2
    assert abs(est.value - expected) < 4 * est.std_error


def test_std_error_scaling_with_samples():
    el = R.RestitutionModel.viscoelastic(0.2)
    v = np.array([0.5, 0.0, 0.0])
    ses = []
    for k, n in enumerate((40_000, 80_000, 160_000)):
        est = O.qplus_pointwise_strong(el, HS, MAXW, MAXW, v, n,
                                       np.random.default_rng(100 + k))
        ses.append(est.std_error)
    for a, b in zip(ses, ses[1:]):
        assert 0.707 * 0.85 <= b / a <= 0.707 * 1.15


def test_kde_density_usable_in_strong_form(rng):
    samples = MAXW.sample(60_000, rng)
    kde = GaussianKDE(samples, max_basis=2048, rng=rng)
    el = R.RestitutionModel.elastic()
    v = np.array([0.4, 0.0, 0.0])
    est = O.qplus_pointwise_strong(el, HS, kde, kde, v, 60_000, rng)
    exact = O.elastic_equilibrium_gain(THETA, v)
    assert est.value == pytest.approx(exact, rel=0.1)


def test_reachable_radius_closed_forms():
    # elastic: the supremum coincides with ell = sqrt(2) delta
    el = R.RestitutionModel.elastic()
    assert O.reachable_radius(el, 1.0) == pytest.approx(math.sqrt(2.0), abs=1e-9)
    # constant e: sup = delta sqrt(1 + beta/(2 - beta)) > ell for e < 1
    c5 = R.RestitutionModel.constant(0.5)
    b = 0.75
    assert O.reachable_radius(c5, 1.0) == pytest.approx(math.sqrt(1 + b / (2 - b)),
                                                        abs=1e-7)
    ell, _ = R.spreading_constants(c5, 1.0)
    assert O.reachable_radius(c5, 1.0) > ell
    # explicit witness: both pre-collisional velocities inside the unit
    # ball produce a post-collisional speed beyond ell = 1.25
    from granular_kinetics.kinematics import post_collide_n
    v = np.array([math.sqrt(0.96), 0.0, 0.2])
    v_star = np.array([0.0, 0.0, 1.0])
    n = np.array([0.0, 0.0, 1.0])
    v_post, _, _ = post_collide_n(c5, v, v_star, n)
    assert np.linalg.norm(v) <= 1 and np.linalg.norm(v_star) <= 1
    assert np.linalg.norm(v_post) == pytest.approx(math.sqrt(1.6), abs=1e-12)


def test_spreading_certificate_elastic_passes(rng):
    cert = O.spreading_certificate(R.RestitutionModel.elastic(), 1.0, np.zeros(3),
                                   0.5, 150_000, rng,
                                   shell_points=6, floor_samples_per_point=40_000)
    assert cert.predicted_support_radius == pytest.approx(math.sqrt(2.0))
    assert cert.reachable_radius == pytest.approx(math.sqrt(2.0), abs=1e-9)
    assert cert.measured_support_radius <= math.sqrt(2.0) * 1.001
    assert cert.measured_support_radius >= math.sqrt(2.0) * 0.98
    assert cert.measured_floor > 0
    assert cert.passed


def test_spreading_certificate_resolves_inelastic_excess(rng):
    # the measurement tracks the true supremum, which for e < 1 exceeds
    # ell(delta); the prescribed pass band is therefore not satisfiable
    cert = O.spreading_certificate(R.RestitutionModel.constant(0.5), 1.0, np.zeros(3),
                                   0.5, 150_000, rng,
                                   shell_points=6, floor_samples_per_point=40_000)
    assert cert.measured_support_radius <= cert.reachable_radius * (1 + 1e-9)
    assert cert.measured_support_radius >= cert.reachable_radius * 0.98
    assert cert.measured_support_radius > cert.predicted_support_radius * 1.001
    assert cert.measured_floor > 0
    assert not cert.passed


def test_spreading_certificate_viscoelastic_floor(rng, viscoelastic):
    cert = O.spreading_certificate(viscoelastic, 1.0, np.array([0.3, -0.2, 0.1]),
                                   0.5, 150_000, rng, shell_points=6,
                                   floor_samples_per_point=40_000)
    assert cert.measured_floor > 3 * cert.floor_std_error
    assert cert.measured_support_radius >= 0.98 * cert.predicted_support_radius
    assert cert.measured_support_radius <= cert.reachable_radius * (1 + 1e-9)


def test_spreading_rejects_bad_chi(rng):
    with pytest.raises(InputError):
        O.spreading_certificate(R.RestitutionModel.elastic(), 1.0, np.zeros(3),
                                1.5, 1000, rng)


def test_rate_curve_elastic_is_exactly_zero(rng):
    el = R.RestitutionModel.elastic()
    # scaling an elastic model is a no-op, so the coupled difference
    # vanishes sample by sample
    lam = R.scale_model(el, 0.5)
    assert lam is el
    with pytest.raises(InputError):
        O.lambda_rate_curve(el, MAXW, MAXW, [0.5, 0.25], n_samples=4000, rng=rng)


def test_rate_fit_insufficient_samples(rng):
    # a zero-coefficient series claims gamma = 1/5 but is elastic in value,
    # so every coupled difference vanishes and the fit must refuse
    degenerate = R.RestitutionModel.series([0.0])
    with pytest.raises(InsufficientSamplesError):
        O.lambda_rate_fit(degenerate, MAXW, MAXW, [0.5, 0.25, 0.125, 0.0625],
                          n_samples=20_000, rng=rng)


def test_rate_fit_slope_window(rng, viscoelastic):
    fit = O.lambda_rate_fit(viscoelastic, MAXW, MAXW, [0.5, 0.25, 0.125, 0.0625],
                            n_samples=150_000, rng=rng)
    assert 0.1 <= fit["slope"] <= 0.3
    d = fit["d_values"]
    assert all(a < b for a, b in zip(d, d[1:]))  # monotone in lambda


def test_rate_curve_rejects_bad_lambdas(rng, viscoelastic):
    with pytest.raises(InputError):
        O.lambda_rate_curve(viscoelastic, MAXW, MAXW, [0.5, 1.5], rng=rng)


def test_welford_merge_matches_direct():
    from granular_kinetics.rngtools import Welford
    rng = np.random.default_rng(0)
    x = rng.normal(size=10_000)
    w1 = Welford().update(x[:3000])
    w2 = Welford().update(x[3000:])
    w1.merge(w2)
    assert w1.mean == pytest.approx(float(x.mean()), rel=1e-12)
    assert w1.std_error == pytest.approx(float(x.std(ddof=1) / math.sqrt(x.size)),
                                         rel=1e-10)
