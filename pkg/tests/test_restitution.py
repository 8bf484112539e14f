import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from granular_kinetics import restitution as R
from granular_kinetics.errors import InputError, ModelClassViolation

GRID = np.geomspace(1e-4, 1e4, 64)


# -- eval_e -------------------------------------------------------------------

def test_constant_is_constant():
    m = R.RestitutionModel.constant(0.5)
    assert R.eval_e(m, 7.3) == 0.5
    assert np.all(R.eval_e(m, GRID) == 0.5)


def test_gamma_positive_models_are_elastic_at_zero():
    for m in (R.RestitutionModel.viscoelastic(0.2), R.RestitutionModel.series([0.3])):
        assert R.eval_e(m, 0.0) == pytest.approx(1.0, abs=1e-12)


def test_viscoelastic_matches_bisection_oracle():
    # independent oracle: brentq on e + 0.2 e^(3/5) - 1 = 0 at r = 1
    expected = brentq(lambda e: e + 0.2 * e ** 0.6 - 1.0, 1e-12, 1.0, xtol=1e-12)
    assert R.eval_e(R.RestitutionModel.viscoelastic(0.2), 1.0) == pytest.approx(
        expected, abs=1e-10)
    assert expected == pytest.approx(0.822, abs=5e-4)


def test_eval_e_rejects_bad_input():
    m = R.RestitutionModel.viscoelastic(0.2)
    with pytest.raises(InputError):
        R.eval_e(m, float("nan"))
    with pytest.raises(InputError):
        R.eval_e(m, -1.0)


# -- theta / theta_inv ---------------------------------------------------------

def test_theta_constant_and_elastic():
    c = R.RestitutionModel.constant(0.5)
    assert R.theta(c, 2.0) == pytest.approx(1.0)
    assert R.theta_inv(c, 1.0) == pytest.approx(2.0)
    e = R.RestitutionModel.elastic()
    x = np.linspace(0, 5, 11)
    assert np.allclose(R.theta_inv(e, x), x)


def test_theta_roundtrip_viscoelastic(viscoelastic):
    assert R.theta_inv(viscoelastic, R.theta(viscoelastic, 1.7)) == pytest.approx(
        1.7, abs=1e-8)
    x = np.geomspace(1e-3, 1e3, 40)
    rho = R.theta_inv(viscoelastic, x)
    assert np.max(np.abs(R.theta(viscoelastic, rho) - x) / np.maximum(x, 1)) < 1e-8


# -- jacobian ------------------------------------------------------------------

def test_jacobian_trivial_values():
    assert R.jacobian(R.RestitutionModel.constant(0.37), 5.0) == pytest.approx(0.37)
    assert R.jacobian(R.RestitutionModel.elastic(), 5.0) == pytest.approx(1.0)


def test_jacobian_matches_finite_difference(viscoelastic):
    for r in (0.05, 1.0, 12.0, 400.0):
        h = max(1e-6, 1e-6 * r)
        fd = (R.theta(viscoelastic, r + h) - R.theta(viscoelastic, r - h)) / (2 * h)
        assert R.jacobian(viscoelastic, r) == pytest.approx(fd, abs=1e-6, rel=1e-6)


def test_jacobian_bounded_by_e(any_model):
    j = R.jacobian(any_model, GRID)
    e = R.eval_e(any_model, GRID)
    assert np.all(j > 0)
    assert np.all(j <= e + 1e-9)


# -- eta / alpha ---------------------------------------------------------------

def test_eta_alpha_trivial():
    e = R.RestitutionModel.elastic()
    et, al = R.eta_alpha(e, 3.0)
    assert et == pytest.approx(3.0) and al == pytest.approx(3.0)
    c = R.RestitutionModel.constant(0.5)
    assert R.eta(c, 2.0) == pytest.approx(1.5)
    assert R.alpha(c, 1.5) == pytest.approx(2.0)


def test_alpha_eta_roundtrip(viscoelastic):
    assert R.alpha(viscoelastic, R.eta(viscoelastic, 0.9)) == pytest.approx(0.9, abs=1e-8)
    r = np.geomspace(1e-3, 1e3, 40)
    assert np.max(np.abs(R.alpha(viscoelastic, R.eta(viscoelastic, r)) - r)
                  / np.maximum(r, 1)) < 1e-8


def test_eta_alpha_sandwich(any_model):
    et, al = R.eta_alpha(any_model, GRID)
    assert np.all(et >= GRID / 2 - 1e-12) and np.all(et <= GRID + 1e-12)
    assert np.all(al >= GRID - 1e-9) and np.all(al <= 2 * GRID + 1e-9)


def test_carleman_delta_bounds(any_model):
    r = np.geomspace(1e-3, 1e3, 50)
    rd = r * R.carleman_delta(any_model, r)
    assert np.all(rd >= 0.5 - 1e-9) and np.all(rd <= 2.0 + 1e-9)


def test_carleman_delta_elastic_closed_form():
    e = R.RestitutionModel.elastic()
    r = np.array([0.5, 1.0, 4.0])
    assert np.allclose(R.carleman_delta(e, r), 1.0 / (2.0 * r))


# -- spreading constants ---------------------------------------------------------

def test_spreading_constants_trivial():
    ell, k = R.spreading_constants(R.RestitutionModel.constant(0.5), 1.0)
    assert ell == pytest.approx(1.25)
    assert k == pytest.approx(0.25)
    ell, k = R.spreading_constants(R.RestitutionModel.elastic(), 1.0)
    assert ell == pytest.approx(math.sqrt(2.0))
    assert k == pytest.approx(1.0)


def test_k_non_increasing_in_delta(viscoelastic):
    deltas = [0.25, 0.5, 1.0, 2.0, 4.0]
    ks = [R.spreading_constants(viscoelastic, d)[1] for d in deltas]
    assert all(k2 <= k1 + 1e-9 for k1, k2 in zip(ks, ks[1:]))


def test_ell_ratio_window(any_model):
    for d in (0.3, 1.0, 3.0):
        ell, _ = R.spreading_constants(any_model, d)
        assert math.sqrt(5) / 2 < ell / d <= math.sqrt(2) + 1e-12


# -- scale_model -----------------------------------------------------------------

def test_scale_identity_and_constant():
    c = R.RestitutionModel.constant(0.7)
    assert R.scale_model(c, 0.3) is c
    v = R.RestitutionModel.viscoelastic(0.2)
    assert R.scale_model(v, 1.0) is v


def test_scale_consistency(viscoelastic):
    half = R.scale_model(viscoelastic, 0.5)
    assert R.eval_e(half, 2.0) == pytest.approx(R.eval_e(viscoelastic, 1.0), abs=1e-12)


def test_scale_composition_exact():
    v = R.RestitutionModel.viscoelastic(0.2)
    s = R.RestitutionModel.series([0.2, 0.05, 0.01])
    for m in (v, s):
        a = R.scale_model(R.scale_model(m, 0.5), 0.25)
        b = R.scale_model(m, 0.125)
        assert a == b


def test_scale_rejects_nonpositive():
    with pytest.raises(InputError):
        R.scale_model(R.RestitutionModel.viscoelastic(0.2), 0.0)
    with pytest.raises(InputError):
        R.scale_model(R.RestitutionModel.viscoelastic(0.2), -1.0)


# -- a0 threshold ------------------------------------------------------------------

def test_a0_threshold_values():
    assert R.a0_threshold(0.0) == pytest.approx(6.212, abs=1e-3)
    assert R.a0_threshold(1.0) == pytest.approx(2.0, abs=1e-14)
    assert R.a0_threshold(0.5) == pytest.approx(3.106, abs=1e-3)


def test_a0_threshold_high_precision():
    import mpmath
    mp_val = 2 * mpmath.log(2) / mpmath.log(1 + mpmath.mpf("0.5625"))
    assert R.a0_threshold(0.5) == pytest.approx(float(mp_val), rel=1e-12)


# -- class audit ---------------------------------------------------------------------

def test_validate_model_accepts_all(any_model):
    R.validate_model(any_model)


def test_class_monotonicity_on_grid(any_model):
    e = R.eval_e(any_model, GRID)
    th = R.theta(any_model, GRID)
    b = R.beta(any_model, GRID)
    assert np.all(np.diff(e) <= 1e-12)
    assert np.all(np.diff(th) > 0)
    assert np.all(b > 0.5 - 1e-12) and np.all(b <= 1.0 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(min_value=0.01, max_value=5.0),
       x=st.floats(min_value=1e-6, max_value=1e3))
def test_theta_roundtrip_property(a, x):
    m = R.RestitutionModel.viscoelastic(a)
    rho = R.theta_inv(m, x)
    assert R.theta(m, rho) == pytest.approx(x, rel=1e-7, abs=1e-9)


def test_series_clamp_keeps_e_positive():
    # single-term truncation goes negative near r = 3125; the clamp holds
    # e in (0, 1] there, while class membership holds on the range where
    # the truncation is meaningful
    m = R.RestitutionModel.series([0.2])
    e = R.eval_e(m, np.geomspace(1, 1e6, 50))
    assert np.all(e > 0) and np.all(e <= 1)
    R.validate_model(m, r_min=1e-3, r_max=1e3)


def test_inadmissible_series_detected():
    # a1 = 2 makes theta(r) = r e(r) turn over before the clamp kicks in
    m = R.RestitutionModel.series([2.0])
    with pytest.raises(ModelClassViolation):
        R.validate_model(m, r_min=1e-2, r_max=3e-2)
