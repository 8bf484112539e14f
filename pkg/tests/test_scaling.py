import math

import numpy as np
import pytest

from granular_kinetics import scaling as S
from granular_kinetics.errors import InputError


def test_elastic_trajectory_is_trivial():
    tau = np.linspace(0, 10, 101)
    traj = S.build_trajectory(tau, np.full_like(tau, 3.0))
    assert np.allclose(traj.v_scale, 1.0)
    assert np.allclose(traj.t, tau)
    assert np.allclose(traj.xi, 0.0, atol=1e-12)
    assert np.allclose(traj.z, 1.0)


def test_closed_form_gamma0_trajectory():
    # E = (1+tau)^-2 gives V = 1+tau and t = Int dr/(1+r) = log(1+tau)
    tau = np.linspace(0, 10, 10_001)
    energy = (1 + tau) ** -2
    traj = S.build_trajectory(tau, energy)
    t_exact = np.log1p(tau)
    assert np.max(np.abs(traj.t - t_exact) / np.maximum(t_exact, 1)) < 1e-6
    assert np.allclose(traj.v_scale, 1 + tau)
    # xi(t) = dV/dtau = 1 along the trajectory
    assert np.max(np.abs(traj.xi - 1.0)) < 1e-6
    assert np.allclose(traj.z, 1 / (1 + tau))


def test_s_of_t_roundtrip():
    tau = np.linspace(0, 5, 2001)
    traj = S.build_trajectory(tau, (1 + tau) ** -2)
    assert np.max(np.abs(traj.s_of_t(traj.t) - tau)) < 1e-6


def test_build_trajectory_input_errors():
    with pytest.raises(InputError):
        S.build_trajectory(np.array([0.0, 1.0]), np.array([1.0, 0.5]))
    with pytest.raises(InputError):
        S.build_trajectory(np.array([0.0, 1.0, 0.5]), np.array([1.0, 0.5, 0.2]))
    with pytest.raises(InputError):
        S.build_trajectory(np.array([0.0, 1.0, 2.0]), np.array([1.0, -0.5, 0.2]))


def test_haff_fit_exact_power_law():
    tau = np.geomspace(1e-3, 1000, 400) - 1e-3
    energy = 2.0 * (1 + tau) ** (-5.0 / 3.0)
    traj = S.build_trajectory(tau, energy)
    fit = S.haff_fit(traj, gamma=0.2)
    assert fit["exponent"] == pytest.approx(-5.0 / 3.0, abs=1e-3)
    assert fit["c1"] == pytest.approx(2.0, rel=1e-6)
    assert fit["c2"] == pytest.approx(2.0, rel=1e-6)
    assert fit["A1"] <= fit["A2"]
    assert fit["bracket_violations"] == 0


def test_haff_fit_needs_two_decades():
    tau = np.linspace(0, 5, 100)
    traj = S.build_trajectory(tau, (1 + tau) ** -2)
    with pytest.raises(InputError):
        S.haff_fit(traj, gamma=0.0)


def test_brackets_collapse_when_constants_equal():
    t = np.linspace(0.0, 20.0, 40)
    br = S.xi_z_brackets(t, 0.2, 1.0, 1.0, 0.7, 0.7, 1.0)
    assert np.allclose(br["xi_lo"], br["xi_hi"])
    assert np.allclose(br["z_lo"], br["z_hi"])
    assert np.allclose(br["s_lo"], br["s_hi"])
    assert br["cbar"] == pytest.approx(1.0)


def test_cbar_example_high_precision():
    import mpmath
    br = S.xi_z_brackets(np.array([1.0]), 0.2, 1.0, 4.0, 1.0, 2.0, 1.0)
    expected = 2 * mpmath.mpf(4) ** mpmath.mpf("0.6")
    assert br["cbar"] == pytest.approx(float(expected), rel=1e-12)
    assert br["cbar"] == pytest.approx(4.595, abs=1e-3)


def test_gamma_zero_specialization_flag():
    t = np.linspace(0.0, 3.0, 7)
    br = S.xi_z_brackets(t, 0.0, 0.9, 1.1, 0.5, 0.6, 1.0)
    assert br["gamma_zero"]
    assert np.allclose(br["xi_lo"], 0.5)
    assert np.allclose(br["xi_hi"], 0.6)
    assert br["z_lo"][0] == pytest.approx(math.sqrt(0.9))


def test_brackets_reject_bad_constants():
    with pytest.raises(InputError):
        S.xi_z_brackets(np.array([1.0]), 0.2, 2.0, 1.0, 1.0, 2.0, 1.0)
    with pytest.raises(InputError):
        S.xi_z_brackets(np.array([1.0]), 0.2, 1.0, 2.0, 3.0, 2.0, 1.0)


def test_xi_integral_bound_on_power_law():
    tau = np.geomspace(1e-3, 1000, 600) - 1e-3
    traj = S.build_trajectory(tau, 2.0 * (1 + tau) ** (-5.0 / 3.0))
    fit = S.haff_fit(traj, gamma=0.2)
    br = S.xi_z_brackets(traj.t, 0.2, fit["c1"], fit["c2"], fit["A1"], fit["A2"],
                         float(traj.energy[0]))
    assert S.check_xi_integral_bound(traj, br["cbar"]) == 0
