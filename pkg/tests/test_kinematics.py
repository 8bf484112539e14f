import math

import numpy as np
import pytest

from granular_kinetics import kinematics as K
from granular_kinetics import restitution as R


def _ulp_gap(a, b, magnitudes):
    # ulps measured against the magnitude of the velocities entering the
    # sums, since the momentum components themselves may cancel to ~0
    scale = np.max(np.abs(magnitudes), axis=0)
    return np.abs(a - b) / np.spacing(scale)


def test_elastic_head_on_exchange():
    e = R.RestitutionModel.elastic()
    v, vs = np.array([1.0, 0, 0]), np.array([-1.0, 0, 0])
    n = np.array([1.0, 0, 0])
    v1, v1s, loss = K.post_collide_n(e, v, vs, n)
    assert np.allclose(v1, [-1, 0, 0]) and np.allclose(v1s, [1, 0, 0])
    assert loss == pytest.approx(0.0, abs=1e-15)


def test_constant_head_on_loss():
    c = R.RestitutionModel.constant(0.5)
    v, vs = np.array([1.0, 0, 0]), np.array([-1.0, 0, 0])
    n = np.array([1.0, 0, 0])
    v1, v1s, loss = K.post_collide_n(c, v, vs, n)
    assert np.allclose(v1, [-0.5, 0, 0]) and np.allclose(v1s, [0.5, 0, 0])
    assert loss == pytest.approx((1 - 0.25) / 2 * 4.0)


def test_pre_collide_constant_example():
    # theta_inv(1) = 2 for e0 = 0.5, so xi = 1.5
    c = R.RestitutionModel.constant(0.5)
    v, vs = np.array([1.0, 0, 0]), np.array([0.0, 0, 0])
    n = np.array([1.0, 0, 0])
    pv, pvs = K.pre_collide_n(c, v, vs, n)
    assert np.allclose(pv, [1 - 1.5, 0, 0])
    assert np.allclose(pvs, [1.5, 0, 0])


def test_pre_collide_elastic_reflection(rng):
    e = R.RestitutionModel.elastic()
    v, vs = rng.normal(size=(50, 3)), rng.normal(size=(50, 3))
    n = K.random_unit_vectors(rng, 50)
    pv, pvs = K.pre_collide_n(e, v, vs, n)
    un = np.sum((v - vs) * n, axis=1)
    assert np.allclose(pv, v - un[:, None] * n, atol=1e-12)


def test_roundtrip_post_of_pre(viscoelastic, rng):
    v, vs = rng.normal(size=(10_000, 3)), rng.normal(size=(10_000, 3))
    n = K.random_unit_vectors(rng, 10_000)
    pv, pvs = K.pre_collide_n(viscoelastic, v, vs, n)
    v2, vs2, _ = K.post_collide_n(viscoelastic, pv, pvs, n)
    assert np.max(np.abs(v2 - v)) < 1e-7
    assert np.max(np.abs(vs2 - vs)) < 1e-7


def test_momentum_conserved_to_4_ulps(any_model, rng):
    v, vs = rng.normal(size=(100_000, 3)), rng.normal(size=(100_000, 3))
    n = K.random_unit_vectors(rng, 100_000)
    v1, v1s, _ = K.post_collide_n(any_model, v, vs, n)
    assert np.max(_ulp_gap(v1 + v1s, v + vs, [v, vs, v1, v1s])) <= 4
    sigma = K.sigma_from_n(v - vs, n)
    v2, v2s = K.post_collide_sigma(any_model, v, vs, sigma)
    assert np.max(_ulp_gap(v2 + v2s, v + vs, [v, vs, v2, v2s])) <= 4


def test_energy_loss_identity(viscoelastic, rng):
    v, vs = rng.normal(size=(20_000, 3)), rng.normal(size=(20_000, 3))
    n = K.random_unit_vectors(rng, 20_000)
    v1, v1s, loss = K.post_collide_n(viscoelastic, v, vs, n)
    drop = (np.sum(v * v, 1) + np.sum(vs * vs, 1)
            - np.sum(v1 * v1, 1) - np.sum(v1s * v1s, 1))
    un = np.abs(np.sum((v - vs) * n, axis=1))
    e = R.eval_e(viscoelastic, un)
    expected = 0.5 * (1 - e * e) * un * un
    scale = np.maximum(np.sum(v * v, 1) + np.sum(vs * vs, 1), 1.0)
    assert np.max(np.abs(drop - expected) / scale) < 1e-12
    assert np.max(np.abs(loss - expected) / np.maximum(expected, 1e-30)) < 1e-9


def test_energy_never_increases(any_model, rng):
    v, vs = rng.normal(size=(50_000, 3)), rng.normal(size=(50_000, 3))
    n = K.random_unit_vectors(rng, 50_000)
    _, _, loss = K.post_collide_n(any_model, v, vs, n)
    assert np.min(loss) >= -1e-12


def test_elastic_energy_conserved(rng):
    e = R.RestitutionModel.elastic()
    v, vs = rng.normal(size=(50_000, 3)), rng.normal(size=(50_000, 3))
    n = K.random_unit_vectors(rng, 50_000)
    v1, v1s, _ = K.post_collide_n(e, v, vs, n)
    before = np.sum(v * v, 1) + np.sum(vs * vs, 1)
    after = np.sum(v1 * v1, 1) + np.sum(v1s * v1s, 1)
    assert np.max(np.abs(after - before) / before) < 1e-12


def test_sigma_elastic_example():
    e = R.RestitutionModel.elastic()
    v, vs = np.array([1.0, 0, 0]), np.array([-1.0, 0, 0])
    sigma = np.array([0.0, 1.0, 0])
    v1, v1s = K.post_collide_sigma(e, v, vs, sigma)
    assert np.allclose(v1, [0, 1, 0]) and np.allclose(v1s, [0, -1, 0])


def test_sigma_grazing_identity(any_model, rng):
    v, vs = rng.normal(size=(100, 3)), rng.normal(size=(100, 3))
    u = v - vs
    sigma = u / np.linalg.norm(u, axis=1, keepdims=True)
    v1, v1s = K.post_collide_sigma(any_model, v, vs, sigma)
    assert np.allclose(v1, v, atol=1e-12) and np.allclose(v1s, vs, atol=1e-12)


def test_sigma_degenerate_pair(any_model):
    v = np.array([1.0, 2.0, 3.0])
    v1, v1s = K.post_collide_sigma(any_model, v, v, np.array([0.0, 0, 1.0]))
    assert np.allclose(v1, v) and np.allclose(v1s, v)
    from granular_kinetics.errors import DegeneratePairError
    with pytest.raises(DegeneratePairError):
        K.post_collide_sigma(any_model, v, v, np.array([0.0, 0, 1.0]), strict=True)


def test_parametrization_equivalence(rng):
    models = [R.RestitutionModel.constant(0.7), R.RestitutionModel.elastic(),
              R.RestitutionModel.viscoelastic(0.2)]
    v, vs = rng.normal(size=(100_000, 3)), rng.normal(size=(100_000, 3))
    n = K.random_unit_vectors(rng, 100_000)
    sigma = K.sigma_from_n(v - vs, n)
    for m in models:
        a1, b1, _ = K.post_collide_n(m, v, vs, n)
        a2, b2 = K.post_collide_sigma(m, v, vs, sigma)
        assert np.max(np.abs(a1 - a2)) < 1e-12
        assert np.max(np.abs(b1 - b2)) < 1e-12


def test_collision_pair_type(rng):
    c = R.RestitutionModel.constant(0.5)
    pair = K.CollisionPair(np.array([1.0, 0, 0]), np.array([-1.0, 0, 0]),
                           np.array([1.0, 0, 0]))
    v1, v2 = pair.post_collide(c)
    assert np.allclose(v1, [-0.5, 0, 0]) and np.allclose(v2, [0.5, 0, 0])
    sig = K.CollisionPair(np.array([1.0, 0, 0]), np.array([-1.0, 0, 0]),
                          np.array([0.0, 1.0, 0]), parametrization="sigma")
    v1, v2 = sig.post_collide(R.RestitutionModel.elastic())
    assert np.allclose(v1, [0, 1, 0])
    from granular_kinetics.errors import InputError
    import pytest as _pytest
    with _pytest.raises(InputError):
        K.CollisionPair(np.zeros(3), np.zeros(3), np.array([0.5, 0, 0]))
    with _pytest.raises(InputError):
        K.CollisionPair(np.zeros(3), np.zeros(3), np.array([1.0, 0, 0]),
                        parametrization="weird")


def test_cosine_weighted_directions_density(rng):
    # the |uhat.n| density has mean |cos| = 2/3 instead of 1/2
    uhat = np.tile([0.0, 0.0, 1.0], (200_000, 1))
    n = K.cosine_weighted_directions(rng, uhat)
    c = np.abs(n[:, 2])
    assert np.mean(c) == pytest.approx(2.0 / 3.0, abs=5e-3)
    assert np.max(np.abs(np.linalg.norm(n, axis=1) - 1)) < 1e-12
