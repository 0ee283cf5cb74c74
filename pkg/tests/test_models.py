import numpy as np
import pytest

from vakonomic.affgebroid import constant_affgebroid
from vakonomic.engine import VakonomicState, vakonomic_rhs, w1prime_y0
from vakonomic.errors import OriginSingularity
from vakonomic.fields import ScalarField, constant_field
from vakonomic.integrate import IntegratorConfig, integrate
from vakonomic.models import (MODELS, MechanicalAffineParams, SphereParams, build_jet_free,
                              build_kepler_thruster, build_mechanical_affine, build_rolling_sphere,
                              default_mechanical_params, get_model, jet_penny_oracle_rhs,
                              kepler_affgebroid, kepler_oracle_rhs, mechanical_energy,
                              mechanical_oracle_rhs, sphere_affgebroid, sphere_oracle_rhs)


def rhs_gap(a, b):
    return max(np.max(np.abs(a.pack() - b.pack())), 0.0)


def test_registry_has_the_documented_keys():
    for key in ("sphere", "kepler", "jet-free", "mech-affine"):
        assert get_model(key).key == key
    with pytest.raises(KeyError, match="unknown model"):
        get_model("pendulum")


@pytest.mark.parametrize("fd, tol", [(False, 1e-9), (True, 1e-5)])
def test_sphere_engine_matches_hand_equations(fd, tol, rng):
    p = SphereParams.oscillating(1.2, 0.4, 2.0, r=0.8, c=0.3)
    sys = build_rolling_sphere(p, fd=fd)
    for _ in range(200):
        st_ = VakonomicState(rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 2))
        assert rhs_gap(vakonomic_rhs(sys, st_), sphere_oracle_rhs(p, st_)) <= tol


def test_sphere_without_table_acceleration_uses_differences(rng):
    p = SphereParams(omega=lambda t: 1 + 0.5 * np.sin(t), omega_rate=None, omega_accel=None)
    sys = build_rolling_sphere(p)
    st_ = VakonomicState(rng.normal(size=3), rng.normal(size=3), rng.normal(size=2))
    assert rhs_gap(vakonomic_rhs(sys, st_), sphere_oracle_rhs(p, st_)) <= 1e-5


def test_sphere_parameters_are_checked():
    with pytest.raises(ValueError):
        SphereParams(r=0.0)
    with pytest.raises(ValueError):
        build_rolling_sphere(SphereParams(), "hamiltonian")


@pytest.mark.parametrize("fd, tol", [(False, 1e-8), (True, 1e-4)])
def test_kepler_engine_matches_hand_equations(fd, tol, rng):
    entry = MODELS["kepler"]
    sys = build_kepler_thruster(fd)
    for _ in range(200):
        st_ = entry.sampler(sys, rng, 2.0)
        assert rhs_gap(vakonomic_rhs(sys, st_), kepler_oracle_rhs(st_)) <= tol


def test_kepler_structure_function_value():
    C0 = kepler_affgebroid().c0([0, 1, 0, 0, 0])
    # C^3_{10} = -C^3_{01} = (2 q1² - q2²) / |q|^5 = 2 at (1, 0)
    assert -C0[2, 0] == pytest.approx(2.0)
    q1, q2 = 0.6, -1.1
    assert -kepler_affgebroid().c0([0, q1, q2, 0, 0])[2, 0] == pytest.approx(
        (2 * q1 ** 2 - q2 ** 2) * (q1 ** 2 + q2 ** 2) ** -2.5)


@pytest.mark.parametrize("fd", [False, True])
def test_kepler_origin_is_rejected(fd):
    st_ = VakonomicState([0, 0, 0, 0.1, 0], [0, 0], [0, 0])
    with pytest.raises(OriginSingularity):
        vakonomic_rhs(build_kepler_thruster(fd), st_)
    with pytest.raises(OriginSingularity):
        kepler_oracle_rhs(st_)


def test_jet_free_particle_moves_on_straight_lines():
    sys = build_jet_free(2)
    tr = integrate(sys, VakonomicState([0, 1, -1], [], [0.5, 2.0]), IntegratorConfig((0, 2), "rk4", 0.1))
    assert np.allclose(tr.x[:, 1], 1 + 0.5 * tr.times, atol=1e-14)
    assert np.allclose(tr.x[:, 2], -1 + 2.0 * tr.times, atol=1e-14)


def test_jet_penny_matches_hand_derivation(rng):
    sys = MODELS["jet-penny"].build({})
    for _ in range(50):
        st_ = VakonomicState(rng.normal(size=3), rng.normal(size=1), rng.normal(size=1))
        assert rhs_gap(vakonomic_rhs(sys, st_), jet_penny_oracle_rhs(st_)) <= 1e-14


@pytest.mark.parametrize("fd, tol", [(False, 1e-9), (True, 1e-5)])
def test_mechanical_engine_matches_hand_equations(fd, tol, rng):
    spec = sphere_affgebroid()
    p = default_mechanical_params()
    sys = build_mechanical_affine(spec, p, fd)
    for _ in range(500 if not fd else 100):
        st_ = VakonomicState(rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 1), rng.uniform(-2, 2, 4))
        assert rhs_gap(vakonomic_rhs(sys, st_), mechanical_oracle_rhs(spec, p, st_)) <= tol


def test_flat_mechanical_system_without_potential_is_free(rng):
    spec = constant_affgebroid(3, 2, [1, 0, 0], [[0, 0], [1, 0], [0, 1]])
    p = MechanicalAffineParams(constant_field(0.0, 3), constrained=(1,))
    sys = build_mechanical_affine(spec, p)
    r = vakonomic_rhs(sys, VakonomicState(rng.normal(size=3), rng.normal(size=1), rng.normal(size=1)))
    assert not np.any(r.dy_A) and not np.any(r.dy_a)
    with pytest.raises(ValueError):
        MechanicalAffineParams(constant_field(0.0, 3), orthonormal=False)


def test_mechanical_secondary_constraint_value(rng):
    # the drift slot contributes ½ to L, and y_0 enters with the opposite sign
    spec = sphere_affgebroid()
    p = default_mechanical_params()
    sys = build_mechanical_affine(spec, p)
    for _ in range(20):
        st_ = VakonomicState(rng.normal(size=3), rng.normal(size=1), rng.normal(size=4))
        assert w1prime_y0(sys, st_) == pytest.approx(0.5 - mechanical_energy(p, st_), abs=1e-15)


@pytest.mark.parametrize("key", sorted(MODELS))
def test_every_model_has_a_regular_initial_state(key):
    entry = MODELS[key]
    sys = entry.build(entry.defaults)
    tr = integrate(sys, entry.initial(sys), IntegratorConfig((0, 0.1), "rk4", 0.01))
    assert len(tr) == 11 and np.all(np.isfinite(tr.packed()))
