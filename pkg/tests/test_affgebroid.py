from concurrent.futures import ThreadPoolExecutor
from dataclasses import FrozenInstanceError, replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vakonomic.affgebroid import (AffgebroidSpec, StructureEvaluationError,
                                  anchor_morphism_residual, constant_affgebroid, eval_anchor,
                                  jacobi_residual, jacobi_tensor, skew_defect, validate_skew)
from vakonomic.models import MODELS, jet_affgebroid, kepler_affgebroid, sphere_affgebroid

from oracles import frame_structure, kepler_frame, so3_constants, tilted_frame


def kepler_point(rng):
    a, r = rng.uniform(0, 2 * np.pi), rng.uniform(0.5, 2.0)
    return np.array([rng.uniform(-1, 1), r * np.cos(a), r * np.sin(a),
                     rng.uniform(-1, 1), rng.uniform(-1, 1)])


def test_so3_constants_are_skew_and_satisfy_jacobi(rng):
    spec = sphere_affgebroid()
    assert np.array_equal(spec.c(np.zeros(3)), so3_constants())
    for _ in range(10):
        x = rng.normal(size=3)
        assert validate_skew(spec, x)
        assert jacobi_residual(spec, x) <= 1e-12


def test_non_skew_tensor_is_rejected_and_located():
    C = np.zeros((5, 5, 5))
    C[4, 2, 3] = 1.0
    spec = constant_affgebroid(3, 5, [1, 0, 0], np.eye(3, 5), c=C)
    assert not validate_skew(spec, np.zeros(3))
    d, triple = skew_defect(spec, np.zeros(3))
    assert d == 1.0 and triple in ((4, 2, 3), (4, 3, 2))


def test_zero_structure_gives_exact_zero_residuals():
    spec = jet_affgebroid(3)
    x = np.array([0.3, 1.0, -2.0, 4.0])
    assert jacobi_residual(spec, x) == 0.0
    assert anchor_morphism_residual(spec, x) == 0.0


def test_kepler_structure_matches_vector_field_commutators(rng):
    # the drift brackets with the coordinate fields; expanding in the frame gives C
    spec = kepler_affgebroid()
    for _ in range(5):
        x = kepler_point(rng)
        oracle = frame_structure(kepler_frame, x)
        assert np.max(np.abs(spec.full_structure(x) - oracle)) < 1e-7


def test_kepler_jacobi_with_differenced_structure_derivatives(rng):
    # analytic C, derivatives of C and rho by central differences with step 1e-5
    spec = kepler_affgebroid().with_fd(1e-5)
    assert spec.derivative_mode == "finite_difference"
    worst = max(jacobi_residual(spec, kepler_point(rng)) for _ in range(20))
    assert worst <= 1e-6


def tilted_spec():
    # [e0, e2] = e1, [e1, e2] = e2 - t e1; worked out by hand
    def c0(x):
        C0 = np.zeros((2, 2))
        C0[0, 1] = 1.0
        return C0

    def c(x):
        C = np.zeros((2, 2, 2))
        C[1, 0, 1], C[1, 1, 0] = 1.0, -1.0
        C[0, 0, 1], C[0, 1, 0] = -x[0], x[0]
        return C

    def c_jac(x):
        D = np.zeros((2, 2, 2, 3))
        D[0, 0, 1, 0], D[0, 1, 0, 0] = -1.0, 1.0
        return D

    def rho_jac(x):
        D = np.zeros((3, 2, 3))
        D[1, 1, 0] = 1.0
        D[2, 1, 1] = np.exp(x[1])
        return D

    return AffgebroidSpec(
        3, 2, lambda x: np.array([1.0, 0.0, 0.0]), lambda x: tilted_frame(x)[:, 1:], c0, c,
        anchor_drift_jac=lambda x: np.zeros((3, 3)), anchor_linear_jac=rho_jac,
        structure_drift_jac=lambda x: np.zeros((2, 2, 3)), structure_linear_jac=c_jac)


def test_tilted_frame_structure_matches_commutators(rng):
    spec = tilted_spec()
    for _ in range(5):
        x = rng.normal(size=3)
        assert np.max(np.abs(spec.full_structure(x) - frame_structure(tilted_frame, x))) < 1e-8
        assert anchor_morphism_residual(spec, x) < 1e-14
        assert anchor_morphism_residual(spec.with_fd(), x) < 1e-8


def test_jacobi_derivative_term_enters_with_minus_sign(rng):
    spec = tilted_spec()
    x = rng.normal(size=3)
    assert jacobi_residual(spec, x) < 1e-14
    assert jacobi_residual(spec.with_fd(), x) < 1e-8
    # adding the derivative term instead leaves a cyclic sum of -2
    C, dC, R = spec.full_structure(x), spec.full_structure_jac(x), spec.full_anchor(x)
    T = np.einsum("eab,fec->fabc", C, C) + np.einsum("ic,fabi->fabc", R, dC)
    J = T + np.transpose(T, (0, 2, 3, 1)) + np.transpose(T, (0, 3, 1, 2))
    assert np.max(np.abs(J)) == pytest.approx(2.0)


def test_anchor_morphism_on_sphere_and_corrupted_anchor():
    x = np.array([0.2, -0.7, 1.3])
    assert anchor_morphism_residual(sphere_affgebroid(), x) <= 1e-8

    def rho(x):
        R = np.zeros((3, 2))
        R[1, 0] = 1.0 + x[2] ** 2
        R[2, 1] = 1.0
        return R

    bent = AffgebroidSpec(3, 2, lambda x: np.array([1.0, 0, 0]), rho,
                          lambda x: np.zeros((2, 2)), lambda x: np.zeros((2, 2, 2)))
    assert anchor_morphism_residual(bent, x) > 0.1


def test_eval_anchor_examples():
    assert np.array_equal(eval_anchor(jet_affgebroid(2), [0, 1, 2], [3, 4]), [1, 3, 4])
    sph = sphere_affgebroid()
    assert np.array_equal(eval_anchor(sph, [0.4, 2.0, -1.0], [0.5, -1, 7, 8, 9]), [1, 0.5, -1])
    kep = kepler_affgebroid()
    x = np.array([0.0, 1.0, 0.0, 0.3, 0.2])
    assert np.array_equal(eval_anchor(kep, x, np.zeros(4)), kep.rho0(x))


vec3 = st.lists(st.floats(-5, 5), min_size=3, max_size=3).map(np.array)
vec5 = st.lists(st.floats(-5, 5), min_size=5, max_size=5).map(np.array)


@given(vec3, vec5, vec5, st.floats(-3, 3))
@settings(max_examples=50, deadline=None)
def test_eval_anchor_is_affine_in_the_fiber(x, y1, y2, s):
    spec = sphere_affgebroid()
    lin = eval_anchor(spec, x, y1 + y2) - eval_anchor(spec, x, y2)
    assert np.allclose(lin, spec.rho(x) @ y1, atol=1e-12)
    scaled = eval_anchor(spec, x, s * y1) - spec.rho0(x)
    assert np.allclose(scaled, s * (eval_anchor(spec, x, y1) - spec.rho0(x)), atol=1e-12)


@pytest.mark.parametrize("key", sorted(MODELS))
@pytest.mark.parametrize("fd", [False, True])
def test_every_model_passes_axioms(key, fd, rng):
    entry = MODELS[key]
    sys = entry.build({}, fd)
    tol = 1e-4 if fd else 1e-6
    for _ in range(100):
        x = entry.sampler(sys, rng).x
        assert validate_skew(sys.spec, x)
        assert jacobi_residual(sys.spec, x) <= tol
        assert anchor_morphism_residual(sys.spec, x) <= tol


def test_shape_errors_are_reported():
    spec = AffgebroidSpec(2, 2, lambda x: np.zeros(3), lambda x: np.zeros((2, 2)),
                          lambda x: np.zeros((2, 2)), lambda x: np.zeros((2, 2, 2)))
    with pytest.raises(StructureEvaluationError, match="anchor_drift"):
        spec.rho0(np.zeros(2))
    with pytest.raises(ValueError):
        AffgebroidSpec(0, 1, None, None, None, None)


def test_specs_are_immutable_and_thread_safe(rng):
    spec = kepler_affgebroid()
    with pytest.raises(FrozenInstanceError):
        spec.rank = 3
    const = constant_affgebroid(2, 1, [1, 0], [[0], [1]])
    with pytest.raises(ValueError):
        const.rho(np.zeros(2))[0, 0] = 5.0
    xs = [kepler_point(rng) for _ in range(40)]
    serial = [jacobi_residual(spec, x) for x in xs]
    with ThreadPoolExecutor(4) as pool:
        parallel = list(pool.map(lambda x: jacobi_residual(spec, x), xs))
    assert serial == parallel
    assert replace(spec, name="copy") == spec
