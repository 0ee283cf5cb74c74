"""Example systems with closed-form reference equations.

Fiber indices are 0-based: the sphere's e_1..e_5 are fiber slots 0..4,
the Kepler thruster's e_1..e_4 are slots 0..3.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .affgebroid import AffgebroidSpec, constant_affgebroid
from .engine import (ConstraintMap, VakonomicRhs, VakonomicState, VakonomicSystem,
                     FreeRhs)
from .errors import OriginSingularity
from .fields import ScalarField, constant_field, fd_jacobian, quadratic_field


def _maybe_fd(sys: VakonomicSystem, fd: bool) -> VakonomicSystem:
    if not fd:
        return sys
    c = sys.constraint
    return VakonomicSystem(
        sys.spec.with_fd(),
        sys.lagrangian.without_derivatives(),
        ConstraintMap(c.constrained, c.free, tuple(f.without_derivatives() for f in c.psi)),
        sys.tolerances,
        name=sys.name,
    )


# rolling sphere on a rotating table

def so3_structure():
    """[e3,e4]=e5, [e4,e5]=e3, [e5,e3]=e4 on fiber slots 2, 3, 4."""
    C = np.zeros((5, 5, 5))
    for a, b, g in ((2, 3, 4), (3, 4, 2), (4, 2, 3)):
        C[g, a, b] = 1.0
        C[g, b, a] = -1.0
    return C


def sphere_affgebroid() -> AffgebroidSpec:
    """Base (t, x, y); e_0 = d/dt, e_1 = d/dx, e_2 = d/dy, e_3..e_5 vertical."""
    anchor = np.zeros((3, 5))
    anchor[1, 0] = anchor[2, 1] = 1.0
    return constant_affgebroid(3, 5, [1.0, 0.0, 0.0], anchor, c=so3_structure(),
                               name="sphere-atiyah")


@dataclass(frozen=True)
class SphereParams:
    r: float = 1.0
    m_mass: float = 1.0
    k: float = 1.0
    omega: Callable = lambda t: 1.0
    c: float = 0.0
    omega_rate: Optional[Callable] = lambda t: 0.0
    omega_accel: Optional[Callable] = lambda t: 0.0

    def __post_init__(self):
        if self.r <= 0 or self.m_mass <= 0 or self.k <= 0:
            raise ValueError("r, m_mass and k must be positive")

    @classmethod
    def constant(cls, omega0=1.0, **kw):
        return cls(omega=lambda t: omega0, omega_rate=lambda t: 0.0,
                   omega_accel=lambda t: 0.0, **kw)

    @classmethod
    def oscillating(cls, omega0=1.0, omega1=0.5, freq=1.0, **kw):
        """Table speed omega0 + omega1 sin(freq t)."""
        return cls(omega=lambda t: omega0 + omega1 * np.sin(freq * t),
                   omega_rate=lambda t: omega1 * freq * np.cos(freq * t),
                   omega_accel=lambda t: -omega1 * freq ** 2 * np.sin(freq * t), **kw)


def sphere_psi(p: SphereParams):
    """Rolling constraints as fields of z = (t, x, y, y1, y2)."""
    r, W = p.r, p.omega
    exact = p.omega_rate is not None and p.omega_accel is not None

    def psi3(z):
        return (-z[4] + W(z[0]) * z[1]) / r

    def psi4(z):
        return (z[3] + W(z[0]) * z[2]) / r

    if not exact:
        return (ScalarField(psi3), ScalarField(psi4), constant_field(p.c, 5))
    dW, ddW = p.omega_rate, p.omega_accel

    def g3(z):
        return np.array([dW(z[0]) * z[1], W(z[0]), 0.0, 0.0, -1.0]) / r

    def h3(z):
        H = np.zeros((5, 5))
        H[0, 0] = ddW(z[0]) * z[1]
        H[0, 1] = H[1, 0] = dW(z[0])
        return H / r

    def g4(z):
        return np.array([dW(z[0]) * z[2], 0.0, W(z[0]), 1.0, 0.0]) / r

    def h4(z):
        H = np.zeros((5, 5))
        H[0, 0] = ddW(z[0]) * z[2]
        H[0, 2] = H[2, 0] = dW(z[0])
        return H / r

    return (ScalarField(psi3, g3, h3), ScalarField(psi4, g4, h4), constant_field(p.c, 5))


def build_rolling_sphere(p: SphereParams = SphereParams(), lagrangian: str = "cost",
                         fd: bool = False) -> VakonomicSystem:
    """Sphere rolling without slipping on a table turning at rate omega(t).

    ``lagrangian="cost"`` minimizes the planar control effort
    ½((y1)² + (y2)²); ``"kinetic"`` uses the full kinetic energy with
    translational mass m and moment of inertia m k².
    """
    if lagrangian == "cost":
        Q = np.diag([0, 0, 0, 1, 1, 0, 0, 0.0])
    elif lagrangian == "kinetic":
        mk2 = p.m_mass * p.k ** 2
        Q = np.diag([0, 0, 0, p.m_mass, p.m_mass, mk2, mk2, mk2])
    else:
        raise ValueError(f"unknown sphere lagrangian {lagrangian!r}")
    sys = VakonomicSystem(sphere_affgebroid(), quadratic_field(Q),
                          ConstraintMap((2, 3, 4), (0, 1), sphere_psi(p)),
                          name=f"sphere-{lagrangian}")
    return _maybe_fd(sys, fd)


def sphere_oracle_rhs(p: SphereParams, state: VakonomicState) -> VakonomicRhs:
    """Hand-reduced equations for the cost configuration."""
    t, x, y = state.x
    y3, y4, y5 = state.y_A
    u1, u2 = state.controls
    r, c, W = p.r, p.c, p.omega(t)
    d3 = -(u1 + W * y) * y5 / r + c * y4
    d4 = -(u2 - W * x) * y5 / r - c * y3
    d5 = (u1 + W * y) * y3 / r - (-u2 + W * x) * y4 / r
    du1 = (d4 - W * y3) / r
    du2 = (-d3 - W * y4) / r
    return VakonomicRhs(np.array([1.0, u1, u2]), np.array([d3, d4, d5]), np.array([du1, du2]))


def sphere_w1prime_coordinates(p: SphereParams, state: VakonomicState):
    """(y_1, y_2, y_0) on the secondary constraint set, cost configuration."""
    t, x, y = state.x
    y3, y4, y5 = state.y_A
    u1, u2 = state.controls
    r, W = p.r, p.omega(t)
    y1 = u1 - y4 / r
    y2 = u2 + y3 / r
    y0 = (-0.5 * (y1 + y4 / r) ** 2 - 0.5 * (y2 - y3 / r) ** 2
          - W / r * (x * y3 + y * y4) - p.c * y5)
    return y1, y2, y0


def sphere_momentum_flow(p: SphereParams, x, y_momenta) -> FreeRhs:
    """Cost-configuration flow written in the coordinates (x, y_1, ..., y_5)."""
    t, X, Y = x
    y1, y2, y3, y4, y5 = y_momenta
    r, c, W = p.r, p.c, p.omega(t)
    dx = np.array([1.0, y1 + y4 / r, y2 - y3 / r])
    dy = np.array([
        -W * y3 / r,
        -W * y4 / r,
        -(y1 + y4 / r + W * Y) * y5 / r + c * y4,
        (-y2 + y3 / r + W * X) * y5 / r - c * y3,
        ((y1 + y4 / r + W * Y) * y3 + (y2 - y3 / r - W * X) * y4) / r,
    ])
    return FreeRhs(dx, dy)


# planar Kepler problem with thrust

ORIGIN_TOL = 1e-12


def _inv_r_derivs(q1, q2):
    """Gradient, Hessian and third derivative of 1/|q| in the plane."""
    q = np.array([q1, q2])
    rr = np.hypot(q1, q2)
    if rr < ORIGIN_TOL:
        raise OriginSingularity(f"Kepler field evaluated at |q|={rr:.3e}")
    I = np.eye(2)
    g = -q / rr ** 3
    H = (3 * np.outer(q, q) - rr ** 2 * I) / rr ** 5
    T = (3 * (np.einsum("ij,k->ijk", I, q) + np.einsum("ik,j->ijk", I, q)
              + np.einsum("jk,i->ijk", I, q)) / rr ** 5
         - 15 * np.einsum("i,j,k->ijk", q, q, q) / rr ** 7)
    return g, H, T


def kepler_affgebroid(fd: bool = False) -> AffgebroidSpec:
    """Base (t, q1, q2, v1, v2); e_0 is the Kepler drift, e_1..e_4 coordinate fields."""
    anchor = np.zeros((5, 4))
    anchor[1:, :] = np.eye(4)
    anchor.setflags(write=False)
    C = np.zeros((4, 4, 4))

    def drift(x):
        g, _, _ = _inv_r_derivs(x[1], x[2])
        return np.array([1.0, x[3], x[4], g[0], g[1]])

    def drift_jac(x):
        _, H, _ = _inv_r_derivs(x[1], x[2])
        D = np.zeros((5, 5))
        D[1, 3] = D[2, 4] = 1.0
        D[3:, 1:3] = H
        return D

    def c0(x):
        _, H, _ = _inv_r_derivs(x[1], x[2])
        C0 = np.zeros((4, 4))
        C0[2:, :2] = -H
        C0[0, 2] = C0[1, 3] = -1.0
        return C0

    def c0_jac(x):
        _, _, T = _inv_r_derivs(x[1], x[2])
        D = np.zeros((4, 4, 5))
        D[2:, :2, 1:3] = -T
        return D

    if fd:
        def c0_fd(x):
            return _c0_from_drift_jac(fd_jacobian(drift, x))

        return AffgebroidSpec(5, 4, drift, lambda x: anchor, c0_fd, lambda x: C, name="kepler")
    return AffgebroidSpec(
        5, 4, drift, lambda x: anchor, c0, lambda x: C,
        anchor_drift_jac=drift_jac,
        anchor_linear_jac=lambda x: np.zeros((5, 4, 5)),
        structure_drift_jac=c0_jac,
        structure_linear_jac=lambda x: np.zeros((4, 4, 4, 5)),
        name="kepler",
    )


def _c0_from_drift_jac(D):
    # e_a are coordinate fields, so [e_0, e_a] = -d(drift)/dx^a
    return -D[1:, 1:]


def build_kepler_thruster(fd: bool = False) -> VakonomicSystem:
    """Unit mass in a 1/r potential with planar thrust (u1, u2) = (y^3, y^4)."""
    Q = np.zeros((9, 9))
    Q[7, 7] = Q[8, 8] = 1.0
    zero = constant_field(0.0, 7)
    sys = VakonomicSystem(kepler_affgebroid(fd), quadratic_field(Q),
                          ConstraintMap((0, 1), (2, 3), (zero, zero)), name="kepler")
    return _maybe_fd(sys, fd)


def kepler_oracle_rhs(state: VakonomicState) -> VakonomicRhs:
    t, q1, q2, v1, v2 = state.x
    y1, y2 = state.y_A
    u1, u2 = state.controls
    rr = np.hypot(q1, q2)
    if rr < ORIGIN_TOL:
        raise OriginSingularity(f"Kepler field evaluated at |q|={rr:.3e}")
    r3, r5 = rr ** 3, rr ** 5
    dx = np.array([1.0, v1, v2, -q1 / r3 + u1, -q2 / r3 + u2])
    dy1 = -(u1 * (2 * q1 ** 2 - q2 ** 2) + 3 * u2 * q1 * q2) / r5
    dy2 = -(3 * u1 * q1 * q2 + u2 * (2 * q2 ** 2 - q1 ** 2)) / r5
    return VakonomicRhs(dx, np.array([dy1, dy2]), np.array([-y1, -y2]))


# time-dependent mechanics on a first jet bundle

def jet_affgebroid(k: int) -> AffgebroidSpec:
    """Base (t, q^1..q^k), e_0 = d/dt, e_i = d/dq^i, all brackets zero."""
    anchor = np.zeros((k + 1, k))
    anchor[1:, :] = np.eye(k)
    drift = np.zeros(k + 1)
    drift[0] = 1.0
    return constant_affgebroid(k + 1, k, drift, anchor, name=f"jet{k}")


def build_jet_bundle(m_config: int, lagrangian: ScalarField, psi=(), constrained=(),
                     fd: bool = False, name: str = "jet") -> VakonomicSystem:
    """Lagrangian of (t, q, qdot); psi fields of (t, q, free qdot)."""
    free = tuple(i for i in range(m_config) if i not in set(constrained))
    sys = VakonomicSystem(jet_affgebroid(m_config), lagrangian,
                          ConstraintMap(tuple(constrained), free, tuple(psi)), name=name)
    return _maybe_fd(sys, fd)


def build_jet_free(m_config: int = 2, fd: bool = False) -> VakonomicSystem:
    """Free particle: L = ½|qdot|²."""
    Q = np.zeros((2 * m_config + 1,) * 2)
    Q[m_config + 1:, m_config + 1:] = np.eye(m_config)
    return build_jet_bundle(m_config, quadratic_field(Q), fd=fd, name="jet-free")


def build_jet_oscillator(fd: bool = False) -> VakonomicSystem:
    """Driven anisotropic oscillator in the plane with an explicit time force."""
    def val(w):
        t, q1, q2, y1, y2 = w
        return 0.5 * (y1 ** 2 + 2 * y2 ** 2) - 0.5 * (q1 ** 2 + 3 * q2 ** 2) + q1 * q2 * 0.2 \
            + 0.3 * np.sin(t) * q1 + 0.1 * y1 * q2

    def grad(w):
        t, q1, q2, y1, y2 = w
        return np.array([0.3 * np.cos(t) * q1, -q1 + 0.2 * q2 + 0.3 * np.sin(t),
                         -3 * q2 + 0.2 * q1 + 0.1 * y1, y1 + 0.1 * q2, 2 * y2])

    def hess(w):
        t, q1 = w[0], w[1]
        H = np.zeros((5, 5))
        H[0, 0] = -0.3 * np.sin(t) * q1
        H[0, 1] = H[1, 0] = 0.3 * np.cos(t)
        H[1, 1], H[1, 2], H[2, 1], H[2, 2] = -1.0, 0.2, 0.2, -3.0
        H[2, 3] = H[3, 2] = 0.1
        H[3, 3], H[4, 4] = 1.0, 2.0
        return H

    return build_jet_bundle(2, ScalarField(val, grad, hess), fd=fd, name="jet-oscillator")


def build_jet_penny(fd: bool = False) -> VakonomicSystem:
    """L = ½((qdot1)² + (qdot2)²) with the affine constraint qdot1 = q2."""
    Q = np.zeros((5, 5))
    Q[3, 3] = Q[4, 4] = 1.0
    g = np.array([0.0, 0.0, 1.0, 0.0])
    psi = ScalarField(lambda z: z[2], lambda z: g, lambda z: np.zeros((4, 4)))
    return build_jet_bundle(2, quadratic_field(Q), (psi,), (0,), fd=fd, name="jet-penny")


def jet_penny_oracle_rhs(state: VakonomicState) -> VakonomicRhs:
    """Multiplier p stays constant and the free speed obeys u' = q2 - p."""
    t, q1, q2 = state.x
    (p,) = state.y_A
    (u,) = state.controls
    return VakonomicRhs(np.array([1.0, q2, u]), np.array([0.0]), np.array([q2 - p]))


# mechanical systems with affine constraints

@dataclass(frozen=True)
class MechanicalAffineParams:
    """Potential V(x), orthonormal adapted basis, constraint directions ``constrained``."""

    potential: ScalarField
    constrained: tuple = ()
    orthonormal: bool = True

    def __post_init__(self):
        if not self.orthonormal:
            raise ValueError("only orthonormal adapted bases are supported")


def build_mechanical_affine(spec: AffgebroidSpec, p: MechanicalAffineParams,
                            fd: bool = False, name: str = "mech-affine") -> VakonomicSystem:
    """L = ½|e_0 + y^a e_a|² - V with y^A = 0 on the constraint subbundle."""
    m, n = spec.base_dim, spec.rank
    V = p.potential

    def val(w):
        return 0.5 + 0.5 * w[m:] @ w[m:] - V(w[:m])

    def grad(w):
        return np.concatenate([-V.grad(w[:m]), w[m:]])

    def hess(w):
        H = np.zeros((m + n, m + n))
        H[:m, :m] = -V.hess(w[:m])
        H[m:, m:] = np.eye(n)
        return H

    free = tuple(i for i in range(n) if i not in set(p.constrained))
    zero = constant_field(0.0, m + len(free))
    sys = VakonomicSystem(spec, ScalarField(val, grad, hess),
                          ConstraintMap(tuple(p.constrained), free, (zero,) * len(p.constrained)),
                          name=name)
    return _maybe_fd(sys, fd)


def mechanical_oracle_rhs(spec: AffgebroidSpec, p: MechanicalAffineParams,
                          state: VakonomicState) -> VakonomicRhs:
    n = spec.rank
    A = np.array(p.constrained, dtype=int)
    a = np.array([i for i in range(n) if i not in set(p.constrained)], dtype=int)
    x, u = state.x, state.controls
    y = np.empty(n)
    y[A], y[a] = state.y_A, u
    rho0, rho = spec.rho0(x), spec.rho(x)
    C0, C = spec.c0(x), spec.c(x)
    dx = rho0 + rho[:, a] @ u
    # y_g (C^g_{alpha 0} + C^g_{alpha a} y_a)
    K = -C0 + np.einsum("gab,b->ga", C[:, :, a], u)
    dy = -rho.T @ p.potential.grad(x) - y @ K
    return VakonomicRhs(dx, dy[A], dy[a])


def mechanical_energy(p: MechanicalAffineParams, state: VakonomicState) -> float:
    """½ Σ (y_a)² + V(x); the secondary-constraint y_0 equals ½ minus this."""
    u = state.controls
    return float(0.5 * u @ u + p.potential(state.x))


def default_mechanical_params() -> MechanicalAffineParams:
    def val(x):
        t, X, Y = x
        return 0.5 * (X ** 2 + 2 * Y ** 2) + 0.3 * np.sin(t) * X

    def grad(x):
        t, X, Y = x
        return np.array([0.3 * np.cos(t) * X, X + 0.3 * np.sin(t), 2 * Y])

    def hess(x):
        t, X = x[0], x[1]
        return np.array([[-0.3 * np.sin(t) * X, 0.3 * np.cos(t), 0.0],
                         [0.3 * np.cos(t), 1.0, 0.0],
                         [0.0, 0.0, 2.0]])

    return MechanicalAffineParams(ScalarField(val, grad, hess), constrained=(2,))


def build_atiyah_free(fd: bool = False) -> VakonomicSystem:
    """Unconstrained sphere-like body: unequal inertia, planar potential, no constraints."""
    inertia = np.array([1.0, 1.5, 0.7, 1.3, 2.1])

    def val(w):
        t, X, Y = w[:3]
        y = w[3:]
        return 0.5 * inertia @ y ** 2 + 0.2 * y[2] * X - 0.5 * (X ** 2 + Y ** 2) * (1 + 0.1 * t)

    def grad(w):
        t, X, Y = w[:3]
        y = w[3:]
        g = np.empty(8)
        g[0] = -0.05 * (X ** 2 + Y ** 2)
        g[1] = 0.2 * y[2] - X * (1 + 0.1 * t)
        g[2] = -Y * (1 + 0.1 * t)
        g[3:] = inertia * y
        g[5] += 0.2 * X
        return g

    def hess(w):
        t, X, Y = w[:3]
        H = np.zeros((8, 8))
        H[0, 1] = H[1, 0] = -0.1 * X
        H[0, 2] = H[2, 0] = -0.1 * Y
        H[1, 1] = H[2, 2] = -(1 + 0.1 * t)
        H[1, 5] = H[5, 1] = 0.2
        H[3:, 3:] = np.diag(inertia)
        return H

    sys = VakonomicSystem(sphere_affgebroid(), ScalarField(val, grad, hess),
                          ConstraintMap.none(5), name="atiyah-free")
    return _maybe_fd(sys, fd)


# registry used by the command line

@dataclass(frozen=True)
class ModelEntry:
    key: str
    description: str
    build: Callable
    initial: Callable
    sampler: Callable = None
    defaults: dict = field(default_factory=dict)


def _sphere_params(params):
    kw = dict(r=1.0, m_mass=1.0, k=1.0, c=0.0, omega0=1.0, omega1=0.0, omega_freq=1.0)
    kw.update(params)
    return SphereParams.oscillating(kw["omega0"], kw["omega1"], kw["omega_freq"],
                                    r=kw["r"], m_mass=kw["m_mass"], k=kw["k"], c=kw["c"])


def _sphere_initial(sys):
    return VakonomicState([0.0, 0.3, -0.2], [0.2, -0.1, 0.4], [0.5, -0.3])


def _kepler_sampler(sys, rng, scale=1.0):
    ang = rng.uniform(0, 2 * np.pi)
    rr = rng.uniform(0.5, 2.0)
    x = np.array([rng.uniform(-1, 1), rr * np.cos(ang), rr * np.sin(ang),
                  rng.uniform(-1, 1), rng.uniform(-1, 1)])
    return VakonomicState(x, rng.uniform(-scale, scale, 2), rng.uniform(-scale, scale, 2))


def _uniform_sampler(sys, rng, scale=1.0):
    return VakonomicState(rng.uniform(-scale, scale, sys.m), rng.uniform(-scale, scale, sys.mbar),
                          rng.uniform(-scale, scale, sys.k))


MODELS = {
    "sphere": ModelEntry(
        "sphere", "rolling sphere on a rotating table, control-effort cost",
        lambda params, fd=False: build_rolling_sphere(_sphere_params(params), "cost", fd),
        _sphere_initial, _uniform_sampler,
        dict(r=1.0, c=0.0, omega0=1.0, omega1=0.0, omega_freq=1.0)),
    "sphere-kinetic": ModelEntry(
        "sphere-kinetic", "rolling sphere on a rotating table, kinetic-energy Lagrangian",
        lambda params, fd=False: build_rolling_sphere(_sphere_params(params), "kinetic", fd),
        _sphere_initial, _uniform_sampler,
        dict(r=1.0, m_mass=1.0, k=1.0, c=0.0, omega0=1.0, omega1=0.0, omega_freq=1.0)),
    "kepler": ModelEntry(
        "kepler", "planar Kepler problem with thrust, control-effort cost",
        lambda params, fd=False: build_kepler_thruster(fd),
        lambda sys: VakonomicState([0.0, 1.0, 0.0, 0.0, 1.0], [0.1, -0.2], [0.05, 0.0]),
        _kepler_sampler),
    "jet-free": ModelEntry(
        "jet-free", "free particle on the first jet bundle of R x R^2",
        lambda params, fd=False: build_jet_free(int(params.get("dim", 2)), fd),
        lambda sys: VakonomicState(np.zeros(sys.m), [], np.ones(sys.k)),
        _uniform_sampler, dict(dim=2)),
    "jet-penny": ModelEntry(
        "jet-penny", "jet bundle with the affine constraint qdot1 = q2",
        lambda params, fd=False: build_jet_penny(fd),
        lambda sys: VakonomicState([0.0, 0.0, 0.5], [0.2], [0.3]),
        _uniform_sampler),
    "jet-oscillator": ModelEntry(
        "jet-oscillator", "driven coupled oscillator, unconstrained",
        lambda params, fd=False: build_jet_oscillator(fd),
        lambda sys: VakonomicState([0.0, 0.5, -0.3], [], [0.1, 0.4]),
        _uniform_sampler),
    "mech-affine": ModelEntry(
        "mech-affine", "mechanical system with an affine constraint on the sphere affgebroid",
        lambda params, fd=False: build_mechanical_affine(
            sphere_affgebroid(), default_mechanical_params(), fd),
        lambda sys: VakonomicState([0.0, 0.4, 0.1], [0.3], [0.2, -0.1, 0.1, 0.5]),
        _uniform_sampler),
    "atiyah-free": ModelEntry(
        "atiyah-free", "unconstrained body on the sphere affgebroid",
        lambda params, fd=False: build_atiyah_free(fd),
        lambda sys: VakonomicState([0.0, 0.4, 0.1], [], [0.2, -0.1, 0.1, 0.5, 0.3]),
        _uniform_sampler),
}


def get_model(key: str) -> ModelEntry:
    try:
        return MODELS[key]
    except KeyError:
        raise KeyError(f"unknown model {key!r}; choose from {sorted(MODELS)}") from None
