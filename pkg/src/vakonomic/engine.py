"""Vakonomic systems: constraint graph, momenta, regularity and the explicit ODE.

A state is (x, y_A, u) where y_A are the momenta paired with the
constrained directions and u = y^a are the free fiber velocities. The full
fiber point is ybar with ybar[A] = Psi^A(x, u), ybar[a] = u.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .affgebroid import AffgebroidSpec
from .errors import NoConvergence, SingularRegularity
from .fields import ScalarField

log = logging.getLogger(__name__)

NEWTON_FLOOR = 1e-8


@dataclass(frozen=True)
class ConstraintMap:
    """Constraint y^A = Psi^A(x, y^a); each psi field takes (x, y^a)."""

    constrained: tuple = ()
    free: tuple = ()
    psi: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "constrained", tuple(int(i) for i in self.constrained))
        object.__setattr__(self, "free", tuple(int(i) for i in self.free))
        object.__setattr__(self, "psi", tuple(self.psi))
        if len(self.psi) != len(self.constrained):
            raise ValueError("need one psi field per constrained index")
        if set(self.constrained) & set(self.free):
            raise ValueError("constrained and free indices overlap")

    @classmethod
    def none(cls, rank: int) -> "ConstraintMap":
        return cls((), tuple(range(rank)), ())

    @property
    def size(self) -> int:
        return len(self.constrained)


@dataclass(frozen=True)
class Tolerances:
    singular_det: float = 1e-10
    newton_tol: float = 1e-12
    newton_max_iter: int = 50


@dataclass(frozen=True)
class VakonomicSystem:
    spec: AffgebroidSpec
    lagrangian: ScalarField
    constraint: ConstraintMap
    tolerances: Tolerances = field(default_factory=Tolerances)
    name: str = field(default="", compare=False)

    def __post_init__(self):
        n = self.spec.rank
        idx = sorted(self.constraint.constrained + self.constraint.free)
        if idx != list(range(n)):
            raise ValueError(f"constrained+free indices must partition 0..{n - 1}, got {idx}")
        object.__setattr__(self, "_cidx", np.array(self.constraint.constrained, dtype=int))
        object.__setattr__(self, "_fidx", np.array(self.constraint.free, dtype=int))

    @property
    def m(self) -> int:
        return self.spec.base_dim

    @property
    def n(self) -> int:
        return self.spec.rank

    @property
    def mbar(self) -> int:
        return self.constraint.size

    @property
    def k(self) -> int:
        return self.n - self.mbar

    @property
    def cidx(self):
        return self._cidx

    @property
    def fidx(self):
        return self._fidx

    def state_size(self) -> int:
        return self.m + self.n

    def split_momenta(self, y_momenta):
        y = np.asarray(y_momenta, dtype=float)
        return y[self._cidx], y[self._fidx]

    def join_momenta(self, y_A, y_a):
        out = np.empty(self.n)
        out[self._cidx] = y_A
        out[self._fidx] = y_a
        return out


@dataclass(frozen=True)
class VakonomicState:
    x: np.ndarray
    y_A: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        for name in ("x", "y_A", "controls"):
            a = np.array(getattr(self, name), dtype=float).reshape(-1)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"state component {name} has non-finite entries")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def pack(self):
        return np.concatenate([self.x, self.y_A, self.controls])

    @classmethod
    def unpack(cls, sys: VakonomicSystem, v):
        m, mb = sys.m, sys.mbar
        v = np.asarray(v, dtype=float)
        return cls(v[:m], v[m:m + mb], v[m + mb:m + sys.n])


@dataclass(frozen=True)
class VakonomicRhs:
    dx: np.ndarray
    dy_A: np.ndarray
    dy_a: np.ndarray

    def pack(self):
        return np.concatenate([self.dx, self.dy_A, self.dy_a])


@dataclass(frozen=True)
class RegularityReport:
    det: float
    condition_estimate: float
    regular: bool


@dataclass(frozen=True)
class FreeRhs:
    dx: np.ndarray
    dy: np.ndarray


class _Jet:
    """Values and derivatives of L, Psi and the restricted Lagrangian at one point."""

    def __init__(self, sys: VakonomicSystem, x, y_A, u, order=2):
        m, n, k, mb = sys.m, sys.n, sys.k, sys.mbar
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        y_A = np.asarray(y_A, dtype=float)
        z = np.concatenate([x, u])
        psi = sys.constraint.psi
        self.x, self.u, self.y_A = x, u, y_A
        self.psi = np.array([f(z) for f in psi], dtype=float)
        self.dpsi = np.array([f.grad(z) for f in psi], dtype=float).reshape(mb, m + k)
        ybar = np.empty(n)
        ybar[sys.cidx] = self.psi
        ybar[sys.fidx] = u
        self.ybar = ybar
        w = np.concatenate([x, ybar])
        self.w = w
        self.L = sys.lagrangian(w)
        gL = sys.lagrangian.grad(w)
        self.gL = gL
        # d(x, ybar)/d(x, u)
        J = np.zeros((m + n, m + k))
        J[:m, :m] = np.eye(m)
        J[m + sys.cidx, :] = self.dpsi
        J[m + sys.fidx, m:] = np.eye(k)
        self.J = J
        gLt = J.T @ gL
        gy_c = gL[m + sys.cidx]
        # L-tilde_x - y_A Psi_x and L-tilde_u - y_A Psi_u
        self.force = gLt[:m] - y_A @ self.dpsi[:, :m]
        self.mf = gLt[m:] - y_A @ self.dpsi[:, m:]
        self.gLt = gLt
        if order >= 2:
            HL = sys.lagrangian.hess(w)
            self.HL = HL
            if mb:
                hpsi = np.array([f.hess(z) for f in psi], dtype=float)
            else:
                hpsi = np.zeros((0, m + k, m + k))
            self.hpsi = hpsi
            W = J.T @ HL @ J + np.einsum("A,Aij->ij", gy_c - y_A, hpsi)
            self.W = W
            self.R = W[m:, m:]
            self.mixed = W[m:, :m]


def _jet(sys, state: VakonomicState, order=2):
    return _Jet(sys, state.x, state.y_A, state.controls, order)


def full_fiber(sys: VakonomicSystem, x, controls):
    x = np.asarray(x, dtype=float)
    u = np.asarray(controls, dtype=float)
    z = np.concatenate([x, u])
    ybar = np.empty(sys.n)
    ybar[sys.cidx] = [f(z) for f in sys.constraint.psi]
    ybar[sys.fidx] = u
    return ybar


def restricted_lagrangian(sys: VakonomicSystem, x, controls) -> float:
    return float(sys.lagrangian(np.concatenate([np.asarray(x, dtype=float), full_fiber(sys, x, controls)])))


def restricted_lagrangian_derivatives(sys: VakonomicSystem, x, controls):
    """(value, gradient, Hessian) of L-tilde in (x, y^a), by the chain rule."""
    j = _Jet(sys, x, np.zeros(sys.mbar), controls, order=2)
    gy_c = j.gL[sys.m + sys.cidx]
    H = j.J.T @ j.HL @ j.J + np.einsum("A,Aij->ij", gy_c, j.hpsi)
    return j.L, j.gLt, H


def momenta_free(sys: VakonomicSystem, state: VakonomicState):
    return _jet(sys, state, order=1).mf


def full_momenta(sys: VakonomicSystem, state: VakonomicState):
    """(y_A, y_a) assembled in fiber order."""
    return sys.join_momenta(state.y_A, momenta_free(sys, state))


def w1_residual(sys: VakonomicSystem, state: VakonomicState, y_a):
    """phi_a = y_a - (dL~/dy^a - y_A dPsi^A/dy^a); zero on W1."""
    return np.asarray(y_a, dtype=float) - momenta_free(sys, state)


def w1prime_y0(sys: VakonomicSystem, state: VakonomicState) -> float:
    j = _jet(sys, state, order=1)
    return float(j.L - state.y_A @ j.psi - j.mf @ state.controls)


def pontryagin_hamiltonian(sys: VakonomicSystem, x, y0, y_momenta, controls) -> float:
    y_A, y_a = sys.split_momenta(y_momenta)
    u = np.asarray(controls, dtype=float)
    z = np.concatenate([np.asarray(x, dtype=float), u])
    psi = np.array([f(z) for f in sys.constraint.psi])
    return float(y0 + y_a @ u + y_A @ psi - restricted_lagrangian(sys, x, u))


def regularity_matrix(sys: VakonomicSystem, state: VakonomicState):
    return _jet(sys, state).R


def _report(sys, R, cond_if_regular=True):
    k = R.shape[0]
    if k == 0:
        return RegularityReport(1.0, 1.0, True)
    det = float(np.linalg.det(R))
    scale = max(1.0, float(np.max(np.abs(R))))
    regular = abs(det) > sys.tolerances.singular_det * scale
    if regular and not cond_if_regular:
        return RegularityReport(det, float("nan"), True)
    cond = float(np.linalg.cond(R)) if np.all(np.isfinite(R)) else float("inf")
    return RegularityReport(det, cond, regular)


def regularity_check(sys: VakonomicSystem, state: VakonomicState) -> RegularityReport:
    return _report(sys, regularity_matrix(sys, state))


def _structure_terms(sys, x, ybar, P):
    """y_g (C^g_{a0} + ybar^b C^g_{ab}) for every a, and y_g C^g_{0b} ybar^b."""
    C0 = sys.spec.c0(x)
    C = sys.spec.c(x)
    K = -C0 + np.einsum("gab,b->ga", C, ybar)
    return P @ K, P @ C0 @ ybar


def _evaluate(sys: VakonomicSystem, x, y_A, u):
    """Explicit vakonomic vector field plus the generalized forces G_0, G_a."""
    j = _Jet(sys, x, y_A, u)
    spec = sys.spec
    rho0, rho = spec.rho0(x), spec.rho(x)
    P = sys.join_momenta(y_A, j.mf)
    dx = rho0 + rho @ j.ybar
    struct, struct0 = _structure_terms(sys, x, j.ybar, P)
    G = rho.T @ j.force - struct
    G0 = rho0 @ j.force - struct0
    dy_A = G[sys.cidx]
    rep = _report(sys, j.R, cond_if_regular=False)
    if not rep.regular:
        raise SingularRegularity(
            f"regularity matrix singular (det={rep.det:.3e}, cond={rep.condition_estimate:.3e})",
            rep.det, rep.condition_estimate)
    b = G[sys.fidx] - j.mixed @ dx + j.dpsi[:, sys.m:].T @ dy_A
    du = np.linalg.solve(j.R, b) if sys.k else np.zeros(0)
    return dx, dy_A, du, G, G0, j


def vakonomic_rhs(sys: VakonomicSystem, state: VakonomicState) -> VakonomicRhs:
    dx, dy_A, du, *_ = _evaluate(sys, state.x, state.y_A, state.controls)
    return VakonomicRhs(dx, dy_A, du)


def generalized_forces(sys: VakonomicSystem, state: VakonomicState):
    """(G_0, G) where dy_A/dt = G_A, d/dt y_a = G_a along solutions and dy_0/dt = G_0."""
    _, _, _, G, G0, _ = _evaluate(sys, state.x, state.y_A, state.controls)
    return G0, G


def momenta_rate(sys: VakonomicSystem, state: VakonomicState, rates: VakonomicRhs):
    """Time derivative of momenta_free along a curve with the given rates."""
    j = _jet(sys, state)
    m = sys.m
    return (j.W[m:, :] @ np.concatenate([rates.dx, rates.dy_a])
            - j.dpsi[:, m:].T @ rates.dy_A)


def controls_from_momenta(sys: VakonomicSystem, x, y_momenta, seed=None):
    """Invert the free momenta map for y^a by Newton iteration."""
    y_A, y_a = sys.split_momenta(y_momenta)
    u = np.array(y_a if seed is None else seed, dtype=float)
    tol = sys.tolerances
    scale = max(1.0, float(np.max(np.abs(y_a), initial=0.0)))
    res = prev = np.inf
    for it in range(tol.newton_max_iter):
        j = _Jet(sys, x, y_A, u)
        F = j.mf - y_a
        res = float(np.max(np.abs(F), initial=0.0))
        if res <= tol.newton_tol * scale:
            return u
        # difference-quotient derivatives leave a noise floor above newton_tol;
        # stop once the residual is tiny and no longer shrinking
        if res <= NEWTON_FLOOR * scale and res > 0.5 * prev:
            log.debug("momenta inversion stopped at noise floor %.3e", res)
            return u
        prev = res
        rep = _report(sys, j.R, cond_if_regular=False)
        if not rep.regular:
            raise SingularRegularity(
                f"regularity matrix singular during momenta inversion (det={rep.det:.3e})",
                rep.det, rep.condition_estimate)
        u = u - np.linalg.solve(j.R, F)
    raise NoConvergence(f"momenta inversion did not converge in {tol.newton_max_iter} steps "
                        f"(residual {res:.3e})", tol.newton_max_iter, res)


def multiplier_form_residual(sys: VakonomicSystem, state: VakonomicState, rhs: VakonomicRhs):
    """Residual of the multiplier form of the equations, one entry per fiber index.

    Uses phi^A = y^A - Psi^A and lambda_A = y_A - dL/dy^A on the full fiber,
    with time derivatives from the full Hessian of L (not of L-tilde).
    """
    m, n, mb = sys.m, sys.n, sys.mbar
    x, u = state.x, state.controls
    j = _jet(sys, state)
    spec = sys.spec
    rho = spec.rho(x)
    dx, du, dyA = rhs.dx, rhs.dy_a, rhs.dy_A
    zdot = np.concatenate([dx, du])
    dybar = np.empty(n)
    dybar[sys.cidx] = j.dpsi @ zdot
    dybar[sys.fidx] = du
    wdot = np.concatenate([dx, dybar])

    gLy = j.gL[m:]
    dgLy = j.HL[m:, :] @ wdot
    lam = state.y_A - gLy[sys.cidx]
    dlam = dyA - dgLy[sys.cidx]

    # dphi^A/dy^alpha and its time derivative, dphi^A/dx
    dphi_dy = np.zeros((mb, n))
    dphi_dy[np.arange(mb), sys.cidx] = 1.0
    dphi_dy[:, sys.fidx] = -j.dpsi[:, m:]
    ddphi_dy = np.zeros((mb, n))
    if mb:
        ddphi_dy[:, sys.fidx] = -np.einsum("Aij,j->Ai", j.hpsi[:, m:, :], zdot)
    dphi_dx = -j.dpsi[:, :m]

    P = gLy + lam @ dphi_dy
    struct, _ = _structure_terms(sys, x, j.ybar, P)
    return (dgLy - rho.T @ j.gL[:m]
            + lam @ (ddphi_dy - dphi_dx @ rho)
            + dlam @ dphi_dy
            + struct)


def euler_lagrange_rhs(sys: VakonomicSystem, x, y) -> FreeRhs:
    """Unconstrained equations d/dt dL/dy = rho^T dL/dx - (C_{.0} + C_{..} y)^T dL/dy."""
    if sys.mbar:
        raise ValueError("euler_lagrange_rhs requires an unconstrained system")
    m = sys.m
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.concatenate([x, y])
    g = sys.lagrangian.grad(w)
    H = sys.lagrangian.hess(w)
    spec = sys.spec
    dx = spec.rho0(x) + spec.rho(x) @ y
    K = -spec.c0(x) + np.einsum("gab,b->ga", spec.c(x), y)
    b = spec.rho(x).T @ g[:m] - K.T @ g[m:] - H[m:, :m] @ dx
    Hyy = H[m:, m:]
    rep = _report(sys, Hyy)
    if not rep.regular:
        raise SingularRegularity("fiber Hessian of L is singular", rep.det, rep.condition_estimate)
    return FreeRhs(dx, np.linalg.solve(Hyy, b))


def random_state(sys: VakonomicSystem, rng, scale=1.0, x_sampler=None) -> VakonomicState:
    x = x_sampler(rng) if x_sampler is not None else rng.uniform(-scale, scale, sys.m)
    return VakonomicState(x, rng.uniform(-scale, scale, sys.mbar), rng.uniform(-scale, scale, sys.k))
