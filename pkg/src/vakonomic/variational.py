"""Action functional and its derivative along admissible variations.

A path is anything with ``times``, ``x``, ``y_A``, ``controls`` and
``rates`` (the time derivative of (x, y_A, y^a) per sample); a
``Trajectory`` from ``integrate`` qualifies, and ``admissible_path``
builds one from prescribed controls.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicHermiteSpline

from .affgebroid import AffgebroidSpec
from .engine import VakonomicSystem, _Jet, _structure_terms, full_fiber
from .fields import FD_STEP
from .integrate import rk4_step


@dataclass(frozen=True)
class Path:
    times: np.ndarray
    x: np.ndarray
    y_A: np.ndarray
    controls: np.ndarray
    rates: np.ndarray

    def __len__(self):
        return len(self.times)

    def packed(self):
        return np.hstack([self.x, self.y_A, self.controls])


def admissible_path(sys: VakonomicSystem, times, x0, controls: Callable, controls_rate: Callable,
                    y_A: Optional[Callable] = None, y_A_rate: Optional[Callable] = None) -> Path:
    """Integrate dx/dt = anchor(x, ybar) for prescribed y^a(t), y_A(t) on ``times``."""
    times = np.asarray(times, dtype=float)
    mb = sys.mbar
    y_A = y_A or (lambda t: np.zeros(mb))
    y_A_rate = y_A_rate or (lambda t: np.zeros(mb))
    spec = sys.spec

    def f(t, x):
        u = np.atleast_1d(controls(t))
        return spec.rho0(x) + spec.rho(x) @ full_fiber(sys, x, u)

    xs = [np.array(x0, dtype=float)]
    for t, tn in zip(times[:-1], times[1:]):
        xs.append(rk4_step(f, t, xs[-1], tn - t))
    X = np.array(xs)
    U = np.array([np.atleast_1d(controls(t)) for t in times]).reshape(len(times), sys.k)
    YA = np.array([np.atleast_1d(y_A(t)) for t in times]).reshape(len(times), mb)
    dX = np.array([f(t, x) for t, x in zip(times, X)])
    dU = np.array([np.atleast_1d(controls_rate(t)) for t in times]).reshape(len(times), sys.k)
    dYA = np.array([np.atleast_1d(y_A_rate(t)) for t in times]).reshape(len(times), mb)
    return Path(times, X, YA, U, np.hstack([dX, dYA, dU]))


def action(sys: VakonomicSystem, path) -> float:
    """Composite Simpson quadrature of L along the path (y^A from the constraint)."""
    if len(path.times) < 3:
        raise ValueError("action needs at least 3 samples")
    vals = [sys.lagrangian(np.concatenate([x, full_fiber(sys, x, u)]))
            for x, u in zip(path.x, path.controls)]
    return float(simpson(vals, x=path.times))


@dataclass(frozen=True)
class LiftParts:
    base_part: np.ndarray
    fiber_part: np.ndarray


def _lift(spec: AffgebroidSpec, xbar, xbar_dot, x, y):
    K = -spec.c0(x) + np.einsum("agb,b->ag", spec.c(x), y)
    return LiftParts(spec.rho(x) @ xbar, xbar_dot - K @ xbar)


def complete_lift(spec: AffgebroidSpec, xbar, xbar_jac, x, y) -> LiftParts:
    """Complete lift of the section with components ``xbar`` (n,) and x-Jacobian (n, m)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    drift = spec.rho0(x) + spec.rho(x) @ y
    return _lift(spec, xbar, np.asarray(xbar_jac, dtype=float) @ drift, x, y)


@dataclass(frozen=True)
class Bump:
    """Vector-valued 16 (s(1-s))² sin(freq π s)^[freq>0] along ``direction``, s in [0, 1]."""

    t0: float
    t1: float
    direction: np.ndarray
    freq: int = 0

    def _scalar(self, t):
        T = self.t1 - self.t0
        s = (np.asarray(t, dtype=float) - self.t0) / T
        inside = (s >= 0) & (s <= 1)
        w = 16 * (s * (1 - s)) ** 2
        dw = 16 * 2 * s * (1 - s) * (1 - 2 * s) / T
        if self.freq:
            a = self.freq * np.pi
            sn, cs = np.sin(a * s), np.cos(a * s)
            w, dw = w * sn, dw * sn + w * a * cs / T
        return np.where(inside, w, 0.0), np.where(inside, dw, 0.0)

    def __call__(self, t):
        return self._scalar(t)[0] * np.asarray(self.direction, dtype=float)

    def rate(self, t):
        return self._scalar(t)[1] * np.asarray(self.direction, dtype=float)


@dataclass(frozen=True)
class Combination:
    """Linear combination of functions that have ``__call__`` and ``rate``."""

    coefs: tuple
    terms: tuple

    def __call__(self, t):
        return sum(c * f(t) for c, f in zip(self.coefs, self.terms))

    def rate(self, t):
        return sum(c * f.rate(t) for c, f in zip(self.coefs, self.terms))


@dataclass(frozen=True)
class VariationField:
    times: np.ndarray
    xbar_free: Callable
    free: np.ndarray
    free_rate: np.ndarray
    constrained: np.ndarray
    constrained_rate: np.ndarray
    full: np.ndarray
    full_rate: np.ndarray
    residual: float
    scale: float

    @property
    def endpoint_constrained(self):
        return self.constrained[-1]


def _rate_of(fn, t, h=FD_STEP):
    if hasattr(fn, "rate"):
        return np.atleast_1d(fn.rate(t))
    d = h * max(1.0, abs(t))
    return (np.atleast_1d(fn(t + d)) - np.atleast_1d(fn(t - d))) / (2 * d)


def _path_interpolant(path):
    return CubicHermiteSpline(path.times, path.packed(), path.rates, axis=0)


def _tangency_coefficients(sys, z):
    """(M, B) with dX^A/dt = M @ X + B @ dX^a/dt for the full components X."""
    m, mb, k = sys.m, sys.mbar, sys.k
    x, u = z[:m], z[m + mb:m + mb + k]
    j = _Jet(sys, x, z[m:m + mb], u, order=1)
    spec = sys.spec
    K = -spec.c0(x) + np.einsum("agb,b->ag", spec.c(x), j.ybar)
    B = j.dpsi[:, m:]
    M = j.dpsi[:, :m] @ spec.rho(x) - B @ K[sys.fidx] + K[sys.cidx]
    return M, B


def _fd4_residual(times, Y, F):
    """Max |dY/dt - F| over interior samples, five-point derivative on uniform grids."""
    h = np.diff(times)
    if len(times) >= 5 and np.allclose(h, h[0], rtol=1e-9, atol=0):
        d = (Y[:-4] - 8 * Y[1:-3] + 8 * Y[3:-1] - Y[4:]) / (12 * h[0])
        return float(np.max(np.abs(d - F[2:-2]), initial=0.0))
    d = np.gradient(Y, times, axis=0, edge_order=2)
    return float(np.max(np.abs(d - F)[1:-1], initial=0.0))


def solve_variations(sys: VakonomicSystem, path, fns, endpoint_tol=1e-12):
    """Integrate the tangency ODE for X^A along ``path`` with X^A(t0) = 0, for several X^a.

    Each ``fns`` entry maps t to the free components X^a; a ``rate``
    attribute supplies their time derivative, otherwise central differences
    are used. The ODE is linear, so its coefficients are evaluated once per
    node and midpoint and shared by all right-hand sides (classical RK4).
    """
    times = np.asarray(path.times, dtype=float)
    k, mb, n = sys.k, sys.mbar, sys.n
    N = len(times)
    for fn in fns:
        for t in (times[0], times[-1]):
            if np.max(np.abs(np.atleast_1d(fn(t))), initial=0.0) > endpoint_tol:
                raise ValueError("free variation components must vanish at both ends")
    mids = 0.5 * (times[:-1] + times[1:])
    free = [np.array([np.atleast_1d(fn(t)) for t in times]).reshape(N, k) for fn in fns]
    free_rate = [np.array([_rate_of(fn, t) for t in times]).reshape(N, k) for fn in fns]
    XA = [np.zeros((N, mb)) for _ in fns]
    FA = [np.zeros((N, mb)) for _ in fns]
    if mb and N > 1:
        nodes = [_tangency_coefficients(sys, z) for z in path.packed()]
        zmid = _path_interpolant(path)(mids)
        midc = [_tangency_coefficients(sys, z) for z in zmid]
        for q, fn in enumerate(fns):
            fm = np.array([np.atleast_1d(fn(t)) for t in mids]).reshape(N - 1, k)
            dfm = np.array([_rate_of(fn, t) for t in mids]).reshape(N - 1, k)
            Xa, dXa, Y, F = free[q], free_rate[q], XA[q], FA[q]

            def rhs(c, y, xa, dxa):
                return c[0] @ sys.join_momenta(y, xa) + c[1] @ dxa

            for i in range(N - 1):
                h = times[i + 1] - times[i]
                k1 = rhs(nodes[i], Y[i], Xa[i], dXa[i])
                k2 = rhs(midc[i], Y[i] + h / 2 * k1, fm[i], dfm[i])
                k3 = rhs(midc[i], Y[i] + h / 2 * k2, fm[i], dfm[i])
                k4 = rhs(nodes[i + 1], Y[i] + h * k3, Xa[i + 1], dXa[i + 1])
                F[i] = k1
                Y[i + 1] = Y[i] + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            F[-1] = rhs(nodes[-1], Y[-1], Xa[-1], dXa[-1])
    out = []
    for q, fn in enumerate(fns):
        full = np.array([sys.join_momenta(a, b) for a, b in zip(XA[q], free[q])]).reshape(N, n)
        full_rate = np.array([sys.join_momenta(a, b)
                              for a, b in zip(FA[q], free_rate[q])]).reshape(N, n)
        scale = max(1.0, float(np.max(np.abs(FA[q]), initial=0.0)))
        res = _fd4_residual(times, XA[q], FA[q]) if mb else 0.0
        out.append(VariationField(times, fn, free[q], free_rate[q], XA[q], FA[q],
                                  full, full_rate, res, scale))
    return out


def solve_variation(sys: VakonomicSystem, path, xbar_free, endpoint_tol=1e-12) -> VariationField:
    """Admissible variation along ``path`` with free components ``xbar_free`` and X^A(t0) = 0."""
    return solve_variations(sys, path, [xbar_free], endpoint_tol)[0]


@dataclass(frozen=True)
class ActionDerivative:
    fd_derivative: float
    analytic_derivative: float
    boundary_term: float
    defect: float


def _deformed_action(sys, path, var: VariationField, s):
    spec = sys.spec
    vals = np.empty(len(path.times))
    for i, (x, u) in enumerate(zip(path.x, path.controls)):
        ybar = full_fiber(sys, x, u)
        lift = _lift(spec, var.full[i], var.full_rate[i], x, ybar)
        xs = x + s * lift.base_part
        us = u + s * lift.fiber_part[sys.fidx]
        vals[i] = sys.lagrangian(np.concatenate([xs, full_fiber(sys, xs, us)]))
    return float(simpson(vals, x=path.times))


def euler_lagrange_residual(sys: VakonomicSystem, path):
    """Per-sample G_alpha - d/dt y_alpha along the path, shape (N, n)."""
    m, mb, k = sys.m, sys.mbar, sys.k
    out = np.empty((len(path.times), sys.n))
    for i, (x, yA, u, r) in enumerate(zip(path.x, path.y_A, path.controls, path.rates)):
        j = _Jet(sys, x, yA, u)
        P = sys.join_momenta(yA, j.mf)
        struct, _ = _structure_terms(sys, x, j.ybar, P)
        G = sys.spec.rho(x).T @ j.force - struct
        dx, dyA, du = r[:m], r[m:m + mb], r[m + mb:m + mb + k]
        dmf = j.W[m:, :] @ np.concatenate([dx, du]) - j.dpsi[:, m:].T @ dyA
        out[i] = G - sys.join_momenta(dyA, dmf)
    return out


def action_derivative(sys: VakonomicSystem, path, variation: VariationField,
                      eps: float = 1e-4) -> ActionDerivative:
    """Derivative of the action along the variation: central differences vs. integration by parts."""
    fd = (_deformed_action(sys, path, variation, eps)
          - _deformed_action(sys, path, variation, -eps)) / (2 * eps)
    el = euler_lagrange_residual(sys, path)
    interior = float(simpson(np.einsum("ia,ia->i", el, variation.full), x=path.times))
    yA = np.asarray(path.y_A)
    XA = variation.constrained
    boundary = float(yA[-1] @ XA[-1] - yA[0] @ XA[0]) if sys.mbar else 0.0
    analytic = interior + boundary
    return ActionDerivative(fd, analytic, boundary, abs(fd - analytic))


def bump_family(t0: float, t1: float, k: int, freqs: Sequence[int] = (1, 2, 3)):
    """Bumps of each frequency along each free direction."""
    out = []
    for f in freqs:
        for a in range(k):
            e = np.zeros(k)
            e[a] = 1.0
            out.append(Bump(t0, t1, e, f))
    return out


def endpoint_compatible_variation(sys: VakonomicSystem, path, base, family=None):
    """Correct ``base`` by the least-norm combination of ``family`` so that X^A(t1) = 0.

    Returns (VariationField, coefficients). The map from free components to
    X^A(t1) is linear, so one solve per family member suffices.
    """
    t0, t1 = float(path.times[0]), float(path.times[-1])
    if family is None:
        family = bump_family(t0, t1, sys.k)
    if not sys.mbar:
        return solve_variation(sys, path, base), np.zeros(0)
    v0, *vs = solve_variations(sys, path, [base] + list(family))
    M = np.column_stack([v.endpoint_constrained for v in vs])
    coef, *_ = np.linalg.lstsq(M, -v0.endpoint_constrained, rcond=None)
    combo = Combination((1.0,) + tuple(coef), (base,) + tuple(family))
    return solve_variation(sys, path, combo), coef
