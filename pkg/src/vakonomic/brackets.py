"""Hamilton equations, the vakonomic bracket and the Poisson structure on W1.

Hamiltonian sections are functions H(x, y_alpha) of m + n arguments; the
section itself is y_0 = -H. The Poisson bivector acts on functions of the
m + 1 + n coordinates (x, y_0, y_alpha).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affgebroid import AffgebroidSpec
from .engine import (FreeRhs, VakonomicState, VakonomicSystem, _Jet, controls_from_momenta,
                     full_momenta, momenta_rate, vakonomic_rhs)
from .fields import ScalarField, fd_jacobian


@dataclass(frozen=True)
class HamiltonianSection:
    H: ScalarField

    def split_grad(self, m, x, y):
        g = self.H.grad(np.concatenate([np.asarray(x, dtype=float), np.asarray(y, dtype=float)]))
        return g[:m], g[m:]


def _as_section(h):
    return h if isinstance(h, HamiltonianSection) else HamiltonianSection(h)


def hamilton_rhs(spec: AffgebroidSpec, h, x, y_momenta) -> FreeRhs:
    h = _as_section(h)
    y = np.asarray(y_momenta, dtype=float)
    Hx, Hy = h.split_grad(spec.base_dim, x, y)
    rho = spec.rho(x)
    dx = spec.rho0(x) + rho @ Hy
    dy = -rho.T @ Hx + y @ spec.c0(x) + np.einsum("g,gba,b->a", y, spec.c(x), Hy)
    return FreeRhs(dx, dy)


def vakonomic_bracket(spec: AffgebroidSpec, h1, h2, x, y_momenta) -> float:
    m = spec.base_dim
    y = np.asarray(y_momenta, dtype=float)
    H1x, H1y = _as_section(h1).split_grad(m, x, y)
    H2x, H2y = _as_section(h2).split_grad(m, x, y)
    rho = spec.rho(x)
    yC0 = y @ spec.c0(x)
    # written antisymmetrically so that equal sections cancel exactly
    M = np.einsum("g,gab->ab", y, spec.c(x))
    return float(spec.rho0(x) @ (H1x - H2x)
                 + (rho.T @ H1x) @ H2y - H1y @ (rho.T @ H2x)
                 + yC0 @ (H1y - H2y)
                 - 0.5 * (H1y @ M @ H2y - H2y @ M @ H1y))


def affine_linear_bracket(spec: AffgebroidSpec, h, F: ScalarField, x, y_momenta) -> float:
    """Affine-linear part {h, F}: the derivative of F along the Hamilton flow of h."""
    m = spec.base_dim
    y = np.asarray(y_momenta, dtype=float)
    Hx, Hy = _as_section(h).split_grad(m, x, y)
    g = F.grad(np.concatenate([np.asarray(x, dtype=float), y]))
    Fx, Fy = g[:m], g[m:]
    rho = spec.rho(x)
    return float(spec.rho0(x) @ Fx
                 - (rho.T @ Hx) @ Fy + Hy @ (rho.T @ Fx)
                 + (y @ spec.c0(x)) @ Fy
                 + np.einsum("g,gab,a,b->", y, spec.c(x), Hy, Fy))


def w1_bivector(spec: AffgebroidSpec, point):
    """Matrix of the Poisson bivector at (x, y_0, y_alpha)."""
    m, n = spec.base_dim, spec.rank
    point = np.asarray(point, dtype=float)
    x, y = point[:m], point[m + 1:]
    rho0, rho = spec.rho0(x), spec.rho(x)
    yC0 = y @ spec.c0(x)
    P = np.zeros((m + 1 + n, m + 1 + n))
    P[:m, m] = rho0
    P[:m, m + 1:] = rho
    P[m, m + 1:] = -yC0
    P = P - P.T
    P[m + 1:, m + 1:] = -np.einsum("g,gab->ab", y, spec.c(x))
    return P


def poisson_w1_bracket(spec: AffgebroidSpec, F: ScalarField, G: ScalarField, point) -> float:
    point = np.asarray(point, dtype=float)
    return float(F.grad(point) @ w1_bivector(spec, point) @ G.grad(point))


def poisson_jacobi_residual(spec: AffgebroidSpec, point) -> float:
    """Max over coordinate triples of the cyclic sum {z_a, {z_b, z_c}} + cyclic."""
    point = np.asarray(point, dtype=float)
    P = w1_bivector(spec, point)
    dP = fd_jacobian(lambda z: w1_bivector(spec, z), point)
    T = np.einsum("al,bcl->abc", P, dP)
    J = T + np.transpose(T, (1, 2, 0)) + np.transpose(T, (2, 0, 1))
    return float(np.max(np.abs(J)))


def w1prime_hamiltonian(sys: VakonomicSystem) -> HamiltonianSection:
    """H(x, y) = y_a mu^a + y_A Psi^A(x, mu) - L~(x, mu) with mu solving the momenta map.

    Its section y_0 = -H is the secondary constraint set; the gradient
    follows from the envelope property of mu.
    """
    m = sys.m

    def pieces(w):
        x, y = w[:m], w[m:]
        mu = controls_from_momenta(sys, x, y)
        y_A, y_a = sys.split_momenta(y)
        return x, y_A, y_a, mu, _Jet(sys, x, y_A, mu, order=1)

    def value(w):
        _, y_A, y_a, mu, j = pieces(w)
        return float(y_a @ mu + y_A @ j.psi - j.L)

    def gradient(w):
        _, y_A, _, mu, j = pieces(w)
        gx = y_A @ j.dpsi[:, :m] - j.gLt[:m]
        return np.concatenate([gx, sys.join_momenta(j.psi, mu)])

    return HamiltonianSection(ScalarField(value, gradient))


@dataclass(frozen=True)
class EvolutionResult:
    bracket_value: float
    flow_derivative: float
    defect: float


def evolution_check(sys: VakonomicSystem, h1, state: VakonomicState, F: ScalarField) -> EvolutionResult:
    """Compare {h1, F} with dF/dt along the vakonomic flow through ``state``."""
    h1 = w1prime_hamiltonian(sys) if h1 is None else _as_section(h1)
    y = full_momenta(sys, state)
    rates = vakonomic_rhs(sys, state)
    dy = sys.join_momenta(rates.dy_A, momenta_rate(sys, state, rates))
    g = F.grad(np.concatenate([state.x, y]))
    flow = float(g[:sys.m] @ rates.dx + g[sys.m:] @ dy)
    br = affine_linear_bracket(sys.spec, h1, F, state.x, y)
    return EvolutionResult(br, flow, abs(br - flow))


def coordinate_field(index: int, dim: int) -> ScalarField:
    e = np.zeros(dim)
    e[index] = 1.0
    e.setflags(write=False)
    return ScalarField(lambda z: z[index], lambda z: e, lambda z: np.zeros((dim, dim)))
