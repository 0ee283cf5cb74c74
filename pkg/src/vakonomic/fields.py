"""Scalar fields with analytic or finite-difference derivatives."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

FD_STEP = 1e-6
FD_STEP_SECOND = 1e-4


def _steps(z, h):
    return h * np.maximum(1.0, np.abs(z))


def fd_gradient(f, z, h=FD_STEP):
    """Central-difference gradient of a scalar function."""
    z = np.asarray(z, dtype=float)
    g = np.empty(z.size)
    hs = _steps(z, h)
    a = z.copy()
    for i in range(z.size):
        a[i] = z[i] + hs[i]
        fp = f(a)
        a[i] = z[i] - hs[i]
        fm = f(a)
        a[i] = z[i]
        g[i] = (fp - fm) / (2 * hs[i])
    return g


def fd_jacobian(f, z, h=FD_STEP):
    """Central-difference derivative of an array-valued function.

    The derivative axis is appended last: for ``f(z)`` of shape ``S`` the
    result has shape ``S + (len(z),)``.
    """
    z = np.asarray(z, dtype=float)
    hs = _steps(z, h)
    a = z.copy()
    cols = []
    for i in range(z.size):
        a[i] = z[i] + hs[i]
        fp = np.asarray(f(a), dtype=float)
        a[i] = z[i] - hs[i]
        fm = np.asarray(f(a), dtype=float)
        a[i] = z[i]
        cols.append((fp - fm) / (2 * hs[i]))
    return np.stack(cols, axis=-1)


def fd_hessian(f, z, h=FD_STEP_SECOND):
    """Second-order central differences of a scalar function, symmetrized."""
    z = np.asarray(z, dtype=float)
    n = z.size
    hs = _steps(z, h)
    H = np.empty((n, n))
    f0 = f(z)
    a = z.copy()
    for i in range(n):
        a[i] = z[i] + hs[i]
        fp = f(a)
        a[i] = z[i] - hs[i]
        fm = f(a)
        a[i] = z[i]
        H[i, i] = (fp - 2 * f0 + fm) / hs[i] ** 2
        for j in range(i + 1, n):
            a[i] = z[i] + hs[i]
            a[j] = z[j] + hs[j]
            fpp = f(a)
            a[j] = z[j] - hs[j]
            fpm = f(a)
            a[i] = z[i] - hs[i]
            fmm = f(a)
            a[j] = z[j] + hs[j]
            fmp = f(a)
            a[i], a[j] = z[i], z[j]
            H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4 * hs[i] * hs[j])
    return H


@dataclass(frozen=True)
class ScalarField:
    """A smooth real function of a coordinate vector.

    Missing derivatives are replaced by central differences: the gradient
    from ``value`` with ``fd_step``; the Hessian from the analytic gradient
    when there is one (same step), otherwise from ``value`` with
    ``fd_step_second``.
    """

    value: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = FD_STEP
    fd_step_second: float = FD_STEP_SECOND

    def __call__(self, z):
        return float(self.value(np.asarray(z, dtype=float)))

    def grad(self, z):
        z = np.asarray(z, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(z), dtype=float)
        return fd_gradient(self.value, z, self.fd_step)

    def hess(self, z):
        z = np.asarray(z, dtype=float)
        if self.hessian is not None:
            return np.asarray(self.hessian(z), dtype=float)
        if self.gradient is not None:
            H = fd_jacobian(self.gradient, z, self.fd_step)
            return 0.5 * (H + H.T)
        return fd_hessian(self.value, z, self.fd_step_second)

    @property
    def analytic(self) -> bool:
        return self.gradient is not None and self.hessian is not None

    def without_derivatives(self) -> "ScalarField":
        """Same function, derivatives forced onto finite differences."""
        return ScalarField(self.value, fd_step=self.fd_step, fd_step_second=self.fd_step_second)


def constant_field(c: float, dim: int) -> ScalarField:
    return ScalarField(
        lambda z: c,
        lambda z: np.zeros(dim),
        lambda z: np.zeros((dim, dim)),
    )


def quadratic_field(Q, b=None, c=0.0) -> ScalarField:
    """``½ zᵀQz + bᵀz + c`` with exact derivatives."""
    Q = np.asarray(Q, dtype=float)
    Q = 0.5 * (Q + Q.T)
    b = np.zeros(Q.shape[0]) if b is None else np.asarray(b, dtype=float)
    return ScalarField(
        lambda z: 0.5 * z @ Q @ z + b @ z + c,
        lambda z: Q @ z + b,
        lambda z: Q,
    )


def derivative_mismatch(field: ScalarField, z, rel=True):
    """Max deviation of analytic gradient/Hessian from central differences.

    Returns ``(grad_err, hess_err)``; either is 0 when the analytic
    derivative is absent.
    """
    z = np.asarray(z, dtype=float)
    ge = he = 0.0
    if field.gradient is not None:
        g = field.grad(z)
        gf = fd_gradient(field.value, z, field.fd_step)
        ge = np.max(np.abs(g - gf), initial=0.0)
        if rel:
            ge /= max(1.0, np.max(np.abs(g), initial=0.0))
    if field.hessian is not None:
        H = field.hess(z)
        if field.gradient is not None:
            Hf = fd_jacobian(field.gradient, z, field.fd_step)
        else:
            Hf = fd_hessian(field.value, z, field.fd_step_second)
        he = np.max(np.abs(H - Hf), initial=0.0)
        if rel:
            he /= max(1.0, np.max(np.abs(H), initial=0.0))
    return float(ge), float(he)
