"""Lie affgebroids in an adapted local basis {e_0, e_1, ..., e_n}.

Index conventions (0-based everywhere):

* ``anchor_drift(x)``      -> (m,)      rho^i_0
* ``anchor_linear(x)``     -> (m, n)    rho^i_alpha
* ``structure_drift(x)``   -> (n, n)    [g, a] = C^g_{0a}
* ``structure_linear(x)``  -> (n, n, n) [g, a, b] = C^g_{ab}

Optional Jacobians append a trailing axis of length m holding d/dx^j.
Brackets never produce an e_0 component, so there is no slot for C^0.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import VakonomicError
from .fields import FD_STEP, fd_jacobian


class StructureEvaluationError(RuntimeError):
    """A structure or anchor callable failed or returned a bad shape."""


@dataclass(frozen=True)
class AffgebroidSpec:
    base_dim: int
    rank: int
    anchor_drift: Callable
    anchor_linear: Callable
    structure_drift: Callable
    structure_linear: Callable
    anchor_drift_jac: Optional[Callable] = None
    anchor_linear_jac: Optional[Callable] = None
    structure_drift_jac: Optional[Callable] = None
    structure_linear_jac: Optional[Callable] = None
    fd_step: float = FD_STEP
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.base_dim < 1 or self.rank < 1:
            raise ValueError("base_dim and rank must be positive")

    @property
    def derivative_mode(self) -> str:
        jacs = (self.anchor_drift_jac, self.anchor_linear_jac,
                self.structure_drift_jac, self.structure_linear_jac)
        return "analytic" if all(j is not None for j in jacs) else "finite_difference"

    def with_fd(self, fd_step: Optional[float] = None) -> "AffgebroidSpec":
        """Copy with all registered Jacobians dropped."""
        return replace(self, anchor_drift_jac=None, anchor_linear_jac=None,
                       structure_drift_jac=None, structure_linear_jac=None,
                       fd_step=self.fd_step if fd_step is None else fd_step)

    # evaluation with shape checks

    def _call(self, fn, x, shape, what):
        try:
            out = np.asarray(fn(np.asarray(x, dtype=float)), dtype=float)
        except VakonomicError:
            raise
        except Exception as exc:
            raise StructureEvaluationError(
                f"{what} failed at x={np.asarray(x, dtype=float).tolist()}: {exc}") from exc
        if out.shape != shape:
            raise StructureEvaluationError(f"{what} returned shape {out.shape}, expected {shape}")
        return out

    def rho0(self, x):
        return self._call(self.anchor_drift, x, (self.base_dim,), "anchor_drift")

    def rho(self, x):
        return self._call(self.anchor_linear, x, (self.base_dim, self.rank), "anchor_linear")

    def c0(self, x):
        n = self.rank
        return self._call(self.structure_drift, x, (n, n), "structure_drift")

    def c(self, x):
        n = self.rank
        return self._call(self.structure_linear, x, (n, n, n), "structure_linear")

    def _jac(self, fn, jac, x, shape, what):
        if jac is not None:
            return self._call(jac, x, shape + (self.base_dim,), what + "_jac")
        return fd_jacobian(lambda z: self._call(fn, z, shape, what), x, self.fd_step)

    def rho0_jac(self, x):
        return self._jac(self.anchor_drift, self.anchor_drift_jac, x,
                         (self.base_dim,), "anchor_drift")

    def rho_jac(self, x):
        return self._jac(self.anchor_linear, self.anchor_linear_jac, x,
                         (self.base_dim, self.rank), "anchor_linear")

    def c0_jac(self, x):
        n = self.rank
        return self._jac(self.structure_drift, self.structure_drift_jac, x, (n, n), "structure_drift")

    def c_jac(self, x):
        n = self.rank
        return self._jac(self.structure_linear, self.structure_linear_jac, x, (n, n, n),
                         "structure_linear")

    # full (n+1)-index objects, index 0 = e_0

    def full_anchor(self, x):
        return np.column_stack([self.rho0(x), self.rho(x)])

    def full_structure(self, x):
        return _assemble_full(self.c0(x), self.c(x))

    def full_anchor_jac(self, x):
        return np.concatenate([self.rho0_jac(x)[:, None, :], self.rho_jac(x)], axis=1)

    def full_structure_jac(self, x):
        d0 = np.moveaxis(self.c0_jac(x), -1, 0)
        d = np.moveaxis(self.c_jac(x), -1, 0)
        full = np.stack([_assemble_full(a, b) for a, b in zip(d0, d)])
        return np.moveaxis(full, 0, -1)


def _assemble_full(c0, c):
    n = c0.shape[0]
    F = np.zeros((n + 1, n + 1, n + 1))
    F[1:, 0, 1:] = c0
    F[1:, 1:, 0] = -c0
    F[1:, 1:, 1:] = c
    return F


def eval_anchor(spec: AffgebroidSpec, x, y):
    """Base velocity of an admissible curve through (x, y)."""
    return spec.rho0(x) + spec.rho(x) @ np.asarray(y, dtype=float)


def skew_defect(spec: AffgebroidSpec, x):
    """Largest |C^g_{ab} + C^g_{ba}| and the (g, a, b) triple where it occurs (0-based)."""
    C = spec.c(x)
    D = np.abs(C + np.swapaxes(C, 1, 2))
    idx = np.unravel_index(np.argmax(D), D.shape)
    return float(D[idx]), tuple(int(i) for i in idx)


def validate_skew(spec: AffgebroidSpec, x, tol: float = 0.0) -> bool:
    return skew_defect(spec, x)[0] <= tol


def jacobi_tensor(spec: AffgebroidSpec, x):
    """Cyclic sum J[f, a, b, c] of the bracket's Jacobi identity, full basis.

    [[e_a, e_b], e_c] + cyclic = 0 expands to
    sum_cyc (C^e_{ab} C^f_{ec} - rho^i_c dC^f_{ab}/dx^i) = 0.
    """
    C = spec.full_structure(x)
    dC = spec.full_structure_jac(x)
    R = spec.full_anchor(x)
    T = np.einsum("eab,fec->fabc", C, C) - np.einsum("ic,fabi->fabc", R, dC)
    return T + np.transpose(T, (0, 2, 3, 1)) + np.transpose(T, (0, 3, 1, 2))


def jacobi_residual(spec: AffgebroidSpec, x) -> float:
    return float(np.max(np.abs(jacobi_tensor(spec, x))))


def anchor_morphism_defect(spec: AffgebroidSpec, x):
    """[rho(e_a), rho(e_b)]^i - C^g_{ab} rho^i_g over the full basis, shape (m, n+1, n+1)."""
    R = spec.full_anchor(x)
    dR = spec.full_anchor_jac(x)
    C = spec.full_structure(x)
    comm = np.einsum("ja,ibj->iab", R, dR)
    comm = comm - np.swapaxes(comm, 1, 2)
    return comm - np.einsum("gab,ig->iab", C, R)


def anchor_morphism_residual(spec: AffgebroidSpec, x) -> float:
    return float(np.max(np.abs(anchor_morphism_defect(spec, x))))


def constant_affgebroid(base_dim, rank, drift, anchor, c0=None, c=None, name=""):
    """Spec with x-independent data and exact (zero) Jacobians."""
    m, n = base_dim, rank
    drift = np.array(drift, dtype=float).reshape(m)
    anchor = np.array(anchor, dtype=float).reshape(m, n)
    c0 = np.zeros((n, n)) if c0 is None else np.array(c0, dtype=float)
    c = np.zeros((n, n, n)) if c is None else np.array(c, dtype=float)
    for a in (drift, anchor, c0, c):
        a.setflags(write=False)
    return AffgebroidSpec(
        m, n,
        lambda x: drift, lambda x: anchor, lambda x: c0, lambda x: c,
        anchor_drift_jac=lambda x: np.zeros((m, m)),
        anchor_linear_jac=lambda x: np.zeros((m, n, m)),
        structure_drift_jac=lambda x: np.zeros((n, n, m)),
        structure_linear_jac=lambda x: np.zeros((n, n, n, m)),
        name=name,
    )
