"""Time stepping for vakonomic and Hamiltonian flows with residual monitoring.

Besides the state (x, y_A, y^a) the integrator carries the free momenta
p_a and the secondary-constraint value y_0 as independent unknowns, driven
by their own evolution equations. Comparing them with the values recomputed
from the state measures how well the flow stays on W1 and W1'.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import RK45
from scipy.interpolate import CubicHermiteSpline

from .affgebroid import AffgebroidSpec
from .brackets import hamilton_rhs
from .engine import VakonomicState, VakonomicSystem, _evaluate, _Jet, euler_lagrange_rhs
from .errors import SingularRegularity, StepUnderflow

METHODS = ("rk4", "rk45")


@dataclass(frozen=True)
class IntegratorConfig:
    t_span: tuple = (0.0, 1.0)
    method: str = "rk4"
    step: float = 1e-3
    rtol: float = 1e-9
    atol: float = 1e-12
    record_every: int = 1
    resync: bool = False
    max_steps: int = 10_000_000

    def __post_init__(self):
        object.__setattr__(self, "t_span", (float(self.t_span[0]), float(self.t_span[1])))
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.t_span[1] < self.t_span[0]:
            raise ValueError("t_span must be increasing")
        if self.method == "rk4" and not self.step > 0:
            raise ValueError("step must be positive")
        if self.method == "rk45" and not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


def rk4_step(f, t, z, h, k1=None):
    k1 = f(t, z) if k1 is None else k1
    k2 = f(t + h / 2, z + h / 2 * k1)
    k3 = f(t + h / 2, z + h / 2 * k2)
    k4 = f(t + h, z + h * k3)
    return z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_ode(f, z0, cfg: IntegratorConfig, on_sample=None):
    """Integrate z' = f(t, z) and return (times, samples, rates).

    ``on_sample(t, z)`` may return a replacement state (used for
    re-synchronization). Exceptions raised by ``f`` propagate with the
    samples gathered so far attached as ``partial``.
    """
    t0, t1 = cfg.t_span
    z = np.array(z0, dtype=float)
    times, zs, rates = [], [], []
    if t1 == t0:
        return np.empty(0), np.empty((0, z.size)), np.empty((0, z.size))
    try:
        if cfg.method == "rk4":
            nsteps = int(np.ceil((t1 - t0) / cfg.step - 1e-9))
            if nsteps > cfg.max_steps:
                raise ValueError(f"{nsteps} steps exceed max_steps={cfg.max_steps}")
            h = (t1 - t0) / nsteps
            for i in range(nsteps + 1):
                t = t0 + i * h
                k1 = f(t, z)
                if i % cfg.record_every == 0 or i == nsteps:
                    times.append(t)
                    zs.append(z.copy())
                    rates.append(k1)
                if i == nsteps:
                    break
                z = rk4_step(f, t, z, h, k1)
                if on_sample is not None:
                    z = on_sample(t + h, z)
        else:
            solver = RK45(f, t0, z, t1, rtol=cfg.rtol, atol=cfg.atol)
            times.append(t0)
            zs.append(z.copy())
            rates.append(f(t0, z))
            count = 0
            while solver.status == "running":
                msg = solver.step()
                if solver.status == "failed":
                    raise StepUnderflow(f"adaptive step failed at t={solver.t:.6g}: {msg}",
                                        last_time=solver.t)
                count += 1
                if count > cfg.max_steps:
                    raise StepUnderflow(f"exceeded max_steps at t={solver.t:.6g}",
                                        last_time=solver.t)
                if count % cfg.record_every == 0 or solver.status == "finished":
                    zz = solver.y.copy()
                    times.append(solver.t)
                    zs.append(zz)
                    rates.append(f(solver.t, zz))
    except (SingularRegularity, StepUnderflow) as exc:
        exc.partial = (np.array(times), np.array(zs).reshape(len(zs), z.size),
                       np.array(rates).reshape(len(rates), z.size))
        exc.last_time = times[-1] if times else t0
        raise
    return np.array(times), np.array(zs), np.array(rates)


@dataclass(frozen=True)
class Trajectory:
    """Recorded samples of a vakonomic solution.

    ``momenta`` are recomputed from each state; ``carried_momenta`` and
    ``y0`` are the independently transported values. ``rates`` hold the
    state derivative (dx, dy_A, dy^a) at each sample.
    """

    times: np.ndarray
    x: np.ndarray
    y_A: np.ndarray
    controls: np.ndarray
    fiber: np.ndarray
    momenta: np.ndarray
    carried_momenta: np.ndarray
    y0: np.ndarray
    rates: np.ndarray
    phi_max: np.ndarray
    w1prime_defect: np.ndarray
    admissibility: np.ndarray

    def __post_init__(self):
        for k, v in self.__dict__.items():
            a = np.array(v, dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, k, a)

    def __len__(self):
        return self.times.size

    @property
    def states(self):
        return [VakonomicState(x, a, u) for x, a, u in zip(self.x, self.y_A, self.controls)]

    def packed(self):
        return np.hstack([self.x, self.y_A, self.controls])

    def interpolate(self, t):
        """Cubic Hermite interpolant of (x, y_A, y^a) at time(s) t."""
        return CubicHermiteSpline(self.times, self.packed(), self.rates, axis=0)(t)

    @property
    def final_state(self):
        return VakonomicState(self.x[-1], self.y_A[-1], self.controls[-1])


def _augmented_rhs(sys: VakonomicSystem):
    m, mb, k = sys.m, sys.mbar, sys.k

    def f(t, z):
        dx, dyA, du, G, G0, _ = _evaluate(sys, z[:m], z[m:m + mb], z[m + mb:m + mb + k])
        return np.concatenate([dx, dyA, du, G[sys.fidx], [G0]])

    return f


def _sample_quantities(sys, z):
    m, mb, k = sys.m, sys.mbar, sys.k
    x, yA, u = z[:m], z[m:m + mb], z[m + mb:m + mb + k]
    j = _Jet(sys, x, yA, u, order=1)
    y0 = j.L - yA @ j.psi - j.mf @ u
    return j.ybar, j.mf, y0


def _build_trajectory(sys, times, Z, rates):
    m, mb, k, n = sys.m, sys.mbar, sys.k, sys.n
    N = len(times)
    fiber = np.empty((N, n))
    mom = np.empty((N, k))
    y0r = np.empty(N)
    for i in range(N):
        fiber[i], mom[i], y0r[i] = _sample_quantities(sys, Z[i])
    carried = Z[:, m + mb + k:m + mb + 2 * k]
    y0 = Z[:, -1] if N else np.empty(0)
    phi = np.max(np.abs(carried - mom), axis=1, initial=0.0) if N else np.empty(0)
    traj = Trajectory(
        times=times, x=Z[:, :m], y_A=Z[:, m:m + mb], controls=Z[:, m + mb:m + mb + k],
        fiber=fiber, momenta=mom, carried_momenta=carried, y0=y0,
        rates=rates[:, :m + n], phi_max=phi, w1prime_defect=np.abs(y0 - y0r),
        admissibility=np.full(N, np.nan))
    return _with_admissibility(sys.spec, traj)


def _with_admissibility(spec, traj):
    adm = admissibility_samples(spec, traj)
    d = dict(traj.__dict__)
    d["admissibility"] = adm
    return Trajectory(**d)


def integrate(sys: VakonomicSystem, initial: VakonomicState, cfg: IntegratorConfig) -> Trajectory:
    """Integrate the vakonomic equations from ``initial``.

    On a singular regularity matrix mid-flight the raised
    ``SingularRegularity`` carries the partial trajectory.
    """
    m, mb, k = sys.m, sys.mbar, sys.k
    z0 = initial.pack()
    _, mf0, y00 = _sample_quantities(sys, z0)
    z0 = np.concatenate([z0, mf0, [y00]])
    on_sample = None
    if cfg.resync:
        def on_sample(t, z):
            _, mf, y0 = _sample_quantities(sys, z)
            z[m + mb + k:m + mb + 2 * k] = mf
            z[-1] = y0
            return z
    try:
        times, Z, R = integrate_ode(_augmented_rhs(sys), z0, cfg, on_sample)
    except (SingularRegularity, StepUnderflow) as exc:
        times, Z, R = exc.partial
        exc.trajectory = _build_trajectory(sys, times, Z, R) if len(times) else None
        raise
    return _build_trajectory(sys, times, Z, R)


def admissibility_samples(spec: AffgebroidSpec, traj: Trajectory):
    """|dx/dt - anchor(x, y)| per sample, slope by second-order differences (nan if < 3 samples)."""
    N = len(traj)
    if N < 3:
        return np.full(N, np.nan)
    slope = np.gradient(traj.x, traj.times, axis=0, edge_order=2)
    anchor = np.array([spec.rho0(x) + spec.rho(x) @ y for x, y in zip(traj.x, traj.fiber)])
    return np.max(np.abs(slope - anchor), axis=1)


def admissibility_defect(spec: AffgebroidSpec, traj: Trajectory) -> float:
    """Largest anchor mismatch over interior samples."""
    if len(traj) < 3:
        raise ValueError("admissibility check needs at least 3 samples")
    return float(np.max(admissibility_samples(spec, traj)[1:-1]))


def trajectory_from_samples(sys: VakonomicSystem, times, x, y_A, controls,
                            carried_momenta=None, y0=None) -> Trajectory:
    """Rebuild a Trajectory (with residuals) from stored samples."""
    times = np.asarray(times, dtype=float)
    N = times.size
    Z = np.hstack([np.asarray(x, float).reshape(N, sys.m),
                   np.asarray(y_A, float).reshape(N, sys.mbar),
                   np.asarray(controls, float).reshape(N, sys.k)])
    if carried_momenta is None or y0 is None:
        extra = np.array([np.concatenate([q[1], [q[2]]])
                          for q in (_sample_quantities(sys, z) for z in Z)]).reshape(N, sys.k + 1)
    else:
        extra = np.hstack([np.asarray(carried_momenta, float).reshape(N, sys.k),
                           np.asarray(y0, float).reshape(N, 1)])
    Z = np.hstack([Z, extra])
    f = _augmented_rhs(sys)
    R = np.array([f(t, z) for t, z in zip(times, Z)]).reshape(N, Z.shape[1])
    return _build_trajectory(sys, times, Z, R)


@dataclass(frozen=True)
class HamiltonianTrajectory:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray


def integrate_hamiltonian(spec: AffgebroidSpec, h, x0, y0, cfg: IntegratorConfig):
    m = spec.base_dim

    def f(t, z):
        r = hamilton_rhs(spec, h, z[:m], z[m:])
        return np.concatenate([r.dx, r.dy])

    times, Z, _ = integrate_ode(f, np.concatenate([x0, y0]), cfg)
    return HamiltonianTrajectory(times, Z[:, :m], Z[:, m:])


def integrate_free(sys: VakonomicSystem, x0, y0, cfg: IntegratorConfig):
    """Integrate the unconstrained Euler-Lagrange equations; returns (times, x, y)."""
    m = sys.m

    def f(t, z):
        r = euler_lagrange_rhs(sys, z[:m], z[m:])
        return np.concatenate([r.dx, r.dy])

    times, Z, _ = integrate_ode(f, np.concatenate([x0, y0]), cfg)
    return times, Z[:, :m], Z[:, m:]


def max_state_difference(a: Trajectory, b: Trajectory, times: Optional[np.ndarray] = None) -> float:
    """Max-norm difference of two trajectories at ``times`` (default: a's samples)."""
    times = a.times if times is None else times
    return float(np.max(np.abs(a.interpolate(times) - b.interpolate(times))))
