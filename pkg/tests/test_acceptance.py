"""Acceptance suite: each test prints one PASS/FAIL line with the measured numbers."""
import numpy as np
import pytest

from vakonomic.affgebroid import anchor_morphism_residual, jacobi_residual, validate_skew
from vakonomic.brackets import (affine_linear_bracket, coordinate_field, evolution_check,
                                poisson_jacobi_residual, poisson_w1_bracket, vakonomic_bracket,
                                w1prime_hamiltonian)
from vakonomic.engine import (VakonomicState, euler_lagrange_rhs, multiplier_form_residual,
                              regularity_check, vakonomic_rhs)
from vakonomic.fields import ScalarField, quadratic_field
from vakonomic.integrate import IntegratorConfig, integrate, integrate_free
from vakonomic.models import (MODELS, SphereParams, build_jet_bundle, build_jet_free,
                              build_kepler_thruster, build_rolling_sphere, jet_affgebroid,
                              kepler_oracle_rhs, sphere_affgebroid, sphere_oracle_rhs)
from vakonomic.variational import (Bump, action_derivative, admissible_path,
                                   endpoint_compatible_variation)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return emit


def gap(a, b):
    return float(np.max(np.abs(a.pack() - b.pack())))


def sphere_states(rng, count):
    return [VakonomicState(rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 2))
            for _ in range(count)]


def test_criterion_1_sphere_oracle(report):
    rng = np.random.default_rng(1)
    p = SphereParams()
    states = sphere_states(rng, 1000)
    worst = {}
    for fd in (False, True):
        sys = build_rolling_sphere(p, fd=fd)
        worst[fd] = max(gap(vakonomic_rhs(sys, s), sphere_oracle_rhs(p, s)) for s in states)
    ok = worst[False] <= 1e-9 and worst[True] <= 1e-5
    report(1, ok, f"sphere rhs vs hand equations, 1000 states: analytic {worst[False]:.2e} "
                  f"(<= 1e-9), finite differences {worst[True]:.2e} (<= 1e-5)")


def test_criterion_2_kepler_oracle(report):
    rng = np.random.default_rng(2)
    entry = MODELS["kepler"]
    states = [entry.sampler(None, rng, 2.0) for _ in range(1000)]
    worst = {}
    for fd in (False, True):
        sys = build_kepler_thruster(fd)
        worst[fd] = max(gap(vakonomic_rhs(sys, s), kepler_oracle_rhs(s)) for s in states)
    spot = vakonomic_rhs(build_kepler_thruster(), VakonomicState([0, 1, 0, 0, 0], [0, 0], [1, 0]))
    spot_err = abs(spot.dy_A[0] + 2.0)
    ok = worst[False] <= 1e-8 and worst[True] <= 1e-4 and spot_err <= 1e-12
    report(2, ok, f"kepler rhs vs hand equations, 1000 states: analytic {worst[False]:.2e} "
                  f"(<= 1e-8), finite differences {worst[True]:.2e} (<= 1e-4); "
                  f"dy_1 at q=(1,0), u=(1,0) is {float(spot.dy_A[0])!r} (target -2, err {spot_err:.1e})")


def test_criterion_3_regularity(report):
    rng = np.random.default_rng(3)
    sphere, kepler = MODELS["sphere"].build({}), MODELS["kepler"].build({})
    dets = [regularity_check(sphere, s).det for s in sphere_states(rng, 200)]
    dets += [regularity_check(kepler, MODELS["kepler"].sampler(kepler, rng, 2.0)).det
             for _ in range(200)]
    det_err = max(abs(d - 1.0) for d in dets)
    cubic = ScalarField(lambda w: w[2] ** 3 / 6, lambda w: np.array([0, 0, w[2] ** 2 / 2]),
                        lambda w: np.diag([0, 0, w[2]]))
    rep = regularity_check(build_jet_bundle(1, cubic, name="cubic"), VakonomicState([0, 0], [], [0.0]))
    ok = det_err <= 1e-12 and not rep.regular
    report(3, ok, f"max |det R - 1| over 400 sphere/kepler states {det_err:.1e} (<= 1e-12); "
                  f"cubic Lagrangian at rest regular={rep.regular}")


def test_criterion_4_constraint_preservation(report, sphere_long_runs):
    _, runs = sphere_long_runs
    drift = {h: float(np.max(tr.phi_max)) for h, tr in runs.items()}
    w1p = {h: float(np.max(tr.w1prime_defect)) for h, tr in runs.items()}
    ratio = drift[1e-3] / drift[5e-4] if drift[5e-4] > 0 else float("inf")
    ok = 12 <= ratio <= 20 and drift[1e-3] <= 1e-8
    report(4, ok, f"sphere T=5 rk4: max|phi| {drift[1e-3]:.2e} (h=1e-3), {drift[5e-4]:.2e} "
                  f"(h=5e-4), ratio {ratio:.3g} (needs [12, 20]); "
                  f"secondary-constraint defect ratio {w1p[1e-3] / w1p[5e-4]:.3g}")


def test_criterion_5_unconstrained_consistency(report):
    rng = np.random.default_rng(5)
    rhs_gap, traj_gap = 0.0, 0.0
    cfg = IntegratorConfig((0, 1), "rk4", 1e-2)
    for key in ("jet-free", "jet-oscillator", "atiyah-free"):
        entry = MODELS[key]
        sys = entry.build({})
        for _ in range(100):
            s = entry.sampler(sys, rng)
            r, e = vakonomic_rhs(sys, s), euler_lagrange_rhs(sys, s.x, s.controls)
            rhs_gap = max(rhs_gap, np.max(np.abs(r.dx - e.dx)), np.max(np.abs(r.dy_a - e.dy)))
        init = entry.initial(sys)
        tr = integrate(sys, init, cfg)
        _, x, y = integrate_free(sys, init.x, init.controls, cfg)
        traj_gap = max(traj_gap, np.max(np.abs(tr.x - x)), np.max(np.abs(tr.controls - y)))
    ok = rhs_gap <= 1e-10 and traj_gap <= 1e-8
    report(5, ok, f"unconstrained models vs Euler-Lagrange: rhs {rhs_gap:.1e} (<= 1e-10), "
                  f"trajectories over T=1 {traj_gap:.1e} (<= 1e-8)")


def test_criterion_6_bracket_algebra(report):
    rng = np.random.default_rng(6)

    def quad(dim):
        Q = rng.normal(size=(dim, dim))
        return quadratic_field(Q + Q.T, rng.normal(size=dim), rng.normal())

    anti = 0.0
    for spec in (MODELS["kepler"].build({}).spec, sphere_affgebroid(), jet_affgebroid(2)):
        m, n = spec.base_dim, spec.rank
        for _ in range(50):
            x = MODELS["kepler"].sampler(None, rng).x if m == 5 else rng.normal(size=m)
            y = rng.normal(size=n)
            H1, H2 = quad(m + n), quad(m + n)
            b12, b21 = vakonomic_bracket(spec, H1, H2, x, y), vakonomic_bracket(spec, H2, H1, x, y)
            F, G = quad(m + 1 + n), quad(m + 1 + n)
            pt = np.concatenate([x, [rng.normal()], y])
            p12, p21 = poisson_w1_bracket(spec, F, G, pt), poisson_w1_bracket(spec, G, F, pt)
            anti = max(anti, abs(b12 + b21) / max(1, abs(b12)), abs(p12 + p21) / max(1, abs(p12)))
    jet = 0.0
    for k in (1, 2, 3):
        spec = jet_affgebroid(k)
        for _ in range(50):
            H1, H2 = quad(2 * k + 1), quad(2 * k + 1)
            w = rng.normal(size=2 * k + 1)
            g1, g2 = H1.grad(w), H2.grad(w)
            q, p = slice(1, k + 1), slice(k + 1, 2 * k + 1)
            expect = (g1[0] - g2[0]) + g1[q] @ g2[p] - g1[p] @ g2[q]
            got = vakonomic_bracket(spec, H1, H2, w[:k + 1], w[k + 1:])
            jet = max(jet, abs(got - expect) / max(1, abs(expect)))
    jac = 0.0
    for spec in (jet_affgebroid(1), jet_affgebroid(3), sphere_affgebroid()):
        for _ in range(20):
            jac = max(jac, poisson_jacobi_residual(spec, rng.normal(size=spec.base_dim + 1 + spec.rank)))
    ok = anti <= 1e-12 and jet <= 1e-12 and jac <= 1e-6
    report(6, ok, f"antisymmetry {anti:.1e} (<= 1e-12), jet reduction to time derivative plus "
                  f"canonical bracket {jet:.1e} (<= 1e-12), Jacobi on coordinates {jac:.1e} (<= 1e-6)")


def test_criterion_7_evolution(report):
    rng = np.random.default_rng(7)
    worst = 0.0
    for key in ("sphere", "jet-penny", "jet-oscillator"):
        entry = MODELS[key]
        sys = entry.build({})
        h1 = w1prime_hamiltonian(sys)
        dim = sys.m + sys.n
        coords = [coordinate_field(i, dim) for i in range(dim)]
        done = 0
        while done < 100:
            s = entry.sampler(sys, rng)
            if not regularity_check(sys, s).regular:
                continue
            done += 1
            for F in coords:
                worst = max(worst, evolution_check(sys, h1, s, F).defect)
    sys = build_rolling_sphere(SphereParams.constant(1.0, r=0.7))
    h1 = w1prime_hamiltonian(sys)
    xdot = 0.0
    for _ in range(50):
        x, y = rng.normal(size=3), rng.normal(size=5)
        v = affine_linear_bracket(sys.spec, h1, coordinate_field(1, 8), x, y)
        xdot = max(xdot, abs(v - (y[0] + y[3] / 0.7)))
    ok = worst <= 1e-7 and xdot <= 1e-12
    report(7, ok, f"bracket vs flow derivative on coordinates, 300 regular states "
                  f"{worst:.1e} (<= 1e-7); sphere xdot = y_1 + y_4/r mismatch {xdot:.1e}")


def test_criterion_8_stationarity(report):
    cfg = IntegratorConfig((0, 1), "rk4", 1e-3)
    solved, bent = {}, {}
    for key in ("sphere", "jet-penny"):
        entry = MODELS[key]
        sys = entry.build({})
        tr = integrate(sys, entry.initial(sys), cfg)
        direction = np.linspace(1.0, -0.5, sys.k)
        base = Bump(0, 1, direction, 0)
        v, _ = endpoint_compatible_variation(sys, tr, base)
        solved[key] = abs(action_derivative(sys, tr, v, 1e-4).fd_derivative)
        # same start, controls pushed off the solution by a smooth bend
        u0 = sys.m + sys.mbar

        def ctrl(t, tr=tr, u0=u0, direction=direction):
            return tr.interpolate(t)[u0:] + direction * np.cos(3 * t)

        def rate(t, ctrl=ctrl):
            return (ctrl(t + 1e-6) - ctrl(t - 1e-6)) / 2e-6

        path = admissible_path(sys, tr.times, tr.x[0], ctrl, rate)
        v, _ = endpoint_compatible_variation(sys, path, base)
        bent[key] = abs(action_derivative(sys, path, v, 1e-4).fd_derivative)
    free = build_jet_free(1)
    times = np.linspace(0, 1, 1001)
    line = admissible_path(free, times, [0, 0], lambda t: 1.0, lambda t: 0.0)
    parabola = admissible_path(free, times, [0, 0], lambda t: 2 * t, lambda t: 2.0)
    bump = Bump(0, 1, np.array([1.0]), 0)
    v, _ = endpoint_compatible_variation(free, line, bump)
    solved["free line"] = abs(action_derivative(free, line, v, 1e-4).fd_derivative)
    v, _ = endpoint_compatible_variation(free, parabola, bump)
    bent["free parabola"] = abs(action_derivative(free, parabola, v, 1e-4).fd_derivative)
    ok = max(solved.values()) <= 1e-5 and min(bent.values()) >= 1e-2
    fmt = lambda d: ", ".join(f"{k} {v:.1e}" for k, v in d.items())
    report(8, ok, f"|dS/ds| on solutions: {fmt(solved)} (<= 1e-5); "
                  f"on non-solutions: {fmt(bent)} (>= 1e-2)")


def test_criterion_9_axioms(report):
    rng = np.random.default_rng(9)
    worst = {False: 0.0, True: 0.0}
    skew_ok = True
    for key, entry in MODELS.items():
        for fd in (False, True):
            sys = entry.build({}, fd)
            spec = sys.spec
            for _ in range(100):
                x = entry.sampler(sys, rng).x
                skew_ok &= validate_skew(spec, x)
                worst[fd] = max(worst[fd], jacobi_residual(spec, x), anchor_morphism_residual(spec, x))
    ok = skew_ok and worst[False] <= 1e-6 and worst[True] <= 1e-4
    report(9, ok, f"{len(MODELS)} models x 100 points: skew exact={skew_ok}, Jacobi/anchor "
                  f"analytic {worst[False]:.1e} (<= 1e-6), finite differences {worst[True]:.1e} (<= 1e-4)")


def test_criterion_10_multiplier_form(report):
    rng = np.random.default_rng(10)
    worst = {}
    for key, entry in MODELS.items():
        for fd in (False, True):
            sys = entry.build({}, fd)
            res = 0.0
            for _ in range(100):
                s = entry.sampler(sys, rng)
                r = multiplier_form_residual(sys, s, vakonomic_rhs(sys, s))
                res = max(res, float(np.max(np.abs(r), initial=0.0)))
            worst[key + (" (fd)" if fd else "")] = res
    top = max(worst, key=worst.get)
    report(10, worst[top] <= 1e-8, f"multiplier-form residual, {len(worst)} model/derivative "
                                   f"combinations x 100 states, worst {top} {worst[top]:.1e} (<= 1e-8)")
