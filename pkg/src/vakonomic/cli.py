"""Command-line front end: ``affg check | simulate | bracket | variation``.

Exit codes: 0 success, 1 validation failure, 2 runtime singularity,
3 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import affgebroid as ag
from .affgebroid import AffgebroidSpec
from .brackets import (HamiltonianSection, affine_linear_bracket, vakonomic_bracket,
                       w1prime_hamiltonian)
from .engine import (ConstraintMap, VakonomicState, VakonomicSystem, multiplier_form_residual,
                     regularity_check, vakonomic_rhs)
from .errors import NoConvergence, OriginSingularity, SingularRegularity, StepUnderflow
from .expr import ExpressionError, compile_array, compile_scalar
from .integrate import IntegratorConfig, Trajectory, integrate, trajectory_from_samples
from .models import MODELS, _uniform_sampler
from .variational import Bump, action_derivative, endpoint_compatible_variation

log = logging.getLogger("vakonomic")

EXIT_OK, EXIT_VALIDATION, EXIT_SINGULAR, EXIT_CONFIG = 0, 1, 2, 3


class ConfigError(Exception):
    pass


@dataclass
class Loaded:
    sys: VakonomicSystem
    initial: VakonomicState
    sampler: Callable
    label: str
    params: dict
    integrator: Optional[dict] = None


# configuration files

def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None


def _field(cfg, key, kind, where):
    if key not in cfg:
        raise ConfigError(f"{where}: missing field '{key}'")
    val = cfg[key]
    if not isinstance(val, kind):
        raise ConfigError(f"{where}: field '{key}' must be {kind.__name__ if isinstance(kind, type) else kind}")
    return val


def _parse_index_key(key, nparts, n, field_name):
    try:
        parts = [int(p) for p in key.split(",")]
    except ValueError:
        raise ConfigError(f"field '{field_name}': key {key!r} must be {nparts} comma-separated integers") from None
    if len(parts) != nparts or not all(1 <= p <= n for p in parts):
        raise ConfigError(f"field '{field_name}': key {key!r} must be {nparts} indices in 1..{n}")
    return [p - 1 for p in parts]


def _expr_grid(entries, shape, n, field_name):
    grid = np.full(shape, "0", dtype=object)
    if not isinstance(entries, dict):
        raise ConfigError(f"field '{field_name}' must be an object of \"i,j[,k]\": expression")
    for key, val in entries.items():
        idx = _parse_index_key(key, len(shape), n, field_name)
        grid[tuple(idx)] = str(val)
    return grid


def system_from_config(cfg: dict, params_override=None, where="config") -> Loaded:
    """Build a system from the JSON schema documented in the README."""
    m = _field(cfg, "base_dim", int, where)
    n = _field(cfg, "rank", int, where)
    if m < 1 or n < 1:
        raise ConfigError(f"{where}: base_dim and rank must be positive")
    params = {k: float(v) for k, v in cfg.get("parameters", {}).items()}
    params.update(params_override or {})
    xs = [f"x{i + 1}" for i in range(m)]
    ys = [f"y{i + 1}" for i in range(n)]
    try:
        drift = _field(cfg, "anchor_drift", list, where)
        if len(drift) != m:
            raise ConfigError(f"field 'anchor_drift' must have {m} entries")
        lin = _field(cfg, "anchor_linear", list, where)
        if len(lin) != m or any(not isinstance(r, list) or len(r) != n for r in lin):
            raise ConfigError(f"field 'anchor_linear' must be a {m}x{n} list of lists")
        rho0, rho0_j = compile_array([str(e) for e in drift], xs, params, (m,))
        rho, rho_j = compile_array([[str(e) for e in r] for r in lin], xs, params, (m, n))
        c0g = _expr_grid(cfg.get("structure_drift", {}), (n, n), n, "structure_drift")
        cg = _expr_grid(cfg.get("structure_linear", {}), (n, n, n), n, "structure_linear")
        c0, c0_j = compile_array(c0g.tolist(), xs, params, (n, n))
        c, c_j = compile_array(cg.tolist(), xs, params, (n, n, n))
        spec = AffgebroidSpec(m, n, rho0, rho, c0, c, rho0_j, rho_j, c0_j, c_j,
                              name=cfg.get("name", "config"))
        L = compile_scalar(str(_field(cfg, "lagrangian", (str, int, float), where)), xs + ys, params)
        cons = cfg.get("constraints", {})
        if not isinstance(cons, dict):
            raise ConfigError("field 'constraints' must be an object of \"A\": expression")
        constrained = sorted(_parse_index_key(k, 1, n, "constraints")[0] for k in cons)
        free = [i for i in range(n) if i not in constrained]
        names = xs + [ys[i] for i in free]
        psi = tuple(compile_scalar(str(cons[str(a + 1)]), names, params) for a in constrained)
    except ExpressionError as exc:
        raise ConfigError(f"{where}: expression error: {exc}") from None
    sys_ = VakonomicSystem(spec, L, ConstraintMap(tuple(constrained), tuple(free), psi),
                           name=cfg.get("name", "config"))
    init = cfg.get("initial", {})
    try:
        initial = VakonomicState(init.get("x", np.zeros(m)), init.get("y_A", np.zeros(len(constrained))),
                                 init.get("controls", np.zeros(len(free))))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'initial': {exc}") from None
    _check_state_dims(sys_, initial, "initial")
    return Loaded(sys_, initial, _uniform_sampler, cfg.get("name", "config"), params,
                  cfg.get("integrator"))


def _check_state_dims(sys_, st, what):
    if st.x.size != sys_.m or st.y_A.size != sys_.mbar or st.controls.size != sys_.k:
        raise ConfigError(f"{what}: expected x[{sys_.m}], y_A[{sys_.mbar}], controls[{sys_.k}], "
                          f"got x[{st.x.size}], y_A[{st.y_A.size}], controls[{st.controls.size}]")


def _parse_params(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise ConfigError(f"--param {k}: {v!r} is not a number") from None
    return out


def _vector(text, name):
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()] if text.strip() else []
    except ValueError:
        raise ConfigError(f"--{name}: expected comma-separated numbers, got {text!r}") from None


def load(args, params=None) -> Loaded:
    params = _parse_params(args.param) if params is None else params
    if args.config:
        loaded = system_from_config(_load_json(args.config), params, where=args.config)
        if args.fd:
            s = loaded.sys
            loaded.sys = VakonomicSystem(
                s.spec.with_fd(), s.lagrangian.without_derivatives(),
                ConstraintMap(s.constraint.constrained, s.constraint.free,
                              tuple(f.without_derivatives() for f in s.constraint.psi)),
                name=s.name)
    else:
        key = args.model or "sphere"
        if key not in MODELS:
            raise ConfigError(f"unknown model {key!r}; available: {', '.join(sorted(MODELS))}")
        entry = MODELS[key]
        unknown = set(params) - set(entry.defaults)
        if unknown:
            raise ConfigError(f"model {key!r} has no parameter(s) {sorted(unknown)}; "
                              f"known: {sorted(entry.defaults)}")
        try:
            s = entry.build(params, args.fd)
        except ValueError as exc:
            raise ConfigError(f"model {key!r}: {exc}") from None
        loaded = Loaded(s, entry.initial(s), entry.sampler or _uniform_sampler, key,
                        {**entry.defaults, **params})
    s = loaded.sys
    log.info("loaded %s: m=%d n=%d constrained=%d derivatives=%s", loaded.label, s.m, s.n,
             s.mbar, s.spec.derivative_mode)
    init = loaded.initial
    x = _vector(getattr(args, "x", None), "x")
    ya = _vector(getattr(args, "yA", None), "yA")
    u = _vector(getattr(args, "controls", None), "controls")
    if x is not None or ya is not None or u is not None:
        init = VakonomicState(init.x if x is None else x, init.y_A if ya is None else ya,
                              init.controls if u is None else u)
        _check_state_dims(s, init, "initial state")
        loaded.initial = init
    return loaded


# check

def cmd_check(args, out) -> int:
    loaded = load(args)
    s = loaded.sys
    rng = np.random.default_rng(args.seed)
    fd = s.spec.derivative_mode != "analytic"
    tol_axiom = 1e-4 if fd else 1e-6
    tol_mult = 1e-4 if fd else 1e-8
    worst = {"skew": (0.0, None, None), "jacobi": (0.0, None), "anchor": (0.0, None),
             "multiplier": (0.0, None)}
    dets, regular = [], 0
    for _ in range(args.samples):
        st = loaded.sampler(s, rng)
        x = st.x
        d, triple = ag.skew_defect(s.spec, x)
        if d > worst["skew"][0]:
            worst["skew"] = (d, triple, x)
        for key, fn in (("jacobi", ag.jacobi_residual), ("anchor", ag.anchor_morphism_residual)):
            v = fn(s.spec, x)
            if v > worst[key][0]:
                worst[key] = (v, x)
        rep = regularity_check(s, st)
        dets.append(abs(rep.det))
        if rep.regular:
            regular += 1
            r = vakonomic_rhs(s, st)
            v = float(np.max(np.abs(multiplier_form_residual(s, st, r))))
            if v > worst["multiplier"][0]:
                worst["multiplier"] = (v, st.pack())
    failed = False
    print(f"model {loaded.label}  derivatives={'finite_difference' if fd else 'analytic'}  "
          f"samples={args.samples}  seed={args.seed}", file=out)
    sk = worst["skew"]
    ok = sk[0] <= 1e-12
    failed |= not ok
    line = f"skew        max={sk[0]:.3e}  tol=1.0e-12  {'ok' if ok else 'FAIL'}"
    if not ok:
        g, a, b = (i + 1 for i in sk[1])
        line += f"  C^{g}_{{{a},{b}}} + C^{g}_{{{b},{a}}} != 0 at x={np.round(sk[2], 6).tolist()}"
    print(line, file=out)
    for key, tol in (("jacobi", tol_axiom), ("anchor", tol_axiom), ("multiplier", tol_mult)):
        v = worst[key][0]
        ok = v <= tol
        failed |= not ok
        print(f"{key:<11} max={v:.3e}  tol={tol:.1e}  {'ok' if ok else 'FAIL'}", file=out)
    ok = regular == args.samples
    failed |= not ok
    print(f"regularity  min|det|={min(dets):.3e}  regular={regular}/{args.samples}  "
          f"{'ok' if ok else 'FAIL'}", file=out)
    return EXIT_VALIDATION if failed else EXIT_OK


# simulate

def _columns(s: VakonomicSystem):
    return (["t"] + [f"x_{i + 1}" for i in range(s.m)] + [f"yA_{i + 1}" for i in range(s.mbar)]
            + [f"ya_{i + 1}" for i in range(s.k)] + ["phi_max", "w1prime_defect"]
            + [f"p_{i + 1}" for i in range(s.k)] + ["y0"])


def write_csv(s: VakonomicSystem, traj: Trajectory, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(_columns(s))
    for i in range(len(traj)):
        row = ([traj.times[i]] + list(traj.x[i]) + list(traj.y_A[i]) + list(traj.controls[i])
               + [traj.phi_max[i], traj.w1prime_defect[i]] + list(traj.carried_momenta[i])
               + [traj.y0[i]])
        w.writerow([repr(float(v)) for v in row])


def read_csv(s: VakonomicSystem, fh) -> Trajectory:
    rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError("trajectory file is empty")
    header, body = rows[0], rows[1:]
    if header != _columns(s):
        raise ConfigError(f"trajectory columns do not match the model; expected {_columns(s)}")
    A = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    m, mb, k = s.m, s.mbar, s.k
    c = 1
    x = A[:, c:c + m]; c += m
    yA = A[:, c:c + mb]; c += mb
    u = A[:, c:c + k]; c += k + 2
    p = A[:, c:c + k]; c += k
    return trajectory_from_samples(s, A[:, 0], x, yA, u, p, A[:, c])


def _integrator_config(args, loaded) -> IntegratorConfig:
    base = loaded.integrator or {}
    t_span = base.get("t_span", [0.0, 1.0])
    if args.tspan:
        t_span = _vector(args.tspan, "tspan")
        if len(t_span) != 2:
            raise ConfigError("--tspan expects t0,t1")
    try:
        return IntegratorConfig(
            t_span=tuple(t_span),
            method=args.method or base.get("method", "rk4"),
            step=args.step if args.step is not None else base.get("step", 1e-3),
            rtol=args.rtol if args.rtol is not None else base.get("rtol", 1e-9),
            atol=args.atol if args.atol is not None else base.get("atol", 1e-12),
            record_every=args.record_every, resync=args.resync)
    except ValueError as exc:
        raise ConfigError(f"integrator settings: {exc}") from None


def _summary(loaded, traj, status, wall, cfg, error=None):
    s = loaded.sys
    d = {"model": loaded.label, "params": loaded.params, "status": status,
         "samples": len(traj) if traj is not None else 0,
         "t_span": list(cfg.t_span), "method": cfg.method, "wall_time_s": wall}
    if traj is not None and len(traj):
        st = traj.final_state
        d["final_state"] = {"t": float(traj.times[-1]), "x": st.x.tolist(),
                            "y_A": st.y_A.tolist(), "controls": st.controls.tolist()}
        d["max_phi"] = float(np.max(traj.phi_max))
        d["max_w1prime_defect"] = float(np.max(traj.w1prime_defect))
        adm = traj.admissibility[1:-1]
        d["max_admissibility_defect"] = float(np.max(adm)) if adm.size else None
    if error:
        d["error"] = error
    d["dimensions"] = {"m": s.m, "n": s.n, "mbar": s.mbar}
    return d


def _run_one(loaded, cfg):
    log.info("integrating %s on [%g, %g] with %s", loaded.label, *cfg.t_span, cfg.method)
    t0 = time.perf_counter()
    try:
        traj = integrate(loaded.sys, loaded.initial, cfg)
        return traj, "ok", time.perf_counter() - t0, None
    except (SingularRegularity, StepUnderflow, NoConvergence, OriginSingularity) as exc:
        last = getattr(exc, "last_time", None)
        msg = f"{type(exc).__name__}: {exc}" + (f" (last good t={last})" if last is not None else "")
        return getattr(exc, "trajectory", None), "singular", time.perf_counter() - t0, msg


def _parse_sweep(text):
    if "=" not in text:
        raise ConfigError("--sweep expects key=v1,v2,...")
    k, vals = text.split("=", 1)
    return k.strip(), _vector(vals, "sweep")


def cmd_simulate(args, out) -> int:
    params = _parse_params(args.param)
    if args.sweep:
        key, values = _parse_sweep(args.sweep)
        runs = []
        for v in values:
            loaded = load(args, {**params, key: v})
            runs.append((v, loaded, _integrator_config(args, loaded)))
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(lambda r: _run_one(r[1], r[2]), runs))
        summaries, code = [], EXIT_OK
        for (v, loaded, cfg), (traj, status, wall, err) in zip(runs, results):
            if args.out and traj is not None:
                root, ext = os.path.splitext(args.out)
                with open(f"{root}_{key}={v!r}{ext or '.csv'}", "w", newline="") as fh:
                    write_csv(loaded.sys, traj, fh)
            summaries.append({"sweep": {key: v}, **_summary(loaded, traj, status, wall, cfg, err)})
            if status != "ok":
                code = EXIT_SINGULAR
        _emit_json({"runs": summaries}, args.summary, out)
        return code
    loaded = load(args, params)
    cfg = _integrator_config(args, loaded)
    traj, status, wall, err = _run_one(loaded, cfg)
    if traj is not None:
        if args.out:
            with open(args.out, "w", newline="") as fh:
                write_csv(loaded.sys, traj, fh)
        else:
            write_csv(loaded.sys, traj, out)
    if err:
        print(err, file=sys.stderr)
    # keep stdout pure CSV when the trajectory is written there
    sink = out if args.out else sys.stderr
    _emit_json(_summary(loaded, traj, status, wall, cfg, err), args.summary, sink)
    return EXIT_OK if status == "ok" else EXIT_SINGULAR


def _emit_json(obj, path, out):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text, file=out)


# bracket

def _hamiltonian(text, loaded, names, params):
    if text.strip() == "h1":
        return w1prime_hamiltonian(loaded.sys)
    return HamiltonianSection(compile_scalar(text, names, params))


def _point(args, s, names):
    vals = dict(zip(names, np.zeros(len(names))))
    for item in args.at or []:
        for part in item.split(","):
            if not part.strip():
                continue
            if "=" not in part:
                raise ConfigError(f"--at expects name=value pairs, got {part!r}")
            k, v = (p.strip() for p in part.split("=", 1))
            if k not in vals:
                raise ConfigError(f"--at: unknown coordinate {k!r}; use {', '.join(names)}")
            vals[k] = float(v)
    return vals


def cmd_bracket(args, out) -> int:
    loaded = load(args)
    s = loaded.sys
    names = [f"x{i + 1}" for i in range(s.m)] + [f"p{i + 1}" for i in range(s.n)]
    try:
        h1 = _hamiltonian(args.h1, loaded, names, loaded.params)
        h2 = _hamiltonian(args.h2, loaded, names, loaded.params)
    except ExpressionError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    vals = _point(args, s, names)

    def evaluate(v):
        z = np.array([v[k] for k in names])
        x, y = z[:s.m], z[s.m:]
        if args.linear:
            return affine_linear_bracket(s.spec, h1, h2.H, x, y)
        return vakonomic_bracket(s.spec, h1, h2, x, y)

    if args.table:
        var, rng_ = args.table.split("=", 1) if "=" in args.table else (None, None)
        if var not in vals:
            raise ConfigError("--table expects name=start:stop:count")
        try:
            a, b, num = rng_.split(":")
            grid = np.linspace(float(a), float(b), int(num))
        except ValueError:
            raise ConfigError("--table expects name=start:stop:count") from None
        w = csv.writer(out, lineterminator="\n")
        w.writerow([var, "bracket"])
        for g in grid:
            w.writerow([repr(float(g)), repr(evaluate({**vals, var: g}))])
        return EXIT_OK
    print(repr(evaluate(vals)), file=out)
    return EXIT_OK


# variation

def cmd_variation(args, out) -> int:
    loaded = load(args)
    s = loaded.sys
    try:
        with open(args.trajectory, newline="") as fh:
            traj = read_csv(s, fh)
    except OSError as exc:
        raise ConfigError(f"cannot read trajectory: {exc}") from None
    if len(traj) < 5:
        raise ConfigError("variation needs a trajectory with at least 5 samples")
    t0, t1 = float(traj.times[0]), float(traj.times[-1])
    rng = np.random.default_rng(args.seed)
    direction = rng.normal(size=s.k)
    base = Bump(t0, t1, direction / np.linalg.norm(direction), 0)
    var, coef = endpoint_compatible_variation(s, traj, base)
    res = action_derivative(s, traj, var, args.eps)
    _emit_json({"fd_derivative": res.fd_derivative, "analytic_derivative": res.analytic_derivative,
                "boundary_term": res.boundary_term, "defect": res.defect,
                "tangency_residual": var.residual, "endpoint_XA": var.endpoint_constrained.tolist(),
                "shooting_coefficients": coef.tolist()}, None, out)
    return EXIT_OK


# entry point

def build_parser():
    p = argparse.ArgumentParser(prog="affg", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--model", help=f"zoo model ({', '.join(sorted(MODELS))})")
    src.add_argument("--config", help="JSON system description")
    common.add_argument("--param", action="append", metavar="KEY=VALUE", help="parameter override")
    common.add_argument("--fd", action="store_true", help="use finite differences for all derivatives")
    common.add_argument("--seed", type=int, default=0, help="seed for random probe points")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", parents=[common], help="validate axioms and regularity")
    c.add_argument("--samples", type=int, default=100)

    sm = sub.add_parser("simulate", parents=[common], help="integrate the vakonomic equations")
    sm.add_argument("--tspan", help="t0,t1")
    sm.add_argument("--step", type=float)
    sm.add_argument("--method", choices=["rk4", "rk45"])
    sm.add_argument("--rtol", type=float)
    sm.add_argument("--atol", type=float)
    sm.add_argument("--record-every", type=int, default=1)
    sm.add_argument("--resync", action="store_true", help="reset carried momenta after each step")
    sm.add_argument("--x", help="initial base point, comma-separated")
    sm.add_argument("--yA", help="initial multiplier momenta")
    sm.add_argument("--controls", help="initial free fiber velocities")
    sm.add_argument("--out", help="CSV output path (default: stdout)")
    sm.add_argument("--summary",
                    help="JSON summary path (default: stdout, or stderr when the CSV goes to stdout)")
    sm.add_argument("--sweep", help="KEY=v1,v2,... run one integration per value")
    sm.add_argument("--workers", type=int, default=4)

    b = sub.add_parser("bracket", parents=[common], help="evaluate the vakonomic bracket")
    b.add_argument("--h1", required=True, help="expression in x1.., p1.. or 'h1'")
    b.add_argument("--h2", required=True)
    b.add_argument("--at", action="append", help="coordinate values, e.g. x1=0,p1=2")
    b.add_argument("--linear", action="store_true", help="affine-linear part {h1, h2}")
    b.add_argument("--table", help="NAME=start:stop:count sweep one coordinate")

    v = sub.add_parser("variation", parents=[common], help="action derivative on a stored trajectory")
    v.add_argument("--trajectory", required=True, help="CSV written by simulate")
    v.add_argument("--eps", type=float, default=1e-4)
    return p


COMMANDS = {"check": cmd_check, "simulate": cmd_simulate, "bracket": cmd_bracket,
            "variation": cmd_variation}


def _configure_logging(name):
    level = logging.getLevelName(name.strip().upper())
    if not isinstance(level, int):
        level = logging.WARNING
        print(f"AFFG_LOG={name!r} is not a log level; using WARNING", file=sys.stderr)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(level)


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    _configure_logging(os.environ.get("AFFG_LOG", "WARNING"))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularRegularity, NoConvergence, OriginSingularity, StepUnderflow,
            ag.StructureEvaluationError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SINGULAR


def run():
    sys.exit(main())
