"""Command-line orchestration: experiments, reports, CSV/SVG artifacts.

Subcommands map onto the library modules one-to-one; every run writes a
``report.json`` (schema 1, deterministic for a fixed config and seed modulo
the ``timestamp`` field) plus data CSVs and optional SVG plots into the
output directory.  Exit status: 0 on pass, 2 on numerical-acceptance
failure, 1 on usage errors.
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import cylinder, entropy, metrics, profiles, svg
from .potentials import potential_from_json, resolve_potential


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _tolval(value, tol, passed=None):
    out = {"value": value, "tol": tol}
    if passed is not None:
        out["pass"] = bool(passed)
    return out


def _write_report(outdir, config, payload, passed):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    report = {
        "schema": 1,
        "config": config,
        "results": payload,
        "pass": bool(passed),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    with open(outdir / "report.json", "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True, default=_jsonable)
    return report


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, frozenset):
        return sorted(x)
    raise TypeError(f"not serializable: {type(x)}")


def _load_config(path, parser_dests, args_ns):
    """Merge a config file into parsed args; unknown fields are rejected."""
    with open(path) as fh:
        cfg = json.load(fh)
    if cfg.pop("schema", 1) != 1:
        raise UsageError("unsupported config schema")
    cfg.pop("command", None)
    unknown = [k for k in cfg if k not in parser_dests]
    if unknown:
        raise UsageError(f"unknown config fields: {unknown}")
    for k, v in cfg.items():
        setattr(args_ns, k, v)
    return args_ns


def _potential_arg(spec):
    if spec.endswith(".json") or "/" in spec:
        with open(spec) as fh:
            return potential_from_json(json.load(fh))
    return resolve_potential(spec)


def _config_dict(args, keys):
    return {k: getattr(args, k) for k in keys}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_profile(args):
    from .potentials import find_wells_on_slice

    p = _potential_arg(args.potential)
    wells = args.wells
    if wells is None:
        scan = find_wells_on_slice(p, args.a)
        ys = sorted(w.point[1] for w in scan.wells)
        if len(ys) < 2:
            raise UsageError("could not find two wells on the slice; pass --wells")
        wells = [ys[0], ys[-1]]
    prof = profiles.solve_profile_ode(p, args.a, wells[0], wells[1])
    e1 = profiles.energy_1d(p, prof)
    geo = profiles.geodesic_cost_2d(p, args.a, wells[0], wells[1])
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([prof.t_samples] + [prof.values[:, k]
                                               for k in range(prof.dim)])
    np.savetxt(outdir / "profile.csv", data, delimiter=",",
               header="t," + ",".join(f"z{k + 1}" for k in range(prof.dim)),
               comments="")
    svg.write_line_chart(outdir / "profile.svg",
                         [("z2(t)", prof.t_samples.tolist(),
                           prof.values[:, 1].tolist())],
                         title="transition profile", xlabel="t", ylabel="z2")
    ok = abs(e1 - geo) <= 1e-3 and prof.equipartition_residual <= 1e-5
    payload = {
        "wells": list(map(float, wells)),
        "energy": _tolval(e1, 1e-3, abs(e1 - geo) <= 1e-3),
        "geodesic_cost": _tolval(geo, 1e-9),
        "equipartition_residual": _tolval(prof.equipartition_residual, 1e-5,
                                          prof.equipartition_residual <= 1e-5),
        "attached": list(prof.attached),
    }
    _write_report(args.out, _config_dict(args, ["potential", "a", "wells", "seed"]),
                  payload, ok)
    return 0 if ok else 2


def cmd_geodesic(args):
    p = _potential_arg(args.potential)
    res = profiles.geodesic_cost(
        p, np.asarray(args.src), np.asarray(args.dst), path_space=args.space,
        a=args.a, n_nodes=args.nodes, n_restarts=args.restarts, seed=args.seed)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    np.savetxt(outdir / "path.csv", res.path.points, delimiter=",",
               header=",".join(f"z{k + 1}" for k in range(res.path.dim)),
               comments="")
    payload = {
        "cost": _tolval(res.cost, 1e-5),
        "n_nodes": res.n_nodes,
        "converged": res.converged,
    }
    _write_report(args.out, _config_dict(
        args, ["potential", "space", "a", "src", "dst", "nodes", "restarts",
               "seed"]), payload, res.converged)
    return 0 if res.converged else 2


def cmd_minimize(args):
    p = _potential_arg(args.potential)
    grid = cylinder.CylinderGrid(d=p.dim, L=args.L, n1=args.n1, nper=args.np)
    u_minus = np.asarray(args.u_minus, dtype=float)
    u_plus = np.asarray(args.u_plus, dtype=float)
    opts = cylinder.MinimizeOptions(tol=args.tol, max_iter=args.max_iter,
                                    seed=args.seed, noise_amp=args.noise_amp)
    fld, rep = cylinder.minimize(p, grid, u_minus, u_plus, init=args.init,
                                 opts=opts)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    trace = np.asarray(rep.trace) if rep.trace else np.zeros((0, 4))
    np.savetxt(outdir / "trace.csv", trace, delimiter=",",
               header="iter,energy,grad_norm,slice_variance", comments="")
    if len(trace):
        svg.write_line_chart(outdir / "trace.svg",
                             [("energy", trace[:, 0].tolist(),
                               trace[:, 1].tolist())],
                             title="energy descent", xlabel="iteration",
                             ylabel="energy")
    cylinder.save_field(fld, str(outdir / "field"))
    cylinder.field_to_csv(fld, outdir / "field.csv")
    payload = rep.to_dict()
    payload["energy"] = _tolval(rep.energy, args.tol)
    payload["slice_variance"] = _tolval(rep.slice_variance, 1e-3)
    payload["divergence_max"] = _tolval(
        cylinder.divergence_max(fld), 1e-8,
        cylinder.divergence_max(fld) <= 1e-8)
    ok = rep.converged and cylinder.divergence_max(fld) <= 1e-8
    _write_report(args.out, _config_dict(
        args, ["potential", "L", "n1", "np", "u_minus", "u_plus", "init",
               "seed", "tol", "max_iter", "noise_amp"]), payload, ok)
    return 0 if ok else 2


def cmd_entropy_check(args):
    p = _potential_arg(args.potential)
    e = _entropy_arg(args.entropy)
    rep = entropy.check_punctual(e, p, box=args.box, n_random=args.samples,
                                 seed=args.seed)
    gap = None
    if args.u_minus is not None and args.u_plus is not None:
        gap = entropy.check_saturation(e, p, args.a, np.asarray(args.u_minus),
                                       np.asarray(args.u_plus))
        rep.saturation_gap = gap
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if e.dim == 2:
        _violation_heatmap(e, p, args.box, outdir / "criterion_grid.csv")
    payload = rep.to_dict()
    payload["max_violation"] = _tolval(rep.max_violation, 1e-10,
                                       rep.max_violation <= 1e-10)
    if gap is not None:
        payload["saturation_gap"] = _tolval(gap, 1e-4, abs(gap) <= 1e-4)
    _write_report(args.out, _config_dict(
        args, ["potential", "entropy", "box", "samples", "seed", "a",
               "u_minus", "u_plus"]), payload, rep.criterion_ok)
    return 0 if rep.criterion_ok else 2


def _violation_heatmap(e, p, box, path, n=64):
    xs = np.linspace(-box, box, n)
    mesh = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1)
    J = e.jac(mesh)
    c = 2.0 if e.kind == "strg" else 4.0
    viol = np.maximum(
        np.sum(entropy.traceless(J) ** 2, axis=(-2, -1)) - c * p(mesh), 0.0)
    np.savetxt(path, viol, delimiter=",")


def _entropy_arg(tag):
    from .poly import Poly2

    if tag == "wave-gl":
        return entropy.entropy_from_wave(
            Poly2({(0, 0): 1.0, (2, 0): -1.0, (0, 2): -1.0}))
    if tag == "harmonic-xy":
        return entropy.entropy_from_harmonic(Poly2({(1, 1): 1.0}))
    if tag.startswith("tricomi:"):
        delta = float(tag.split(":", 1)[1])
        w = Poly2({(0, 0): 1.0, (2, 0): -delta, (0, 2): -1.0})
        return entropy.entropy_tricomi(w, delta)
    if tag.startswith("phi"):
        return entropy.entropy_phi_d(int(tag[3:]))
    raise UsageError(f"unknown entropy tag {tag!r}")


def cmd_tricomi_check(args):
    from .poly import Poly2
    from .potentials import builtin_w_squared

    w = Poly2({(0, 0): 1.0, (2, 0): -args.delta, (0, 2): -1.0})
    p = builtin_w_squared(w, "tricomi", f=args.delta)
    grid = cylinder.CylinderGrid(d=2, L=args.L, n1=args.n1, nper=args.np)
    h = max(grid.h1, grid.hper)
    u_minus = np.array([0.0, -1.0])
    u_plus = np.array([0.0, 1.0])
    worst = 0.0
    rows = []
    for k in range(args.fields):
        fld = cylinder.random_div_free_field(p, grid, u_minus, u_plus,
                                             seed=args.seed + k)
        rep = entropy.tricomi_identity_check(w, args.delta, fld, p=p)
        rows.append([k, rep.lhs, rep.rhs, rep.residual])
        worst = max(worst, rep.residual)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    np.savetxt(outdir / "identity.csv", np.asarray(rows), delimiter=",",
               header="field,lhs,rhs,residual", comments="")
    tol = 10.0 * h * h
    ok = worst <= tol
    payload = {"worst_residual": _tolval(worst, tol, ok),
               "h": h, "fields": args.fields}
    _write_report(args.out, _config_dict(
        args, ["delta", "L", "n1", "np", "fields", "seed"]), payload, ok)
    return 0 if ok else 2


def cmd_ode3d(args):
    traj = entropy.ode3d_solve(args.b, (args.v2, args.v3), t_span=args.t,
                               dt=args.dt)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    np.savetxt(outdir / "trajectory.csv",
               np.column_stack([traj.t, traj.v]), delimiter=",",
               header="t,v2,v3", comments="")
    svg.write_line_chart(outdir / "trajectory.svg",
                         [("v2", traj.t.tolist(), traj.v[:, 0].tolist()),
                          ("v3", traj.t.tolist(), traj.v[:, 1].tolist())],
                         title="planar reduction", xlabel="t")
    payload = {"omega_limit": traj.omega_limit,
               "final": traj.v[-1].tolist()}
    ok = traj.omega_limit != "blowup"
    _write_report(args.out, _config_dict(args, ["b", "v2", "v3", "t", "dt"]),
                  payload, ok)
    return 0 if ok else 2


def _metric_arg(path):
    with open(path) as fh:
        data = json.load(fh)
    return metrics.FiniteMetric(X=np.asarray(data["points"], dtype=float),
                                delta=np.asarray(data["delta"], dtype=float))


def cmd_metric_build(args):
    fm = _metric_arg(args.input)
    w = metrics.build_weight_w(fm)
    audit = metrics.verify_segment_optimality(w, trials=args.trials,
                                              seed=args.seed)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    lo = fm.X.min(axis=0) - 1.0
    hi = fm.X.max(axis=0) + 1.0
    if fm.X.shape[1] == 2:
        xs = np.linspace(lo[0], hi[0], args.grid)
        ys = np.linspace(lo[1], hi[1], args.grid)
        mesh = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
        np.savetxt(outdir / "weight_grid.csv", w(mesh), delimiter=",")
    payload = {
        "pairs": audit.pair_results,
        "worst_gap": _tolval(audit.worst_gap, 1e-5, audit.passed),
        "lambda0": w.lambda0,
    }
    _write_report(args.out, _config_dict(
        args, ["input", "trials", "seed", "grid"]), payload, audit.passed)
    return 0 if audit.passed else 2


def cmd_calibrate(args):
    fm = _metric_arg(args.input)
    Y = frozenset(int(k) for k in args.Y.split(","))
    cal = metrics.calibration_phi(fm.X, Y)
    vals = cal(fm.X)
    target = metrics.cut_metric(Y, fm.n)
    err = float(np.max(np.abs(np.abs(vals[:, None] - vals[None, :]) - target)))
    ok = err <= 1e-10
    payload = {"phi_at_points": vals.tolist(),
               "value_error": _tolval(err, 1e-10, ok),
               "lambda0": cal.lambda0}
    _write_report(args.out, _config_dict(args, ["input", "Y"]), payload, ok)
    return 0 if ok else 2


def cmd_decompose(args):
    fm = _metric_arg(args.input)
    dec = metrics.decompose_cuts(fm.delta, fm.n)
    recon_err = float(np.max(np.abs(dec.reconstruct() - fm.delta)))
    payload = {
        "feasible": dec.feasible,
        "residual": _tolval(dec.residual, 1e-9, dec.feasible),
        "reconstruction_error": recon_err,
        "weights": {",".join(map(str, sorted(Y))): lam
                    for Y, lam in dec.weights.items()},
    }
    _write_report(args.out, _config_dict(args, ["input"]), payload,
                  dec.feasible)
    return 0 if dec.feasible else 2


def cmd_sweep(args):
    if not args.config:
        raise UsageError("sweep requires --config")
    with open(args.config) as fh:
        spec = json.load(fh)
    if spec.get("schema", 1) != 1:
        raise UsageError("unsupported sweep schema")
    sub = spec["command"]
    vary = spec["vary"]
    base = dict(spec.get("base", {}))
    rows = []
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for k, value in enumerate(vary["values"]):
        run_cfg = dict(base)
        run_cfg[vary["param"]] = value
        run_out = outdir / f"run{k:03d}"
        argv = [sub, "--out", str(run_out)]
        for key, val in run_cfg.items():
            argv.append(f"--{key.replace('_', '-')}")
            if isinstance(val, (list, tuple)):
                argv.extend(str(v) for v in val)
            else:
                argv.append(str(val))
        code = main(argv)
        with open(run_out / "report.json") as fh:
            rep = json.load(fh)
        rows.append({"value": value, "exit": code, "results": rep["results"]})
    with open(outdir / "sweep.json", "w") as fh:
        json.dump({"param": vary["param"], "rows": rows}, fh, indent=1,
                  sort_keys=True, default=_jsonable)
    ok = all(r["exit"] == 0 for r in rows)
    _write_report(args.out, {"config": args.config}, {"runs": len(rows)}, ok)
    return 0 if ok else 2


# ---------------------------------------------------------------------------

def _build_parser():
    ap = _Parser(prog="stokeslab")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", default="out")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", default=None)

    sp = sub.add_parser("profile")
    common(sp)
    sp.add_argument("--potential", required=True)
    sp.add_argument("--a", type=float, default=0.0)
    sp.add_argument("--wells", type=float, nargs=2, default=None)
    sp.set_defaults(fn=cmd_profile)

    sp = sub.add_parser("geodesic")
    common(sp)
    sp.add_argument("--potential", required=True)
    sp.add_argument("--space", choices=["slice", "ambient"], default="slice")
    sp.add_argument("--a", type=float, default=None)
    sp.add_argument("--src", type=float, nargs="+", required=True)
    sp.add_argument("--dst", type=float, nargs="+", required=True)
    sp.add_argument("--nodes", type=int, default=64)
    sp.add_argument("--restarts", type=int, default=5)
    sp.set_defaults(fn=cmd_geodesic)

    sp = sub.add_parser("minimize")
    common(sp)
    sp.add_argument("--potential", required=True)
    sp.add_argument("--L", type=float, default=10.0)
    sp.add_argument("--n1", type=int, default=256)
    sp.add_argument("--np", type=int, default=64)
    sp.add_argument("--u-minus", type=float, nargs="+", default=[0.0, -1.0])
    sp.add_argument("--u-plus", type=float, nargs="+", default=[0.0, 1.0])
    sp.add_argument("--init", default="profile-embed")
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-iter", type=int, default=2000)
    sp.add_argument("--noise-amp", type=float, default=0.2)
    sp.set_defaults(fn=cmd_minimize)

    sp = sub.add_parser("entropy-check")
    common(sp)
    sp.add_argument("--potential", required=True)
    sp.add_argument("--entropy", required=True)
    sp.add_argument("--box", type=float, default=2.0)
    sp.add_argument("--samples", type=int, default=2000)
    sp.add_argument("--a", type=float, default=0.0)
    sp.add_argument("--u-minus", type=float, nargs="+", default=None)
    sp.add_argument("--u-plus", type=float, nargs="+", default=None)
    sp.set_defaults(fn=cmd_entropy_check)

    sp = sub.add_parser("tricomi-check")
    common(sp)
    sp.add_argument("--delta", type=float, default=0.5)
    sp.add_argument("--L", type=float, default=6.0)
    sp.add_argument("--n1", type=int, default=128)
    sp.add_argument("--np", type=int, default=32)
    sp.add_argument("--fields", type=int, default=10)
    sp.set_defaults(fn=cmd_tricomi_check)

    sp = sub.add_parser("ode3d")
    common(sp)
    sp.add_argument("--b", type=float, default=1.0)
    sp.add_argument("--v2", type=float, default=0.0)
    sp.add_argument("--v3", type=float, default=0.0)
    sp.add_argument("--t", type=float, default=12.0)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.set_defaults(fn=cmd_ode3d)

    sp = sub.add_parser("metric-build")
    common(sp)
    sp.add_argument("--input", required=True)
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--grid", type=int, default=64)
    sp.set_defaults(fn=cmd_metric_build)

    sp = sub.add_parser("calibrate")
    common(sp)
    sp.add_argument("--input", required=True)
    sp.add_argument("--Y", required=True)
    sp.set_defaults(fn=cmd_calibrate)

    sp = sub.add_parser("decompose")
    common(sp)
    sp.add_argument("--input", required=True)
    sp.set_defaults(fn=cmd_decompose)

    sp = sub.add_parser("sweep")
    common(sp)
    sp.set_defaults(fn=cmd_sweep)

    return ap


def main(argv=None):
    os.environ.setdefault("STOKES_LAB_THREADS", "1")
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
        if getattr(args, "config", None) and args.command != "sweep":
            dests = {a.dest for a in ap._subparsers._group_actions[0]
                     .choices[args.command]._actions}
            _load_config(args.config, dests, args)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
