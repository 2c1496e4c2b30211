"""Command-line front end: moments, estimates, risk profiles, minimax
sweeps, simulations, and the plot-ready data behind the optimal-parameter
and risk-comparison figures.

Conventions: data goes to stdout or the requested files, diagnostics to
stderr, exit code 0 only on success.  Numbers are printed with 9
significant digits unless --precision says otherwise.  With a fixed seed
and fixed flags the outputs are byte-identical regardless of worker count.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .estimators import EstimatorSpec, build_estimate_table, estimate
from .geometry import BlochState, CountVector, probs_from_state, state_from_probs
from .moments import MomentEngine, dump_table
from .quadrature import QuadratureSpec, moment_oracle
from .risk import (
    StateGrid,
    die_state_lattice,
    mse_at_probs,
    mse_over_die_states,
    mse_profile,
    write_profile_csv,
    write_profile_summary,
)
from .search import optimal_beta, optimal_lambda
from .simulate import SimConfig, empirical_mse

CSV_SCHEMA_VERSION = 1

KIND_ALIASES = {
    "mean": "mean-trine",
    "classical": "classical-minimax",
    "corrected": "corrected-minimax",
    "ml": "ml-trine",
    "det": "mean-det-weight",
}


def _fmt(value, precision):
    if isinstance(value, float) and math.isnan(value):
        return "n/a"
    return f"{value:.{precision}g}"


def _resolve_spec(args) -> EstimatorSpec:
    kind = KIND_ALIASES.get(args.kind, args.kind)
    beta = getattr(args, "beta", None)
    lam = getattr(args, "lam", None)
    if kind == "mean-trine" and beta is None:
        raise SystemExit("--beta is required for the mean estimator")
    if kind == "mean-det-weight" and beta is None:
        raise SystemExit("--beta is required for the det-weight estimator")
    if kind == "corrected-minimax" and lam is None:
        raise SystemExit("--lambda is required for the corrected estimator")
    return EstimatorSpec(kind, beta=beta, lam=lam)


def _iter_actions(parser):
    for action in parser._actions:
        yield parser, action
    if parser._subparsers:
        for group_action in parser._subparsers._group_actions:
            for sub in group_action.choices.values():
                for action in sub._actions:
                    yield sub, action


def _load_config_defaults(parser, argv):
    """Apply key=value file entries as parser defaults; flags still win.

    Values go through each option's declared type; unknown keys are an
    error rather than silently ignored.
    """
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    entries = {}
    with open(known.config) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SystemExit(f"config line is not key=value: {line!r}")
            key, value = line.split("=", 1)
            entries[key.strip().replace("-", "_")] = value.strip()
    actions_by_dest = {}
    for sub, action in _iter_actions(parser):
        actions_by_dest.setdefault(action.dest, []).append((sub, action))
    unknown = set(entries) - set(actions_by_dest)
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    for key, raw in entries.items():
        for sub, action in actions_by_dest[key]:
            convert = action.type or str
            if action.nargs in (2, 3, "+", "*"):
                value = [convert(tok) for tok in raw.replace(",", " ").split()]
            elif isinstance(action.const, bool) or isinstance(action.default, bool):
                value = raw.lower() in ("1", "true", "yes", "on")
            else:
                value = convert(raw)
            sub.set_defaults(**{key: value})


def _add_common(p):
    p.add_argument("--config", help="key=value file supplying flag defaults")
    p.add_argument(
        "--workers",
        type=int,
        default=int(os.environ.get("TRINEMAX_WORKERS", "1")),
        help="worker threads for risk/simulation chunks (default: env TRINEMAX_WORKERS or 1)",
    )
    p.add_argument("--precision", type=int, default=9, help="printed significant digits")


def _add_counts(p):
    p.add_argument("--n", type=int, nargs=3, required=True, metavar=("N1", "N2", "N3"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trinemax",
        description="Minimax mean estimation for the trine measurement.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("moment", help="weighted moment of the click counts")
    _add_common(p)
    _add_counts(p)
    p.add_argument("--beta", type=float, required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="print the exact rational (integer beta >= 1)")
    mode.add_argument("--quadrature", action="store_true", help="force the direct 2D quadrature")

    p = sub.add_parser("estimate", help="point estimate for one count vector")
    _add_common(p)
    _add_counts(p)
    p.add_argument("--kind", required=True, choices=sorted(KIND_ALIASES))
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)

    p = sub.add_parser("risk", help="exact MSE profile over the state space")
    _add_common(p)
    p.add_argument("--kind", required=True, choices=sorted(KIND_ALIASES))
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--grid", type=int, nargs=2, default=[64, 96], metavar=("NR", "NPHI"))
    p.add_argument("--die-mode", action="store_true", help="evaluate over the whole simplex")
    p.add_argument("--die-resolution", type=int, default=24)
    p.add_argument("--self-test", action="store_true", help="oracle estimator, must give zero risk")
    p.add_argument("--out-csv")
    p.add_argument("--out-json")

    p = sub.add_parser("minimax", help="minimax parameter search at one N")
    _add_common(p)
    p.add_argument("--kind", default="mean", choices=["mean", "corrected"])
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--beta-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--rtol", type=float, default=1e-4)
    p.add_argument("--grid", type=int, nargs=2, default=[64, 96], metavar=("NR", "NPHI"))
    p.add_argument("--out")

    p = sub.add_parser("figure2", help="optimal beta versus N (CSV)")
    _add_common(p)
    p.add_argument("--N", type=int, nargs="+", required=True)
    p.add_argument("--grid", type=int, nargs=2, default=[64, 96], metavar=("NR", "NPHI"))
    p.add_argument("--rtol", type=float, default=1e-4)
    p.add_argument("--out", required=True)

    p = sub.add_parser("figure3", help="max/min MSE of the three estimators versus N (CSV)")
    _add_common(p)
    p.add_argument("--N", type=int, nargs="+", required=True)
    p.add_argument("--grid", type=int, nargs=2, default=[64, 96], metavar=("NR", "NPHI"))
    p.add_argument("--rtol", type=float, default=1e-4)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="Monte-Carlo cross-check of the exact MSE")
    _add_common(p)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--trials", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", default="mean", choices=sorted(KIND_ALIASES))
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--out")

    p = sub.add_parser("dump-table", help="write the exact moment tables as text")
    _add_common(p)
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--out", required=True)

    return parser


def _cmd_moment(args) -> int:
    counts = CountVector(*args.n)
    prec = args.precision
    if args.exact:
        if args.beta < 1 or args.beta != int(args.beta):
            print("--exact needs an integer beta >= 1", file=sys.stderr)
            return 1
        engine = MomentEngine()
        value = engine.moment_exact(int(args.beta), counts)
        print(f"{value.numerator}/{value.denominator} = {_fmt(float(value), prec)}")
        return 0
    if args.quadrature:
        value = moment_oracle(args.beta, counts, spec=QuadratureSpec(rtol=1e-9))
        print(_fmt(value, prec))
        return 0
    engine = MomentEngine()
    print(_fmt(engine.moment(args.beta, counts), prec))
    return 0


def _cmd_estimate(args) -> int:
    counts = CountVector(*args.n)
    spec = _resolve_spec(args)
    engine = MomentEngine() if spec.kind == "mean-trine" else None
    p = estimate(counts, spec, engine)
    state = state_from_probs(p)
    prec = args.precision
    line = f"{_fmt(p.p1, prec)} {_fmt(p.p2, prec)} {_fmt(p.p3, prec)}"
    bloch = f"r={_fmt(state.r, prec)} phi={_fmt(state.phi, prec)}"
    if state.r > 1.0 + 1e-9:
        bloch += f"  UNPHYSICAL r={state.r:.3f}"
    print(line)
    print(bloch)
    return 0


def _oracle_self_test(args) -> int:
    # A clairvoyant estimator that reports the true state has zero MSE;
    # this exercises the full enumeration path end to end.
    total = args.N
    spec = EstimatorSpec("corrected-minimax", lam=1.0)
    table = build_estimate_table(total, spec)
    r_nodes = np.linspace(0, 1, 9)
    phi_nodes = np.linspace(0, math.pi / 3, 7)
    worst = 0.0
    for r in r_nodes:
        for phi in phi_nodes:
            p = probs_from_state(BlochState(r, phi))
            table.probs[:] = p.as_array()
            worst = max(worst, abs(mse_at_probs(p, table)))
    print(f"self-test max |MSE| = {_fmt(worst, args.precision)}")
    return 0 if worst < 1e-12 else 1


def _cmd_risk(args) -> int:
    prec = args.precision
    if args.self_test:
        return _oracle_self_test(args)
    spec = _resolve_spec(args)
    engine = MomentEngine() if spec.kind == "mean-trine" else None
    table = build_estimate_table(args.N, spec, engine)
    if args.die_mode:
        states = die_state_lattice(args.die_resolution)
        values = mse_over_die_states(states, table)
        print(
            f"die-mode N={args.N} {spec.label()}: "
            f"max={_fmt(values.max(), prec)} min={_fmt(values.min(), prec)} "
            f"spread={_fmt(values.max() - values.min(), prec)}"
        )
        return 0
    grid = StateGrid(n_radial=args.grid[0], n_angular=args.grid[1])
    prof = mse_profile(grid, table, workers=args.workers)
    param = spec.beta if spec.beta is not None else spec.lam
    if args.out_csv:
        write_profile_csv(args.out_csv, prof, param)
    if args.out_json:
        write_profile_summary(args.out_json, prof)
    print(
        f"N={args.N} {spec.label()}: max={_fmt(prof.max_mse, prec)} at "
        f"(r={_fmt(prof.argmax[0], prec)}, phi={_fmt(prof.argmax[1], prec)}); "
        f"min={_fmt(prof.min_mse, prec)} at "
        f"(r={_fmt(prof.argmin[0], prec)}, phi={_fmt(prof.argmin[1], prec)})"
    )
    return 0


def _cmd_minimax(args) -> int:
    grid = StateGrid(n_radial=args.grid[0], n_angular=args.grid[1])
    prec = args.precision
    if args.kind == "mean":
        engine = MomentEngine()
        res = optimal_beta(
            args.N,
            engine,
            grid,
            beta_range=tuple(args.beta_range) if args.beta_range else None,
            rtol=args.rtol,
            workers=args.workers,
        )
    else:
        res = optimal_lambda(args.N, grid, rtol=args.rtol, workers=args.workers)
    print(
        f"N={args.N} {res.param_name}_opt={_fmt(res.param_opt, prec)} "
        f"minimax_mse={_fmt(res.minimax_mse, prec)} "
        f"flat=[{_fmt(res.flat_low, prec)}, {_fmt(res.flat_high, prec)}] "
        f"evals={res.evaluations}"
    )
    if args.out:
        payload = {
            "schema_version": CSV_SCHEMA_VERSION,
            "N": res.total,
            "param_name": res.param_name,
            "param_opt": res.param_opt,
            "minimax_mse": res.minimax_mse,
            "min_mse_at_opt": res.min_mse_at_opt,
            "flat_low": res.flat_low,
            "flat_high": res.flat_high,
            "samples": res.samples,
        }
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_figure2(args) -> int:
    grid = StateGrid(n_radial=args.grid[0], n_angular=args.grid[1])
    engine = MomentEngine()
    prec = args.precision
    rows = []
    for total in args.N:
        res = optimal_beta(total, engine, grid, rtol=args.rtol, workers=args.workers)
        rows.append(
            (
                total,
                res.param_opt,
                math.sqrt(total) / 3.0,
                res.minimax_mse,
                res.flat_low,
                res.flat_high,
            )
        )
        print(
            f"N={total} beta_opt={_fmt(res.param_opt, prec)} "
            f"classical={_fmt(math.sqrt(total) / 3.0, prec)}",
            file=sys.stderr,
        )
    with open(args.out, "w") as fh:
        fh.write("N,beta_opt,beta_classical,minimax_mse,flat_low,flat_high\n")
        for row in rows:
            fh.write(",".join(_fmt(v, prec) for v in row) + "\n")
    return 0


def _cmd_figure3(args) -> int:
    grid = StateGrid(n_radial=args.grid[0], n_angular=args.grid[1])
    engine = MomentEngine()
    prec = args.precision
    rows = []
    for total in args.N:
        beta_res = optimal_beta(total, engine, grid, rtol=args.rtol, workers=args.workers)
        lam_res = optimal_lambda(total, grid, rtol=args.rtol, workers=args.workers)
        ml_prof = mse_profile(
            grid, build_estimate_table(total, EstimatorSpec("ml-trine")), args.workers
        )
        rows.append((total, "corrected-minimax", lam_res.minimax_mse, lam_res.min_mse_at_opt))
        rows.append((total, "mean-trine", beta_res.minimax_mse, beta_res.min_mse_at_opt))
        rows.append((total, "ml-trine", ml_prof.max_mse, ml_prof.min_mse))
    with open(args.out, "w") as fh:
        fh.write("N,estimator,max_mse,min_mse\n")
        for total, kind, mx, mn in rows:
            fh.write(f"{total},{kind},{_fmt(mx, prec)},{_fmt(mn, prec)}\n")
    return 0


def _cmd_simulate(args) -> int:
    spec = _resolve_spec(args)
    engine = MomentEngine() if spec.kind == "mean-trine" else None
    table = build_estimate_table(args.N, spec, engine)
    state = BlochState(args.r, args.phi)
    cfg = SimConfig(state, args.N, trials=args.trials, seed=args.seed, spec=spec)
    mean, stderr = empirical_mse(cfg, table, workers=args.workers)
    exact = mse_at_probs(probs_from_state(state), table)
    prec = args.precision
    z = abs(mean - exact) / stderr if stderr and not math.isnan(stderr) else math.nan
    print(
        f"empirical={_fmt(mean, prec)} stderr={_fmt(stderr, prec)} "
        f"exact={_fmt(exact, prec)} |z|={_fmt(z, prec)}"
    )
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("N,estimator,r,phi,trials,seed,empirical_mse,std_error,exact_mse\n")
            fh.write(
                f"{args.N},{spec.label()},{_fmt(args.r, prec)},{_fmt(args.phi, prec)},"
                f"{args.trials},{args.seed},{_fmt(mean, prec)},{_fmt(stderr, prec)},"
                f"{_fmt(exact, prec)}\n"
            )
    return 0


def _cmd_dump_table(args) -> int:
    dump_table(args.out, args.n_max, MomentEngine(exact_cap=max(args.n_max, 140)))
    print(f"wrote exact tables to {args.out}", file=sys.stderr)
    return 0


_HANDLERS = {
    "moment": _cmd_moment,
    "estimate": _cmd_estimate,
    "risk": _cmd_risk,
    "minimax": _cmd_minimax,
    "figure2": _cmd_figure2,
    "figure3": _cmd_figure3,
    "simulate": _cmd_simulate,
    "dump-table": _cmd_dump_table,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    _load_config_defaults(parser, argv)
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
