"""
Command-line interface.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""
import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import g0dist
from .diagnostics import cvm_adequacy, diagnose as run_diagnostics, mmse_alpha0
from .errors import DomainError, G0Error, NotConverged
from .fit import FitOptions, Optimizer, confidence_intervals, fit_mle, wald_table
from .mc import McConfig, optimizer_pilot, run_study
from .model import Link, RegressionSpec
from .raster import MapStack, Raster, pooled_ratios, ratio_adequacy, window_distribution_maps, window_regression_maps

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _dump(obj, path):
    text = json.dumps(obj, indent=2, allow_nan=False)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


# data helpers ------------------------------------------------------------


def read_table(path):
    """Read a headed numeric CSV into ``{column: ndarray}``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise UsageError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    out = {}
    for j, name in enumerate(header):
        try:
            out[name] = np.array([float(r[j]) for r in body])
        except (ValueError, IndexError) as exc:
            raise UsageError(f"column {name!r} is not numeric") from exc
    return out


def parse_formula(formula):
    """``"y ~ x1 + x2"`` -> ``("y", ["x1", "x2"])``; ``"y ~"`` is intercept only."""
    if formula.count("~") != 1:
        raise UsageError(f"formula must contain one '~': {formula!r}")
    lhs, rhs = (s.strip() for s in formula.split("~"))
    if not lhs:
        raise UsageError("formula has no response")
    terms = [t.strip() for t in rhs.split("+")] if rhs else []
    if any(not t for t in terms):
        raise UsageError(f"empty term in formula {formula!r}")
    return lhs, [t for t in terms if t != "1"]


def _looks_arg(v):
    if v is None or v == "free":
        return None
    try:
        L = float(v)
    except ValueError as exc:
        raise UsageError(f"--looks must be a number or 'free', got {v!r}") from exc
    if not L > 0:
        raise UsageError("--looks must be > 0")
    return L


def build_spec(args):
    table = read_table(args.data)
    resp, terms = parse_formula(args.formula)
    for name in [resp] + terms:
        if name not in table:
            raise UsageError(f"column {name!r} not found in {args.data}")
    n = table[resp].size
    X = np.column_stack([np.ones(n)] + [table[t] for t in terms])
    return RegressionSpec(X, table[resp], Link(args.link), _looks_arg(args.looks), ["(Intercept)"] + terms)


def fit_payload(spec, fr):
    ci = confidence_intervals(fr, 0.05)
    th = fr.theta
    return {
        "schema_version": SCHEMA_VERSION,
        "family": fr.family.value,
        "link": spec.link.value,
        "looks_mode": "free" if spec.fix_looks is None else "fixed",
        "param_names": fr.param_names,
        "theta": {
            "beta": {nm: _num(b) for nm, b in zip(spec.names, th.beta)},
            "alpha": _num(th.alpha),
            "looks": _num(th.looks),
        },
        "cov": [[_num(v) for v in row] for row in fr.cov],
        "wald": [
            {"name": r.name, "estimate": _num(r.estimate), "std_error": _num(r.std_error), "t_stat": _num(r.t_stat), "p_value": _num(r.p_value)}
            for r in wald_table(fr)
        ],
        "ci95": [{"name": nm, "lo": _num(lo), "hi": _num(hi)} for nm, (lo, hi) in zip(fr.param_names, ci)],
        "loglik": _num(fr.loglik),
        "aic": _num(fr.aic),
        "aicc": _num(fr.aicc),
        "bic": _num(fr.bic),
        "convergence": {
            "converged": fr.converged,
            "iterations": fr.iterations,
            "grad_norm": _num(fr.grad_norm),
            "optimizer": fr.optimizer.value,
            "notes": fr.notes,
        },
    }


# subcommands -------------------------------------------------------------


def cmd_simulate(args):
    if args.design is None and (args.gamma is None) == (args.mu is None):
        raise UsageError("give exactly one of --gamma / --mu")
    if args.mu is not None and not args.alpha < -1:
        raise UsageError("--mu needs --alpha < -1")
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    rng = np.random.default_rng(args.seed)
    if args.design is not None:
        if args.beta is None:
            raise UsageError("--design needs --beta")
        if not args.alpha < -1:
            raise UsageError("--design needs --alpha < -1")
        table = read_table(args.design)
        names = list(table)
        beta = np.array([float(b) for b in args.beta.split(",")])
        if beta.size != len(names) + 1:
            raise UsageError(f"--beta needs {len(names) + 1} values (intercept + {len(names)} columns)")
        n = table[names[0]].size if names else args.n
        X = np.column_stack([np.ones(n)] + [table[c] for c in names])
        mu = np.exp(X @ beta)
        c = -args.alpha - 1.0
        z = rng.gamma(args.looks, 1.0 / args.looks, n) / (rng.gamma(-args.alpha, 1.0, n) / (mu * c))
        cols = {c_: table[c_] for c_ in names} | {"z": z}
    else:
        gamma = args.gamma if args.gamma is not None else args.mu * (-args.alpha - 1.0)
        p = g0dist.G0Params(args.alpha, gamma, args.looks)
        cols = {"z": g0dist.sample(p, args.n, rng)}
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(cols))
        for row in zip(*cols.values()):
            w.writerow([repr(float(v)) for v in row])
    return EXIT_OK


def cmd_fit(args):
    spec = build_spec(args)
    try:
        fr = fit_mle(spec, FitOptions(optimizer=Optimizer(args.optimizer), seed=args.seed))
    except NotConverged as exc:
        if exc.result is not None:
            _dump(fit_payload(spec, exc.result), args.out)
        raise
    _dump(fit_payload(spec, fr), args.out)
    return EXIT_OK


def cmd_diagnose(args):
    spec = build_spec(args)
    fr = fit_mle(spec, FitOptions(optimizer=Optimizer(args.optimizer)))
    rep = run_diagnostics(spec, fr, nu=args.envelope_nu, seed=args.seed)
    payload = rep.to_dict() | {"fit": fit_payload(spec, fr)}
    _dump(payload, f"{args.out}_report.json")
    rep.to_csv(f"{args.out}_obs.csv")
    if rep.envelope is not None:
        rep.envelope_csv(f"{args.out}_envelope.csv")
    return EXIT_OK


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("G0REG_THREADS")
    return int(env) if env else 1


def cmd_maps(args):
    r = Raster.read(args.raster)
    workers = _threads(args)
    if args.mode == "dist":
        channel = args.channel or args.response or r.channels[0]
        ms = window_distribution_maps(r, channel, args.window or 7, args.stride, workers)
    else:
        if not args.response or not args.predictor:
            raise UsageError("regress mode needs --response and --predictor")
        ms = window_regression_maps(r, args.response, args.predictor, args.window or 11, args.stride, workers)
    ms.write(f"{args.out}.json")
    summary = {"schema_version": SCHEMA_VERSION, "masked_fraction": ms.masked_fraction(), "window": ms.window}
    if args.mode == "regress":
        try:
            a0, stat, p = ratio_adequacy(ms)
            summary |= {"alpha0": a0, "statistic": stat, "p_value": p}
        except DomainError as exc:
            summary |= {"adequacy_error": str(exc)}
        _dump(summary, f"{args.out}_adequacy.json")
    if ms.masked_fraction() > 0.5:
        print(f"error: {ms.masked_fraction():.1%} of pixels masked", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _floats(s):
    return [float(v) for v in s.split(",") if v.strip()]


def cmd_mc(args):
    if args.config:
        cfg = McConfig.from_json(args.config)
    else:
        cfg = McConfig(
            alphas=_floats(args.alphas),
            looks=_floats(args.looks),
            ns=[int(v) for v in _floats(args.ns)],
            betas=[_floats(b) for b in args.beta] if args.beta else [[0.01, 0.01, 0.01]],
            replications=args.reps,
            optimizer=args.optimizer,
            seed=args.seed,
            fix_looks=not args.free_looks,
        )
    cfg.workers = _threads(args)
    summary = optimizer_pilot(cfg) if args.pilot else run_study(cfg)
    summary.to_csv(args.out, with_optimizer=args.pilot)
    if summary.flagged_cells:
        print(f"error: {len(summary.flagged_cells)} cell(s) converged in < 50% of replications", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_adequacy(args):
    if (args.ratios is None) == (args.maps is None):
        raise UsageError("give exactly one of --ratios / --maps")
    if args.maps:
        ms = MapStack.read(args.maps)
        if "ratio" not in ms.layers:
            raise UsageError(f"{args.maps} has no ratio layer")
        ratios = pooled_ratios(ms)
        looks = args.looks if args.looks is not None else ms.looks
    else:
        table = read_table(args.ratios)
        col = args.column or next(iter(table))
        if col not in table:
            raise UsageError(f"column {col!r} not found in {args.ratios}")
        ratios = table[col]
        if args.looks is None:
            raise UsageError("--looks is required with --ratios")
        looks = args.looks
    alpha0 = args.alpha0 if args.alpha0 is not None else mmse_alpha0(ratios, looks)
    stat, p = cvm_adequacy(ratios, alpha0, looks)
    _dump({"schema_version": SCHEMA_VERSION, "alpha0": alpha0, "looks": looks, "statistic": stat, "p_value": p, "n": int(np.size(ratios))}, args.out)
    return EXIT_OK


# parser ------------------------------------------------------------------


def _add_model_args(p):
    p.add_argument("--data", required=True, help="CSV with a header row")
    p.add_argument("--formula", required=True, help='e.g. "y ~ x1 + x2"; "y ~" fits the intercept only')
    p.add_argument("--looks", default="free", help="number of looks to hold fixed, or 'free'")
    p.add_argument("--link", default="log", choices=[l.value for l in Link])
    p.add_argument("--optimizer", default="CG", choices=[o.value for o in Optimizer])


def build_parser():
    ap = _Parser(prog="g0reg", description="G0 regression for SAR intensity data")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw G0 samples or a regression dataset")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--gamma", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--looks", type=float, default=1.0)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--design", help="covariate CSV; responses follow exp(x'beta)")
    p.add_argument("--beta", help="comma-separated coefficients, intercept first")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="maximum-likelihood fit")
    _add_model_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnose", help="residuals, influence and envelope")
    _add_model_args(p)
    p.add_argument("--envelope-nu", type=int, default=19)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("maps", help="sliding-window parameter maps")
    p.add_argument("--raster", required=True, help="sidecar JSON")
    p.add_argument("--mode", choices=["dist", "regress"], default="dist")
    p.add_argument("--channel")
    p.add_argument("--response")
    p.add_argument("--predictor")
    p.add_argument("--window", type=int, help="odd window size (default 7 dist, 11 regress)")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_maps)

    p = sub.add_parser("mc", help="Monte Carlo study")
    p.add_argument("--config", help="JSON file with McConfig fields")
    p.add_argument("--alphas", default="-5")
    p.add_argument("--looks", default="4")
    p.add_argument("--ns", default="20,100,500")
    p.add_argument("--beta", action="append", help="comma-separated coefficients; repeatable")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--optimizer", default="CG", choices=[o.value for o in Optimizer])
    p.add_argument("--free-looks", action="store_true")
    p.add_argument("--pilot", action="store_true", help="compare CG, BFGS and Nelder-Mead")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("adequacy", help="Cramer-von Mises test of ratios")
    p.add_argument("--ratios", help="CSV with a ratio column")
    p.add_argument("--column")
    p.add_argument("--maps", help="map-stack sidecar with a ratio layer")
    p.add_argument("--alpha0", type=float, help="default: minimum-distance estimate")
    p.add_argument("--looks", type=float)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_adequacy)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except G0Error as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
