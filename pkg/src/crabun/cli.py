"""Command-line interface: ``crabun {fit,simulate,summary,curve}``.

Exit codes: 0 success (possibly with warnings), 1 usage error, 2 data error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings

import numpy as np

from . import __version__
from .dataset import DataError, read_dataset, summarize
from .design import FAMILIES, ModelSpec, parse_family
from .em import EMControl, fit as fit_model
from .inference import (InstabilityWarning, ProfileLikelihood, aic, cl_variance, make_grid,
                        profile_se, ratio_ci, ratio_curve, wald_ci_cl)
from .likelihood import PenaltyConfig
from .numerics import NumericalError
from .simulate import ESTIMATORS, default_threads, run_study, scenario

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Help(argparse.ArgumentDefaultsHelpFormatter):
    # defaults of None are described in the help text itself
    def _get_help_string(self, action):
        if action.default is None or "(default" in (action.help or ""):
            return action.help
        return super()._get_help_string(action)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sentinel(v):
    """Finite floats pass through; everything else becomes a string."""
    if v is None:
        return None
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _columns(arg):
    if arg is None:
        return None
    return [c.strip() for c in arg.split(",") if c.strip()]


def _load(args):
    covs = _columns(args.covariates)
    hist = _columns(args.history)
    if covs is None:
        # default: a "sex" column if present, otherwise no covariates
        with open(args.data, newline="") as fh:
            header = [h.strip() for h in next(csv.reader(fh), [])]
        covs = ["sex"] if "sex" in header else []
    return read_dataset(args.data, hist, covs)


def _model(token, data):
    try:
        fam = parse_family(token)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    het = "h" in fam[1:]
    cols = data.covariate_names if het else ()
    if het and not cols:
        raise UsageError(f"model {token} needs covariates; pass --covariates")
    return ModelSpec(fam, cols)


# fit -------------------------------------------------------------------------

def fit_report(data, model, method, level, ctrl=EMControl()):
    res = fit_model(data, model, method, ctrl)
    warns = list(res.warnings)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", InstabilityWarning)
        if res.method == "CL":
            var = cl_variance(res, data, model)
            se = math.sqrt(var) if math.isfinite(var) and var >= 0 else math.inf
            ci = wald_ci_cl(res, data, model, level, var)
        else:
            prof = ProfileLikelihood(res, data, model)
            se = profile_se(res, data, model, prof)
            ci = ratio_ci(res, data, model, level, prof)
    warns += [str(w.message) for w in caught] + list(ci.warnings)
    pen = res.penalty_config or PenaltyConfig.from_data(data, penalized=False)
    names = model.parameter_names(data.K)
    return {
        "method": res.method,
        "model": model.token,
        "n": data.n,
        "K": data.K,
        "N_hat": _sentinel(res.N_hat),
        "N_hat_rounded": res.N_rounded if math.isfinite(res.N_hat) else "inf",
        "SE": _sentinel(se),
        "CI": {
            "lower": _sentinel(ci.lower),
            "upper": "censored" if ci.upper_censored else _sentinel(ci.upper),
            "level": level,
            "method": ci.method,
        },
        "alpha_hat": _sentinel(res.alpha_hat),
        "beta_hat": {k: _sentinel(v) for k, v in zip(names, res.beta_hat)},
        "chao": _sentinel(pen.chao),
        "C": _sentinel(pen.C if res.method == "PEL" else 0.0),
        "loglik": _sentinel(res.loglik),
        "AIC": _sentinel(aic(res)),
        "iterations": res.iterations,
        "converged": res.converged,
        "warnings": warns,
    }


def _flat(report):
    row = {}
    for k, v in report.items():
        if isinstance(v, dict):
            for kk, vv in v.items():
                row[f"{k}_{kk}"] = vv
        elif isinstance(v, list):
            row[k] = "; ".join(v)
        else:
            row[k] = v
    return row


def _to_csv(rows):
    out = io.StringIO()
    keys = list(rows[0])
    w = csv.DictWriter(out, keys, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return out.getvalue()


def _num(v, fmt="{:.2f}"):
    return fmt.format(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else str(v)


def fit_table(rep):
    ci = rep["CI"]
    lo, hi = ci["lower"], ci["upper"]
    interval = f"[{_num(lo, '{:.0f}')}, {_num(hi, '{:.0f}')}]"
    lines = [
        f"{'method':<8}{'model':<7}{'Est.':>9}{'SE':>9}  CI ({100 * ci['level']:g}%)",
        f"{rep['method']:<8}{rep['model']:<7}{_num(rep['N_hat_rounded'], '{}'):>9}"
        f"{_num(rep['SE']):>9}  {interval}",
        f"N_hat={_num(rep['N_hat'], '{:.4f}')}  alpha={_num(rep['alpha_hat'], '{:.4f}')}  "
        f"chao={_num(rep['chao'])}  C={_num(rep['C'], '{:.3g}')}  AIC={_num(rep['AIC'])}  "
        f"iterations={rep['iterations']}  converged={rep['converged']}",
    ]
    lines += [f"warning: {w}" for w in rep["warnings"]]
    return "\n".join(lines) + "\n"


def cmd_fit(args):
    if not 0.0 < args.level < 1.0:
        raise UsageError("--level must lie in (0, 1)")
    data = _load(args)
    model = _model(args.model, data)
    rep = fit_report(data, model, args.method, args.level)
    machine = _to_csv([_flat(rep)]) if args.format == "csv" else json.dumps(rep, indent=2) + "\n"
    _emit(args, machine, fit_table(rep))
    return EXIT_OK


def _emit(args, machine, table):
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(machine)
    sys.stdout.write(table if args.format == "table" else machine)


# summary ---------------------------------------------------------------------

def cmd_summary(args):
    data = _load(args)
    s = summarize(data)
    pen = PenaltyConfig.from_summary(s)
    rep = {"n": s.n, "K": s.K, "m1": s.m1, "m2": s.m2, "chao": _sentinel(pen.chao),
           "chao_rounded": int(math.floor(pen.chao + 0.5)), "C": _sentinel(pen.C),
           "capture_counts": list(s.capture_counts), "covariates": list(data.covariate_names)}
    if args.format == "csv":
        row = dict(rep, capture_counts=" ".join(map(str, s.capture_counts)),
                   covariates=" ".join(data.covariate_names))
        machine = _to_csv([row])
    else:
        machine = json.dumps(rep, indent=2) + "\n"
    table = (f"n={s.n}  K={s.K}  m1={s.m1}  m2={s.m2}  chao={pen.chao:.2f}  C={pen.C:.4g}\n"
             f"captures per occasion: {' '.join(map(str, s.capture_counts))}\n")
    _emit(args, machine, table)
    return EXIT_OK


# curve -----------------------------------------------------------------------

def _parse_grid(spec):
    try:
        lo, hi, num = spec.split(":")
        lo, hi, num = float(lo), float(hi), int(num)
    except ValueError:
        raise UsageError(f"--grid must look like lo:hi:num, got {spec!r}") from None
    if not (lo < hi and num >= 2):
        raise UsageError("--grid needs lo < hi and num >= 2")
    return lo, hi, num


def cmd_curve(args):
    data = _load(args)
    model = _model(args.model, data)
    methods = [m.strip().lower() for m in args.method.split(",")]
    for m in methods:
        if m not in ("el", "pel"):
            raise UsageError("curve supports --method el, pel or el,pel")
    fits = {m: fit_model(data, model, m) for m in methods}
    if args.grid:
        lo, hi, num = _parse_grid(args.grid)
    else:
        top = max(f.N_hat for f in fits.values() if math.isfinite(f.N_hat))
        lo, hi, num = float(data.n), max(3.0 * top, data.n + 10.0), 60
    if lo < data.n:
        raise UsageError(f"grid starts below n = {data.n}")
    grid = make_grid(lo, hi, num, args.log)
    curves = {m: ratio_curve(f, data, grid, model) for m, f in fits.items()}
    if len(methods) == 1:
        text = curves[methods[0]].to_csv()
    else:
        out = io.StringIO()
        out.write("N," + ",".join(f"ratio_{m}" for m in methods) + "\n")
        for j, N in enumerate(grid):
            out.write(f"{float(N)!r}," + ",".join(repr(float(curves[m].values[j])) for m in methods) + "\n")
        text = out.getvalue()
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# simulate --------------------------------------------------------------------

def _estimator_line(name, s):
    cov = "n/a" if s.coverage is None else f"{100 * s.coverage:.1f}%"
    return (f"{name:<4} rmse={s.rmse:.2f} mean={s.mean:.2f} bias={s.bias:+.2f} coverage={cov} "
            f"failed={s.failed} nonconverged={s.nonconverged} censored={s.censored}")


def cmd_simulate(args):
    ests = [e.strip().lower() for e in args.estimators.split(",") if e.strip()]
    for e in ests:
        if e not in ESTIMATORS:
            raise UsageError(f"unknown estimator {e!r}")
    try:
        cfg = scenario(args.scenario, args.N0, args.K, args.reps, args.seed, args.level,
                       args.fit_model)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    threads = args.threads if args.threads is not None else default_threads()
    rep = run_study(cfg, ests, intervals=not args.no_intervals,
                    ratio_at_truth=args.ratio_at_truth, threads=threads)
    text = rep.to_json()
    lines = "".join(_estimator_line(e, rep.estimators[e]) + "\n" for e in ests)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
        sys.stdout.write(lines)
    else:
        sys.stderr.write(lines)
        sys.stdout.write(text)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(rep.to_csv())
    return EXIT_OK


# parser ----------------------------------------------------------------------

def _data_args(p):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--history", help="comma-separated history columns in occasion order "
                   "(default: every column that is not a covariate)")
    p.add_argument("--covariates", help="comma-separated covariate columns "
                   "(default: 'sex' if the file has it, else none; pass '' for none)")


def _out_args(p):
    p.add_argument("--format", choices=("table", "json", "csv"), default="table",
                   help="what to print on stdout")
    p.add_argument("--out", help="also write the machine report (json, or csv with --format csv)")


def build_parser():
    tokens = ", ".join(f.lower() for f in FAMILIES)
    p = _Parser(prog="crabun", description=__doc__.splitlines()[0],
                formatter_class=_Help)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit one model and report N_hat, SE, CI and AIC",
                       formatter_class=_Help)
    _data_args(f)
    f.add_argument("--model", default="mhb", help=f"model family: {tokens}")
    f.add_argument("--method", choices=ESTIMATORS, default="pel", help="estimator")
    f.add_argument("--level", type=float, default=0.95, help="confidence level")
    _out_args(f)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("summary", help="n, K, m1, m2, Chao bound and tuning constant",
                       formatter_class=_Help)
    _data_args(s)
    _out_args(s)
    s.set_defaults(func=cmd_summary)

    c = sub.add_parser("curve", help="export the ratio statistic R'(N) over a grid as CSV",
                       formatter_class=_Help)
    _data_args(c)
    c.add_argument("--model", default="mhb", help=f"model family: {tokens}")
    c.add_argument("--method", default="pel", help="el, pel, or el,pel for both columns")
    c.add_argument("--grid", help="lo:hi:num (default: n to 3*N_hat, 60 points)")
    c.add_argument("--log", action="store_true", help="geometric rather than linear grid spacing")
    c.add_argument("--out", help="write the CSV here instead of stdout")
    c.set_defaults(func=cmd_curve)

    m = sub.add_parser("simulate", help="Monte Carlo study of one benchmark scenario",
                       formatter_class=_Help)
    m.add_argument("--scenario", default="A", help="A (Mh), B (Mhb, b=0.8) or C (Mhb, b=-0.8)")
    m.add_argument("--N0", type=int, default=200, help="true abundance")
    m.add_argument("--K", type=int, default=6, help="number of occasions")
    m.add_argument("--reps", type=int, default=1000, help="replicates")
    m.add_argument("--seed", type=int, default=0, help="master seed")
    m.add_argument("--level", type=float, default=0.95, help="confidence level")
    m.add_argument("--estimators", default="cl,el,pel", help="comma-separated subset of cl,el,pel")
    m.add_argument("--fit-model", dest="fit_model", default=None,
                   help="family fitted to each replicate (default: the true one)")
    m.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $CRABUN_THREADS or 1)")
    m.add_argument("--no-intervals", action="store_true", help="skip confidence intervals")
    m.add_argument("--ratio-at-truth", action="store_true", help="record R'(N0) per replicate")
    m.add_argument("--out", help="write the JSON report here (default: stdout)")
    m.add_argument("--csv", help="also write a one-row RMSE/coverage table")
    m.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"crabun: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"crabun: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"crabun: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"crabun: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
