"""Command-line front end: ``zicount {fit,select,compare,diagnose,describe}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .dataset import DataError, ObservationTable, cell_summaries, read_csv, trajan
from .distributions import FAMILIES, get_family, pmf
from .fitting import FitOptions, FittedModel, ModelSpec, data_fingerprint, fit
from .linkdesign import DesignError
from .selection import compare_models, format_table, parse_scope, step_gaic_all
from .specfun import DomainError
from .svg import PALETTE, Figure

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3

log = logging.getLogger("zicount")

# Predictors used for the Trajan fits when no term flags are given.
TRAJAN_DEFAULTS = {
    "ZIP": {"mu": "~0+photoperiod", "sigma": "~0+photoperiod"},
    "ZINB": {"mu": "~0+photoperiod", "sigma": "~0+photoperiod", "nu": "~0+photoperiod"},
    "ZIPIG": {"mu": "~0+photoperiod", "nu": "~0+photoperiod"},
    "ZIBNB": {"mu": "~0+photoperiod", "tau": "~0+photoperiod"},
}
COMPARE_DEFAULT = ("ZIP", "ZINB", "ZIPIG", "ZIBNB")
PARAMS = ("mu", "sigma", "nu", "tau")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# argument handling


def _env_seed() -> int:
    raw = os.environ.get("ZICOUNT_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"ZICOUNT_SEED must be an integer, got {raw!r}") from None


def _add_data_args(p):
    g = p.add_argument_group("data")
    g.add_argument("--data", default="trajan", help="'trajan' (embedded) or a CSV path")
    g.add_argument("--response", help="response column (CSV input)")
    g.add_argument("--factors", help="comma-separated factor columns (CSV input)")
    g.add_argument("--levels", action="append", default=[], metavar="FACTOR=L1,L2,...",
                   help="override the level order of a factor; repeatable")


def _add_fit_args(p, multi_family=False):
    if multi_family:
        p.add_argument("--families", default=",".join(COMPARE_DEFAULT),
                       help="comma-separated family ids")
    else:
        p.add_argument("--family", required=True, help=f"one of {', '.join(FAMILIES)}")
    for name in PARAMS:
        p.add_argument(f"--{name}", help=f"term string for {name}, e.g. '~0+photoperiod' or '1'")
    p.add_argument("--link", action="append", default=[], metavar="PARAM=LINK",
                   help="override a link (log, logit, identity); repeatable")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (falls back to $ZICOUNT_SEED, then 0)")
    p.add_argument("--starts", type=int, default=5, help="optimiser starting points")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-6)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zicount", description="Zero-inflated count regression.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit one model")
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--out", default="out")

    p = sub.add_parser("select", help="stepwise GAIC selection over all parameters")
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--scope", help="candidate terms, e.g. 'photoperiod,bap,photoperiod:bap'")
    p.add_argument("--k", type=float, default=2.0, help="GAIC penalty per parameter")
    p.add_argument("--out", default="out")

    p = sub.add_parser("compare", help="fit several families and rank them")
    _add_data_args(p)
    _add_fit_args(p, multi_family=True)
    p.add_argument("--select", action="store_true", help="choose predictors by stepwise GAIC")
    p.add_argument("--scope")
    p.add_argument("--k", type=float, default=2.0)
    p.add_argument("--criterion", choices=("aic", "bic"), default="aic")
    p.add_argument("--out", default="out")

    p = sub.add_parser("diagnose", help="residuals, worm plots and term effects")
    _add_data_args(p)
    p.add_argument("--fit", dest="fit_json", help="fit.json written by 'fit' or 'select'")
    p.add_argument("--family", help="fit inline instead of reading --fit")
    for name in PARAMS:
        p.add_argument(f"--{name}")
    p.add_argument("--link", action="append", default=[], metavar="PARAM=LINK")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--mode", choices=("randomized", "midpoint"), default="randomized")
    p.add_argument("--group", help="factor whose levels get separate worm plots")
    p.add_argument("--plots", action="store_true", help="also write SVG figures")
    p.add_argument("--out", default="out")

    p = sub.add_parser("describe", help="cell summaries and response frequencies")
    _add_data_args(p)
    p.add_argument("--out", default="out")
    return parser


def load_data(args) -> ObservationTable:
    if args.data == "trajan":
        if args.response or args.factors:
            raise UsageError("--response/--factors apply to CSV input only")
        data = trajan()
    else:
        if not args.response or not args.factors:
            raise UsageError("CSV input needs --response and --factors")
        factors = [f.strip() for f in args.factors.split(",") if f.strip()]
        if not Path(args.data).is_file():
            raise DataError(f"{args.data}: no such file")
        data = read_csv(args.data, args.response, factors)
    for item in args.levels:
        name, sep, order = item.partition("=")
        if not sep:
            raise UsageError(f"--levels expects FACTOR=L1,L2,..., got {item!r}")
        name = name.strip()
        if name not in data.factors:
            raise UsageError(f"--levels: unknown factor {name!r}")
        try:
            data = data.with_levels(name, [s.strip() for s in order.split(",")])
        except DataError as exc:
            raise UsageError(str(exc)) from None
    return data


def _links(items) -> dict:
    out = {}
    for item in items:
        name, sep, link = item.partition("=")
        if not sep:
            raise UsageError(f"--link expects PARAM=LINK, got {item!r}")
        out[name.strip()] = link.strip()
    return out


def build_spec(family: str, args, data: ObservationTable) -> ModelSpec:
    fam = get_family(family)
    given = {p: getattr(args, p) for p in PARAMS if getattr(args, p, None) is not None}
    extra = set(given) - set(fam.param_names)
    if extra:
        raise UsageError(f"{fam.family_id} has no parameter(s) {', '.join(sorted(extra))}")
    terms = dict(TRAJAN_DEFAULTS.get(fam.family_id, {})) if data.source == "trajan" and not given else {}
    terms.update(given)
    try:
        spec = ModelSpec.build(fam, terms, _links(getattr(args, "link", [])))
    except (DesignError, DomainError, KeyError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    for t in spec.terms:
        for term in t.factor_terms:
            for name in term.factors:
                if name not in data.factors:
                    raise UsageError(f"unknown factor {name!r}; data has {', '.join(data.factors)}")
    return spec


def fit_options(args) -> FitOptions:
    seed = args.seed if args.seed is not None else _env_seed()
    return FitOptions(max_iter=args.max_iter, tol=args.tol, n_starts=args.starts, seed=seed)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _data_block(args, data: ObservationTable) -> dict:
    return {"source": args.data, "response": data.response_name,
            "factors": list(data.factors), "levels": {f: list(v) for f, v in data.levels.items()}}


def _write_json(path: Path, obj) -> None:
    with path.open("w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _save_fit(path: Path, fm: FittedModel, args, data) -> None:
    d = fm.to_dict()
    d["input"] = _data_block(args, data)
    _write_json(path, d)


def _status_code(fm: FittedModel) -> int:
    status = fm.convergence.status
    if status == "failed":
        print(f"error: {fm.spec.family.family_id} fit did not converge ({fm.convergence.message}; |grad| = "
              f"{fm.convergence.grad_norm:.3g})", file=sys.stderr)
        return EXIT_CONVERGENCE
    if status == "boundary":
        edge = ", ".join(k for k, v in fm.convergence.boundary.items() if v)
        print(f"warning: {fm.spec.family.family_id} estimate on the parameter-space boundary ({edge})", file=sys.stderr)
    return EXIT_OK


def format_fit(fm: FittedModel) -> str:
    lines = [fm.spec.describe(),
             f"n = {fm.n}  df = {fm.df}  status = {fm.convergence.status}",
             f"Global deviance {fm.deviance:.3f}   AIC {fm.aic:.3f}   BIC {fm.bic:.3f}",
             "",
             f"{'param':6s} {'term':22s} {'estimate':>11s} {'std.err':>10s}"]
    for e in dg.term_effects(fm):
        se = "-" if e.se is None else f"{e.se:10.4f}"
        lines.append(f"{e.param:6s} {e.label:22s} {e.estimate:11.4f} {se:>10s}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    data = load_data(args)
    spec = build_spec(args.family, args, data)
    out = _outdir(args)
    fm = fit(spec, data, fit_options(args))
    _save_fit(out / "fit.json", fm, args, data)
    print(format_fit(fm))
    return _status_code(fm)


def _scope(args, data):
    if not args.scope:
        return None
    scope = parse_scope(args.scope)
    try:
        scope.validate(data)
    except DesignError as exc:
        raise UsageError(str(exc)) from None
    return scope


def cmd_select(args) -> int:
    data = load_data(args)
    get_family(args.family)
    scope = _scope(args, data)
    out = _outdir(args)
    trace = step_gaic_all(args.family, data, scope, k=args.k, options=fit_options(args))
    trace.write(out / "trace.log", out / "trace.json")
    fm = trace.final_fit
    _save_fit(out / "fit.json", fm, args, data)
    print(format_table(compare_models([fm])))
    print()
    print(format_fit(fm))
    return _status_code(fm)


def cmd_compare(args) -> int:
    data = load_data(args)
    families = [f.strip() for f in args.families.split(",") if f.strip()]
    if not families:
        raise UsageError("--families is empty")
    fams = [get_family(f) for f in families]
    if len(fams) > 1 and any(getattr(args, p) for p in PARAMS):
        raise UsageError("per-parameter term flags need a single family in compare")
    scope = _scope(args, data)
    out = _outdir(args)
    opts = fit_options(args)
    fits = []
    for fam in fams:
        if args.select:
            trace = step_gaic_all(fam, data, scope, k=args.k, options=opts)
            trace.write(out / f"trace_{fam.family_id}.log", out / f"trace_{fam.family_id}.json")
            fits.append(trace.final_fit)
        else:
            fits.append(fit(build_spec(fam.family_id, args, data), data, opts))
    rows = compare_models(fits, args.criterion)
    cols = ["family", "deviance", "df", "aic", "bic", "mu", "sigma", "nu", "tau", "status"]
    with (out / "compare.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", *cols])
        for i, r in enumerate(rows, 1):
            w.writerow([i, *(f"{r[c]:.6f}" if isinstance(r[c], float) else r[c] for c in cols)])
    print(format_table(rows))
    code = EXIT_OK
    for fm in fits:
        code = max(code, _status_code(fm))
    return code


def _load_fit(path) -> FittedModel:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return FittedModel.from_dict(d)
    except FileNotFoundError:
        raise DataError(f"{path}: no such fit file") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: not a readable fit file ({exc})") from None


def cmd_diagnose(args) -> int:
    if bool(args.fit_json) == bool(args.family):
        raise UsageError("diagnose needs exactly one of --fit FILE or --family (inline spec)")
    data = load_data(args)
    if args.fit_json:
        fm = _load_fit(args.fit_json)
        if fm.data_fingerprint and fm.data_fingerprint != data_fingerprint(data):
            raise DataError("the fit was made on different data than --data supplies")
    else:
        fm = fit(build_spec(args.family, args, data), data, fit_options(args))
    if args.group and args.group not in data.factors:
        raise UsageError(f"unknown grouping factor {args.group!r}")
    out = _outdir(args)
    seed = args.seed if args.seed is not None else _env_seed()
    rs = dg.quantile_residuals(fm, data, seed=seed, mode=args.mode)
    dg.write_residuals(rs, out / "residuals.csv", data)
    n_bad = int(np.sum(~rs.valid))
    if n_bad:
        print(f"warning: {n_bad} observation(s) impossible under the fit; residual omitted",
              file=sys.stderr)

    overall = dg.worm_series(rs)[0]
    dg.write_worm(overall, out / "worm_all.csv")
    groups = []
    if args.group:
        groups = dg.worm_series(rs, data, args.group)
        for ws in groups:
            dg.write_worm(ws, out / f"worm_{_slug(ws.label)}.csv")
    effects = dg.term_effects(fm)
    dg.write_term_effects(effects, out / "terms.csv")
    if not fm.convergence.vcov_available:
        print("warning: no positive-definite Hessian; term effects written without intervals",
              file=sys.stderr)

    z = rs.z[rs.valid]
    print(f"{fm.spec.describe()}")
    print(f"residuals: n = {len(z)}  mean = {np.mean(z):.4f}  sd = {np.std(z, ddof=1):.4f}  "
          f"mode = {rs.mode}  seed = {seed}")
    for ws in [overall, *groups]:
        print(f"worm {ws.label}: m = {ws.m}, inside 95% band: {ws.fraction_inside():.3f}")

    if args.plots:
        plot_qq(overall, out / "qq.svg")
        plot_worms([overall], out / "worm_all.svg")
        if groups:
            plot_worms(groups, out / f"worm_{_slug(args.group)}.svg")
        plot_terms(effects, out / "terms.svg")
        base = fit(ModelSpec.build(fm.spec.family), data, fit_options(args))
        plot_histogram(data, base, out / "histogram.svg")
    return _status_code(fm)


def cmd_describe(args) -> int:
    data = load_data(args)
    out = _outdir(args)
    cells = cell_summaries(data)
    with (out / "cells.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*data.factors, "n", "mean", "variance"])
        for c in cells:
            var = "" if c.variance is None else f"{c.variance:.6f}"
            w.writerow([*c.cell, c.n, f"{c.mean:.6f}", var])
    values, counts = np.unique(data.response, return_counts=True)
    with (out / "frequencies.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([data.response_name, "count"])
        w.writerows(zip(values.tolist(), counts.tolist()))
    print(f"{'cell':24s} {'n':>4s} {'mean':>8s} {'variance':>9s}")
    for c in cells:
        var = "-" if c.variance is None else f"{c.variance:9.3f}"
        print(f"{' / '.join(c.cell):24s} {c.n:4d} {c.mean:8.3f} {var:>9s}")
    print(f"total n = {data.n}")
    return EXIT_OK


def _slug(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-." else "_" for ch in label)


# ---------------------------------------------------------------------------
# figures


def plot_qq(ws: dg.WormSeries, path) -> None:
    lim = (min(ws.q.min(), ws.z.min()), max(ws.q.max(), ws.z.max()))
    fig = Figure(440, 420)
    p = fig.panel(60, 40, 350, 330, lim, lim, "Normal Q-Q plot of quantile residuals",
                  "Theoretical quantiles", "Sample quantiles")
    p.line(lim, lim, color="#888", dash="4 3")
    p.points(ws.q, ws.z, color=PALETTE[0], r=1.8)
    fig.save(path)


def plot_worms(series, path) -> None:
    n = len(series)
    ncols = min(n, 2)
    nrows = (n + ncols - 1) // ncols
    fig = Figure(300 + 300 * (ncols - 1) + 80, 110 + 270 * nrows)
    ymax = max(max(np.max(np.abs(ws.deviation)), np.max(ws.band)) for ws in series)
    ylim = (-1.1 * ymax, 1.1 * ymax)
    xlims = [(ws.q.min(), ws.q.max()) for ws in series]
    panels = fig.grid(nrows, ncols, xlims, [ylim] * n, [ws.label for ws in series],
                      "Unit normal quantile", "Deviation")
    for p, ws in zip(panels, series):
        p.band(ws.q, -ws.band, ws.band, color="#9ecae1", opacity=0.5)
        p.line(ws.q, ws.band, color="#3182bd", width=0.8, dash="3 2")
        p.line(ws.q, -ws.band, color="#3182bd", width=0.8, dash="3 2")
        p.line(xlims[0], (0.0, 0.0), color="#888")
        p.points(ws.q, ws.deviation, color="#222", r=1.5)
    fig.save(path)


def plot_terms(effects, path) -> None:
    params = list(dict.fromkeys(e.param for e in effects))
    n = len(params)
    ncols = min(n, 2)
    nrows = (n + ncols - 1) // ncols
    fig = Figure(80 + 300 * ncols, 110 + 270 * nrows)
    groups = [[e for e in effects if e.param == p] for p in params]
    xlims = [(0.5, len(g) + 0.5) for g in groups]
    ylims = []
    for g in groups:
        vals = [v for e in g for v in (e.estimate, e.lower, e.upper) if v is not None]
        ylims.append((min(vals + [0.0]), max(vals + [0.0])))
    panels = fig.grid(nrows, ncols, xlims, ylims, [f"{p} (link scale)" for p in params],
                      "term", "estimate")
    for p, g in zip(panels, groups):
        p.line(p.xlim, (0.0, 0.0), color="#aaa", dash="2 2")
        for i, e in enumerate(g, 1):
            if e.has_interval:
                p.rect(i - 0.2, e.lower, 0.4, e.upper - e.lower, color="#fdd0a2", opacity=0.8,
                       stroke="#e6550d")
            p.points([i], [e.estimate], color="#a63603", r=3)
            p.text(i, p.ylim[0], e.label, size=8)
    fig.save(path)


def plot_histogram(data: ObservationTable, base: FittedModel, path) -> None:
    y = data.response
    top = int(y.max())
    ks = np.arange(top + 1)
    obs = np.bincount(y, minlength=top + 1) / len(y)
    params = tuple(np.full(top + 1, float(v[0])) for v in base.fitted_params(data.subset(np.arange(1))))
    fitted = pmf(base.spec.family, params, ks)
    fig = Figure(520, 380)
    p = fig.panel(60, 40, 430, 290, (-0.5, top + 0.5), (0.0, max(obs.max(), fitted.max())),
                  f"{data.response_name}: observed and fitted {base.spec.family.family_id}",
                  data.response_name, "relative frequency")
    for k, f in zip(ks, obs):
        if f > 0:
            p.rect(k - 0.4, 0.0, 0.8, f, color="#c6dbef", stroke="#6baed6")
    p.line(ks, fitted, color=PALETTE[1], width=1.2)
    p.points(ks, fitted, color=PALETTE[1], r=2.2)
    fig.save(path)


# ---------------------------------------------------------------------------

COMMANDS = {"fit": cmd_fit, "select": cmd_select, "compare": cmd_compare,
            "diagnose": cmd_diagnose, "describe": cmd_describe}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, DomainError, DesignError) as exc:
        parser.print_usage(sys.stderr)
        print(f"zicount: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"zicount: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RuntimeError as exc:
        print(f"zicount: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
