"""Command-line interface: ``gbp fit``, ``gbp coverage`` and ``gbp plot``.

Exit codes: 0 success, 2 validation or configuration error, 3 numerical or
fit failure, 4 I/O or parse error.
"""

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .adm import fit as fit_model
from .config import RunConfig
from .coverage import CoverageReport, resolve_spec, run_coverage
from .datasets import BUNDLED, bundled_path, dataset_from_table, parse_csv, read_csv
from .errors import (ConfigError, DataFormatError, GBPError, ValidationError)
from .models import ModelKind
from .plots import coverage_plot, interval_plot, shrinkage_plot
from .report import SCHEMA_VERSION, ReportDocument

EXIT_OK, EXIT_VALIDATION, EXIT_FIT, EXIT_IO = 0, 2, 3, 4


def fmt(v):
    """Table formatting: three significant digits, integers from 1000 up."""
    if v is None:
        return "NA"
    v = float(v)
    if not math.isfinite(v):
        return str(v)
    if abs(v) >= 1000:
        return f"{v:.0f}"
    return f"{v:.3g}"


def _csv_list(text, cast=str):
    if text is None:
        return None
    items = [t.strip() for t in text.split(",") if t.strip()]
    try:
        return [cast(t) for t in items]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None


def _load_table(path):
    if path.startswith("bundled:"):
        return parse_csv(bundled_path(path.split(":", 1)[1]).read_text(encoding="utf-8"))
    if not os.path.exists(path) and path in BUNDLED:
        return parse_csv(bundled_path(path).read_text(encoding="utf-8"))
    return read_csv(path)


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON: {exc.msg}", exc.lineno) from None


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def format_fit_table(doc):
    size_key = "se" if doc.model == ModelKind.GAUSSIAN.value else "n"
    cols = ["obs_mean", size_key, "prior_mean", "shrinkage", "low_intv", "post_mean",
            "upp_intv", "post_sd"]
    head = ["label"] + cols
    rows = [[g["label"]] + [fmt(g[c]) for c in cols] for g in (doc.groups[i] for i in doc.display_order)]
    mean = doc.mean_row
    rows.append(["Mean", ""] + [fmt(mean[c]) for c in cols[1:]])
    widths = [max(len(str(r[i])) for r in [head] + rows) for i in range(len(head))]
    lines = ["  ".join(str(c).rjust(w) for c, w in zip(r, widths)) for r in [head] + rows]
    h = doc.hyper
    lines.append("")
    lines.append(f"post.mode.alpha {fmt(h['post_mode_alpha'])}  post.sd.alpha {fmt(h['post_sd_alpha'])}"
                 f"  post.mode.{h['A_or_r_name']} {fmt(h['post_mode_A_or_r'])}")
    if doc.regression:
        lines.append("")
        lines.append(f"{'':>12}  {'estimate':>9}  {'se':>7}  {'z.val':>7}  {'p.val':>7}")
        for r in doc.regression:
            lines.append(f"{r['term']:>12}  {fmt(r['estimate']):>9}  {fmt(r['se']):>7}  "
                         f"{fmt(r['z_val']):>7}  {fmt(r['p_val']):>7}")
    if doc.sampler:
        s = doc.sampler
        lines.append("")
        lines.append(f"acceptance-rejection: {s['n_draws']} draws from {s['n_trials']} trials, "
                     f"acceptance rate {fmt(s['acceptance_rate'])}, refills {s['refill_rounds']}")
    for w in doc.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def format_coverage(cov, labels=None):
    lines = [f"{'group':>6}  {'coverageRB':>10}  {'se':>8}  {'coverageS':>9}  {'se':>8}"]
    for j in range(len(cov["coverageRB"])):
        label = labels[j] if labels else str(j + 1)
        lines.append(f"{label:>6}  {fmt(cov['coverageRB'][j]):>10}  {fmt(cov['se_coverageRB'][j]):>8}  "
                     f"{fmt(cov['coverageS'][j]):>9}  {fmt(cov['se_coverageS'][j]):>8}")
    lines.append(f"overall.coverageRB {fmt(cov['overall_coverageRB'])}  "
                 f"se {fmt(cov['se_overall_coverageRB'])}  (nsim used {cov['nsim_effective']})")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _data_options(args):
    path = os.path.abspath(args.data) if os.path.exists(args.data) else args.data
    return {"path": path, "prior_mean": args.prior_mean,
            "covariates": _csv_list(args.covariates) or [], "intercept": not args.no_intercept}


def _dataset(opts, model):
    table = _load_table(opts["path"])
    pm = opts.get("prior_mean")
    if pm is not None and not str(pm).startswith("@"):
        try:
            pm = float(pm)
        except ValueError:
            raise ConfigError(f"--prior-mean must be a number or @column, got {pm!r}") from None
    return dataset_from_table(table, model, prior_mean=pm, covariates=opts["covariates"],
                              intercept=opts["intercept"])


def cmd_fit(args):
    config = RunConfig(model=args.model, confidence=args.confidence, intercept=not args.no_intercept,
                       normal_ci=args.normal_ci, n_ar=args.n_ar, ar_factor=args.ar_factor,
                       trial_scale=args.trial_scale, t=args.t, u=args.u, seed=args.seed,
                       sort=not args.no_sort)
    opts = _data_options(args)
    d = _dataset(opts, args.model)
    t0 = time.perf_counter()
    res = fit_model(d, config)
    elapsed = time.perf_counter() - t0
    doc = ReportDocument.from_fit(res, opts)
    if args.out:
        _write(args.out, doc.dumps())
    sys.stdout.write(format_fit_table(doc))
    print(f"runtime {elapsed:.3f} s", file=sys.stderr)
    return EXIT_OK


def _refit_from_report(doc, data_path=None):
    opts = dict(doc.provenance["data"])
    if data_path:
        opts["path"] = data_path
    if not opts.get("path"):
        raise ConfigError("no data path in the fit report; pass --data")
    config = RunConfig.from_dict(doc.provenance["config"])
    d = _dataset(opts, doc.model)
    res = fit_model(d, config)
    if not math.isclose(res.alpha_hat, doc.hyper["post_mode_alpha"], rel_tol=1e-9, abs_tol=1e-9):
        raise ConfigError("the data do not reproduce the fit report (alpha mode differs)")
    return res


def cmd_coverage(args):
    doc = ReportDocument.from_dict(_read_json(args.fit))
    res = _refit_from_report(doc, args.data)
    reg = _csv_list(args.reg_coef, float)
    pm = None
    if args.prior_mean is not None:
        pm = _csv_list(args.prior_mean, float)
        pm = pm[0] if len(pm) == 1 else pm
    if args.nsim < 1:
        raise ConfigError(f"--nsim must be a positive integer, got {args.nsim}")
    spec = resolve_spec(res, A_or_r=args.A_or_r, reg_coef=reg, prior_mean=pm, nsim=args.nsim,
                        seed=args.seed)
    t0 = time.perf_counter()
    cov = run_coverage(res, spec, threads=args.threads)
    elapsed = time.perf_counter() - t0
    data = {"schema_version": SCHEMA_VERSION, "kind": "coverage", "model": doc.model,
            **cov.to_dict()}
    if args.out:
        _write(args.out, json.dumps(data, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(format_coverage(data, [g["label"] for g in doc.groups]))
    print(f"runtime {elapsed:.3f} s", file=sys.stderr)
    return EXIT_OK


def cmd_plot(args):
    if args.kind == "coverage":
        if not args.coverage:
            raise ConfigError("--kind coverage needs --coverage PATH")
        cov = _read_json(args.coverage)
        if cov.get("kind") != "coverage":
            raise ConfigError(f"{args.coverage} is not a coverage report")
        CoverageReport.from_dict(cov)
        svg = coverage_plot(cov)
    else:
        if not args.fit:
            raise ConfigError(f"--kind {args.kind} needs --fit PATH")
        if args.coverage:
            raise ConfigError(f"--coverage only applies to --kind coverage, not {args.kind}")
        doc = ReportDocument.from_dict(_read_json(args.fit))
        svg = shrinkage_plot(doc) if args.kind == "shrinkage" else interval_plot(doc, args.sort == "on")
    _write(args.out, svg)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="gbp", description="Two-level conjugate hierarchical models "
                                "fitted by adjustment for density maximization.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model to a CSV dataset")
    f.add_argument("--model", required=True, choices=[k.value for k in ModelKind])
    f.add_argument("--data", required=True,
                   help="CSV path, or a bundled dataset name (hospital, schools, baseball)")
    f.add_argument("--confidence", type=float, default=0.95)
    f.add_argument("--prior-mean", help="known prior mean: a number or @column")
    f.add_argument("--covariates", help="comma-separated covariate column names")
    f.add_argument("--no-intercept", action="store_true")
    f.add_argument("--normal-ci", action="store_true", help="Gaussian: Normal instead of skew-normal intervals")
    f.add_argument("--n-ar", type=int, default=0, help="Binomial: number of acceptance-rejection draws")
    f.add_argument("--ar-factor", type=int, default=4)
    f.add_argument("--trial-scale", type=float, default=1.3)
    f.add_argument("--t", type=float, default=0.0)
    f.add_argument("--u", type=float, default=1.0)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--no-sort", action="store_true", help="print groups in input order")
    f.add_argument("--out", help="write the JSON report here")
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("coverage", help="frequency method checking of a fit")
    c.add_argument("--fit", required=True, help="JSON report written by `gbp fit --out`")
    c.add_argument("--data", help="CSV path (defaults to the one recorded in the report)")
    c.add_argument("--nsim", type=int, default=1000)
    c.add_argument("--A-or-r", dest="A_or_r", type=float)
    c.add_argument("--reg-coef", help="comma-separated coefficients, intercept first")
    c.add_argument("--prior-mean", help="known prior mean value(s), comma-separated")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--threads", type=int, help="worker processes (default: GBP_THREADS or CPU count)")
    c.add_argument("--out")
    c.set_defaults(func=cmd_coverage)

    g = sub.add_parser("plot", help="write an SVG figure")
    g.add_argument("--fit")
    g.add_argument("--coverage")
    g.add_argument("--kind", required=True, choices=["shrinkage", "interval", "coverage"])
    g.add_argument("--out", required=True)
    g.add_argument("--sort", choices=["on", "off"], default="on")
    g.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (GBPError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except ValueError as exc:
        # malformed report contents
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

if __name__ == "__main__":
    sys.exit(main())
