"""Command-line interface: ``splitlogit <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
(e.g. the solver did not converge; outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from typing import List, Optional

import numpy as np

from . import __version__
from .core import Dataset, HyperParams, ensemble_predict_proba
from .diversity import diversity_report
from .io import DataError, ingest, load_model, model_to_dict, parse_labels, read_table, save_model
from .simulation import ScenarioConfig, run_tradeoff_study, write_tradeoff_csv
from .solver import ConvergenceWarning, fit, solution_path
from .tuning import NoSignalError, alternating_search, cv_loss, lambda_s_max, make_grid

log = logging.getLogger("splitlogit")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
COEF_FMT = ".12g"
PROB_FMT = ".10g"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

class _Output:
    """``--out`` path or stdout."""

    def __init__(self, path):
        self.path = path

    def __enter__(self):
        self.fh = open(self.path, "w", newline="") if self.path not in (None, "-") else sys.stdout
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not sys.stdout:
            self.fh.close()
        else:
            self.fh.flush()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_key_values(record: dict, fh) -> None:
    for k, v in record.items():
        fh.write(f"{k}={_fmt(v)}\n")


# ---------------------------------------------------------------------------
# Argument groups
# ---------------------------------------------------------------------------

def _add_data(p, label=True):
    p.add_argument("--data", required=True, help="delimited text file with a header row")
    if label:
        p.add_argument("--label", default="y", help="name of the label column (default: y)")
        p.add_argument("--positive-label", default=None,
                       help="label value mapped to +1 (default: labels are 0/1 or -1/+1)")
    p.add_argument("--delimiter", default=",", help="field delimiter (default: ,)")


def _add_model_opts(p, tuning=True):
    p.add_argument("--alpha", type=float, default=0.75,
                   help="elastic-net mixing: 1 is pure lasso, 0 pure ridge (default: 0.75)")
    p.add_argument("-G", "--groups", type=int, default=10, help="number of models (default: 10)")
    p.add_argument("--tol", type=float, default=HyperParams.tol,
                   help=f"convergence tolerance on squared changes (default: {HyperParams.tol:g})")
    p.add_argument("--max-sweeps", type=int, default=HyperParams.max_sweeps,
                   help=f"sweep limit per fit (default: {HyperParams.max_sweeps})")
    if tuning:
        p.add_argument("--lambda-sparsity", type=float, default=None,
                       help="sparsity penalty; tuned by cross-validation when omitted")
        p.add_argument("--lambda-diversity", type=float, default=None,
                       help="diversity penalty; tuned by cross-validation when omitted")
        p.add_argument("--cv-folds", type=int, default=10, help="number of CV folds (default: 10)")
        p.add_argument("--grid-size-sparsity", type=int, default=100,
                       help="points in the sparsity grid (default: 100)")
        p.add_argument("--grid-size-diversity", type=int, default=100,
                       help="points in the diversity grid, before 0 is appended (default: 100)")
        p.add_argument("--seed", type=int, default=0, help="seed for the CV fold split (default: 0)")
        p.add_argument("--threads", type=int, default=1, help="worker threads (default: 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="splitlogit",
                     description="Split logistic regression: sparse, diverse ensembles of logistic models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit an ensemble and write a model file")
    _add_data(p)
    _add_model_opts(p)
    p.add_argument("--cv", action="store_true",
                   help="tune the penalties by cross-validation (implied when one is omitted)")
    p.add_argument("--cv-report", default=None, help="also write the CV points CSV here")
    p.add_argument("--out", default=None, help="model file (default: stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", help="cross-validate; tunes any penalty not given")
    _add_data(p)
    _add_model_opts(p)
    p.add_argument("--out", default=None, help="CSV of every grid point visited (default: stdout)")
    p.add_argument("--summary", default=None, help="key=value summary file (default: stderr)")
    p.add_argument("--model-out", default=None, help="also write the refit model file here")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", help="ensemble probabilities for new rows")
    p.add_argument("--model", required=True, help="model file written by 'fit'")
    _add_data(p, label=False)
    p.add_argument("--label", default=None, help="label column to ignore if present")
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("path", help="coefficient paths over the sparsity grid")
    _add_data(p)
    _add_model_opts(p, tuning=False)
    p.add_argument("--lambda-diversity", type=float, default=0.0,
                   help="fixed diversity penalty (default: 0)")
    p.add_argument("--grid-size-sparsity", type=int, default=100,
                   help="points in the sparsity grid (default: 100)")
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("diversity", help="diversity measures of a model on labeled data")
    p.add_argument("--model", required=True, help="model file written by 'fit'")
    _add_data(p)
    p.add_argument("--out", default=None, help="key=value report (default: stdout)")
    p.set_defaults(func=cmd_diversity)

    p = sub.add_parser("simulate", help="accuracy/diversity trade-off study on synthetic data")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3), default=3)
    p.add_argument("-n", type=int, default=50, help="training size (default: 50)")
    p.add_argument("-p", type=int, default=1500, help="number of predictors (default: 1500)")
    p.add_argument("--zeta", type=float, default=0.2, help="active fraction (default: 0.2)")
    p.add_argument("--rho", type=float, default=None, help="scenario 1 common correlation")
    p.add_argument("--rho1", type=float, default=0.2, help="between-group correlation (default: 0.2)")
    p.add_argument("--rho2", type=float, default=0.5, help="within-group correlation (default: 0.5)")
    p.add_argument("--pi1", type=float, default=0.4, help="target P(Y=1) (default: 0.4)")
    p.add_argument("--block-size", type=int, default=25, help="scenario 3 block size (default: 25)")
    p.add_argument("--groups-list", default="2,5,10,25",
                   help="comma-separated numbers of models (default: 2,5,10,25)")
    p.add_argument("--replications", type=int, default=10, help="replications (default: 10)")
    p.add_argument("--alpha", type=float, default=0.75)
    p.add_argument("--cv-folds", type=int, default=10)
    p.add_argument("--grid-size-sparsity", type=int, default=100)
    p.add_argument("--grid-size-diversity", type=int, default=100)
    p.add_argument("--tol", type=float, default=HyperParams.tol)
    p.add_argument("--max-sweeps", type=int, default=HyperParams.max_sweeps)
    p.add_argument("--seed", type=int, default=0, help="replication r uses seed + r (default: 0)")
    p.add_argument("--threads", type=int, default=1, help="replications run in parallel")
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_simulate)
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _load(args) -> Dataset:
    return ingest(args.data, args.label, args.positive_label, args.delimiter)


def _check_common(args):
    if hasattr(args, "groups") and args.groups < 1:
        raise UsageError("--groups must be at least 1")
    if hasattr(args, "alpha") and not 0.0 <= args.alpha <= 1.0:
        raise UsageError("--alpha must lie in [0, 1]")
    for name in ("lambda_sparsity", "lambda_diversity"):
        v = getattr(args, name, None)
        if v is not None and v < 0:
            raise UsageError(f"--{name.replace('_', '-')} must be nonnegative")
    if getattr(args, "cv_folds", 2) < 2:
        raise UsageError("--cv-folds must be at least 2")
    if getattr(args, "threads", 1) < 1:
        raise UsageError("--threads must be at least 1")
    if getattr(args, "tol", 1.0) <= 0 or getattr(args, "max_sweeps", 1) < 1:
        raise UsageError("--tol must be positive and --max-sweeps at least 1")


def _search(args, data):
    return alternating_search(data, alpha=args.alpha, g=args.groups, k=args.cv_folds,
                              l_s=args.grid_size_sparsity, l_d=args.grid_size_diversity,
                              seed=args.seed, threads=args.threads, tol=args.tol,
                              max_sweeps=args.max_sweeps, lambda_s=args.lambda_sparsity,
                              lambda_d=args.lambda_diversity)


def _write_cv_points(report, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["pass", "kind", "lambda_sparsity", "lambda_diversity", "cv_loss", "cv_se", "selected"])
    for pt in report.points:
        sel = pt.lambda_s == report.lambda_s and pt.lambda_d == report.lambda_d
        w.writerow([pt.pass_index, pt.kind, repr(pt.lambda_s), repr(pt.lambda_d),
                    repr(pt.cv_loss), repr(pt.cv_se), int(sel)])


def cmd_fit(args) -> int:
    both = args.lambda_sparsity is not None and args.lambda_diversity is not None
    if both and args.cv:
        raise UsageError("--cv conflicts with giving both --lambda-sparsity and --lambda-diversity")
    if args.groups == 1 and args.lambda_sparsity is not None and args.lambda_diversity is None:
        args.lambda_diversity = 0.0
        both = True
    data = _load(args)
    if both:
        hp = HyperParams(alpha=args.alpha, lambda_s=args.lambda_sparsity,
                         lambda_d=args.lambda_diversity, g=args.groups, tol=args.tol,
                         max_sweeps=args.max_sweeps)
        result = fit(data, hp)
    else:
        report, result = _search(args, data)
        if args.cv_report:
            with open(args.cv_report, "w", newline="") as fh:
                _write_cv_points(report, fh)
        log.info("selected lambda_sparsity=%g lambda_diversity=%g (cv loss %.6g)",
                 report.lambda_s, report.lambda_d, report.cv_loss)
    if args.out in (None, "-"):
        json.dump(model_to_dict(result, data.col_means, data.col_scales, data.feature_names),
                  sys.stdout, indent=1)
        sys.stdout.write("\n")
    else:
        save_model(args.out, result, data)
    return EXIT_OK if result.converged else EXIT_NUMERIC


def cmd_cv(args) -> int:
    data = _load(args)
    if args.lambda_sparsity is not None and args.lambda_diversity is not None:
        hp = HyperParams(alpha=args.alpha, lambda_s=args.lambda_sparsity,
                         lambda_d=args.lambda_diversity, g=args.groups, tol=args.tol,
                         max_sweeps=args.max_sweeps)
        mean, se = cv_loss(data, hp, args.cv_folds, seed=args.seed, threads=args.threads)
        with _Output(args.out) as fh:
            write_key_values({"alpha": hp.alpha, "groups": hp.g, "folds": args.cv_folds,
                              "lambda_sparsity": hp.lambda_s, "lambda_diversity": hp.lambda_d,
                              "cv_loss": mean, "cv_se": se}, fh)
        return EXIT_OK
    report, result = _search(args, data)
    with _Output(args.out) as fh:
        _write_cv_points(report, fh)
    summary = report.summary()
    summary["fold_assignment"] = " ".join(str(int(f)) for f in report.fold_assignment)
    if args.summary:
        with open(args.summary, "w") as fh:
            write_key_values(summary, fh)
    else:
        write_key_values(summary, sys.stderr)
    if args.model_out:
        save_model(args.model_out, result, data)
    return EXIT_OK if result.converged else EXIT_NUMERIC


def _aligned_predictors(tab, names):
    index = {nm: j for j, nm in enumerate(tab.names)}
    missing = [nm for nm in names if nm not in index]
    if missing:
        raise DataError(f"data lacks model predictors: {missing[:10]}")
    return tab.x[:, [index[nm] for nm in names]]


def cmd_predict(args) -> int:
    model, names, _, _ = load_model(args.model)
    tab = read_table(args.data, args.label, args.delimiter, require_label=False)
    x = _aligned_predictors(tab, names)
    prob = np.atleast_1d(ensemble_predict_proba(model, x, original=True))
    with _Output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "probability", "class"])
        for i, pr in enumerate(prob, start=1):
            w.writerow([i, format(float(pr), PROB_FMT), 1 if pr >= 0.5 else -1])
    return EXIT_OK


def path_rows(fits, names):
    """Long-format nonzero path entries, ordered by (descending lambda_s,
    model with 0 for the ensemble average, variable index)."""
    rows = []
    for f in fits:
        lam = f.hyper.lambda_s
        mats = [f.ensemble_coefs(True)] + [f.coefs_original[:, g] for g in range(f.g)]
        for m, col in enumerate(mats):
            for j in np.flatnonzero(col):
                rows.append((lam, m, int(j), names[j], float(col[j])))
    rows.sort(key=lambda r: (-r[0], r[1], r[2]))
    return rows


def cmd_path(args) -> int:
    data = _load(args)
    if args.groups == 1 and args.lambda_diversity:
        raise UsageError("a diversity penalty needs at least two models")
    lmax = lambda_s_max(data, args.alpha, args.groups, args.lambda_diversity, args.tol,
                        args.max_sweeps)
    grid = make_grid("sparsity", args.grid_size_sparsity, lmax, data.n, data.p)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        fits = solution_path(data, args.alpha, args.lambda_diversity, args.groups, grid.values,
                             tol=args.tol, max_sweeps=args.max_sweeps)
    for wmsg in caught:
        log.warning("%s", wmsg.message)
    with _Output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda_sparsity", "model", "variable", "coefficient"])
        for lam, m, _, name, v in path_rows(fits, data.feature_names):
            w.writerow([format(lam, COEF_FMT), m, name, format(v, COEF_FMT)])
    return EXIT_OK if all(f.converged for f in fits) else EXIT_NUMERIC


def cmd_diversity(args) -> int:
    model, names, _, _ = load_model(args.model)
    tab = read_table(args.data, args.label, args.delimiter)
    y = parse_labels(tab.labels, args.positive_label)
    x = _aligned_predictors(tab, names)
    if model.g < 2:
        raise UsageError("diversity measures need a model with at least two groups")
    rep = diversity_report(model, x, y)
    with _Output(args.out) as fh:
        write_key_values(rep.to_record(), fh)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        g_list = [int(v) for v in args.groups_list.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--groups-list must be comma-separated integers, got {args.groups_list!r}")
    if not g_list or min(g_list) < 2:
        raise UsageError("--groups-list entries must be at least 2")
    rho1, rho2 = args.rho1, args.rho2
    if args.scenario == 1:
        rho1 = rho2 = args.rho if args.rho is not None else 0.5
    elif args.rho is not None:
        raise UsageError("--rho applies to scenario 1 only")
    try:
        cfg = ScenarioConfig(scenario=args.scenario, n=args.n, p=args.p, zeta=args.zeta,
                             rho1=rho1, rho2=rho2, pi1=args.pi1, block_size=args.block_size,
                             seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    rows = run_tradeoff_study(cfg, g_list, args.replications, args.seed, threads=args.threads,
                              alpha=args.alpha, k=args.cv_folds, l_s=args.grid_size_sparsity,
                              l_d=args.grid_size_diversity, tol=args.tol,
                              max_sweeps=args.max_sweeps)
    with _Output(args.out) as fh:
        write_tradeoff_csv(rows, fh)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s: %(message)s")
    try:
        _check_common(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"splitlogit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, NoSignalError) as exc:
        print(f"splitlogit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"splitlogit: invalid input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, ArithmeticError, RuntimeError) as exc:
        print(f"splitlogit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
