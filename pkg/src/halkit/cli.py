"""Command-line interface.

Every command writes ``<out>.config.json`` next to its main output holding
the command, package version, parameters (including the argument vector),
seed and a timestamp.  ``halkit rerun <config>`` replays one.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure
(including fits that did not certify).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import build_basis
from .data import (ensure_parent, read_density_csv, read_regression_csv, read_survival_csv,
                   write_csv, write_density_csv, write_regression_csv, write_survival_csv)
from .density import conditional_cdf, density_eval, fit_density
from .errors import HalkitError, NumericalError
from .harness import (TRUTHS, DensitySpec, SurvivalParams, basis_count_study, gen_density_data,
                      gen_regression, gen_survival_study, run_parametrization_comparison,
                      run_rate_study)
from .model_select import DEFAULT_GRID, cv_select_M
from .regression import fit_regression
from .serialize import dumps, load_model, save_model
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, STEP_RULES
from .sieve import ProductTarget, project_L2, step_target
from .survival import fit_hazard, survival_curve

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    if text is None or text.strip() == "":
        return []
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _grid(text: str):
    return None if text == "auto" else _floats(text)


def _budget(text: str):
    if text == "auto":
        return "auto"
    try:
        m = float(text)
    except ValueError:
        raise UsageError(f"--m must be a number or 'auto', got {text!r}") from None
    if m < 0:
        raise UsageError("--m must be nonnegative")
    return m


def _pick_m(args, data, task):
    m = _budget(args.m)
    if m != "auto":
        return m, None
    cv = cv_select_M(data, task, None, args.k, args.seed)
    return cv.selected_M, cv


def _solver_kw(args) -> dict:
    if args.max_iter < 1 or not args.tol > 0:
        raise UsageError("--max-iter must be positive and --tol must be > 0")
    return {"tol": args.tol, "max_iter": args.max_iter, "step_rule": args.step_rule}


def _uncertified(report) -> bool:
    if report is not None and not report.converged:
        print(f"error: fit did not certify (fw_gap {report.fw_gap:.3g}); output written anyway", file=sys.stderr)
        return True
    return False


# --- commands -------------------------------------------------------------------

def cmd_fit_regression(args):
    data = read_regression_csv(args.input)
    M, cv = _pick_m(args, data, "regression")
    model = fit_regression(data, M, rescale=args.rescale, **_solver_kw(args))
    save_model(model, ensure_parent(args.out), "regression")
    return EXIT_NUMERICAL if _uncertified(model.report) else EXIT_OK


def cmd_fit_hazard(args):
    data = read_survival_csv(args.input)
    M, cv = _pick_m(args, data, "hazard")
    model = fit_hazard(data, M, **_solver_kw(args))
    save_model(model, ensure_parent(args.out))
    return EXIT_NUMERICAL if _uncertified(model.report) else EXIT_OK


def cmd_fit_density(args):
    data = read_density_csv(args.input)
    M, cv = _pick_m(args, data, "density")
    model = fit_density(data, M, **_solver_kw(args))
    save_model(model, ensure_parent(args.out))
    return EXIT_NUMERICAL if _uncertified(model.report) else EXIT_OK


_READERS = {"regression": read_regression_csv, "hazard": read_survival_csv, "density": read_density_csv}


def cmd_cv(args):
    data = _READERS[args.task](args.input)
    report = cv_select_M(data, args.task, _grid(args.grid), args.k, args.seed)
    ensure_parent(args.out).write_text(report.to_json())
    return EXIT_OK


def _parse_knots(text: str) -> np.ndarray:
    rows = [_floats(part) for part in text.split(";") if part.strip()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise UsageError("--knots takes points separated by ';' with ',' between coordinates")
    return np.array(rows)


def cmd_project(args):
    knots = _parse_knots(args.knots)
    d = knots.shape[1]
    name, _, rest = args.target.partition(":")
    if name == "step":
        knot = _floats(rest)
        if len(knot) != d:
            raise UsageError(f"step target needs a {d}-dimensional knot")
        target = step_target(knot)
    elif name in ("linear", "product"):
        if name == "linear" and d != 1:
            raise UsageError("the linear target is one-dimensional; use product for d > 1")
        target = ProductTarget(d)
    else:
        raise UsageError(f"unknown target {args.target!r}")
    model = project_L2(target, build_basis(knots), args.m, **_solver_kw(args))
    save_model(model, ensure_parent(args.out), "projection")
    return EXIT_NUMERICAL if _uncertified(model.report) else EXIT_OK


def cmd_survival_curve(args):
    model = load_model(args.model)
    t = np.linspace(0.0, 1.0, args.grid)
    s = survival_curve(model, _floats(args.w), t)
    write_csv(ensure_parent(args.out), ["t", "S"], [t, s])
    return EXIT_OK


def cmd_density_eval(args):
    model = load_model(args.model)
    u = np.linspace(0.0, 1.0, args.grid)
    w = _floats(args.w)
    write_csv(ensure_parent(args.out), ["u", "p", "cdf"],
              [u, density_eval(model, u, w), conditional_cdf(model, u, w)])
    return EXIT_OK


def cmd_simulate(args):
    out = ensure_parent(args.out)
    if args.kind == "survival":
        params = SurvivalParams(args.base_rate, args.young_ratio, args.old_ratio, args.censor_rate)
        write_survival_csv(out, gen_survival_study(args.n, args.seed, params))
    elif args.kind == "density":
        write_density_csv(out, gen_density_data(args.n, args.seed, DensitySpec.parse(args.spec)))
    else:
        write_regression_csv(out, gen_regression(args.n, args.seed, TRUTHS[args.truth](), args.noise_var))
    return EXIT_OK


def _write_report(report, out):
    out = ensure_parent(out)
    report.write_csv(out)
    out.with_suffix(".json").write_text(report.to_json())


def cmd_rate_study(args):
    if args.d != 1:
        raise UsageError("the rate study is implemented for d = 1")
    report = run_rate_study(args.task, _ints(args.n), args.reps, args.seed, truth=args.truth,
                            M=args.m, noise_var=args.noise_var, tol=args.tol)
    _write_report(report, args.out)
    return EXIT_OK


def cmd_basis_count_study(args):
    report = basis_count_study(_ints(args.d), _ints(args.n), args.reps, args.seed)
    _write_report(report, args.out)
    return EXIT_OK


def cmd_compare(args):
    report = run_parametrization_comparison(args.n, args.seed, DensitySpec.parse(args.spec),
                                            grid=_grid(args.grid), K=args.k)
    _write_report(report, args.out)
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="halkit", description="Highly adaptive lasso fits and studies.")
    p.add_argument("--version", action="version", version=f"halkit {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver warnings")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=0):
        sp.add_argument("--out", required=True)
        sp.add_argument("--seed", type=int, default=seed)

    def fit_opts(sp):
        sp.add_argument("--input", required=True)
        sp.add_argument("--m", default="auto", help="variation budget, or 'auto' for cross-validation")
        sp.add_argument("--k", type=int, default=5, help="folds when --m auto")
        solver_opts(sp)
        common(sp)

    def solver_opts(sp):
        sp.add_argument("--tol", type=float, default=DEFAULT_TOL)
        sp.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
        sp.add_argument("--step-rule", choices=list(STEP_RULES), default="apg")

    sp = sub.add_parser("fit-regression", help="least-squares HAL fit")
    fit_opts(sp)
    sp.add_argument("--rescale", choices=["auto", "always", "never"], default="auto")
    sp.set_defaults(func=cmd_fit_regression)

    sp = sub.add_parser("fit-hazard", help="conditional log-hazard fit from censored data")
    fit_opts(sp)
    sp.set_defaults(func=cmd_fit_hazard)

    sp = sub.add_parser("fit-density", help="conditional density fit")
    fit_opts(sp)
    sp.set_defaults(func=cmd_fit_density)

    sp = sub.add_parser("cv", help="cross-validate the variation budget")
    sp.add_argument("--task", choices=["regression", "hazard", "density"], required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--grid", default="auto", help="comma-separated increasing M values, or 'auto'")
    common(sp)
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("project", help="L2 projection of a target onto the sieve spanned by knots")
    sp.add_argument("--target", required=True, help="step:<knot>, linear or product")
    sp.add_argument("--knots", required=True, help="points separated by ';', coordinates by ','")
    sp.add_argument("--m", type=float, required=True)
    solver_opts(sp)
    common(sp)
    sp.set_defaults(func=cmd_project)

    sp = sub.add_parser("survival-curve", help="S(t|w) of a fitted hazard on a uniform grid")
    sp.add_argument("--model", required=True)
    sp.add_argument("--w", default="", help="comma-separated covariates")
    sp.add_argument("--grid", type=int, default=101)
    common(sp)
    sp.set_defaults(func=cmd_survival_curve)

    sp = sub.add_parser("density-eval", help="p(u|w) and its CDF on a uniform grid")
    sp.add_argument("--model", required=True)
    sp.add_argument("--w", default="")
    sp.add_argument("--grid", type=int, default=201)
    common(sp)
    sp.set_defaults(func=cmd_density_eval)

    sp = sub.add_parser("simulate", help="draw a dataset from a built-in generator")
    sp.add_argument("kind", choices=["survival", "density", "regression"])
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--base-rate", type=float, default=1.0)
    sp.add_argument("--young-ratio", type=float, default=0.5)
    sp.add_argument("--old-ratio", type=float, default=2.0)
    sp.add_argument("--censor-rate", type=float, default=0.3)
    sp.add_argument("--spec", default="uniform", help="uniform or mixture[:a,b,weight]")
    sp.add_argument("--truth", choices=sorted(TRUTHS), default="step")
    sp.add_argument("--noise-var", type=float, default=0.25)
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("rate-study", help="error versus n and its log-log slope")
    sp.add_argument("--task", choices=["regression", "sieve"], default="regression")
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--n", default="125,250,500,1000,2000,4000")
    sp.add_argument("--reps", type=int, default=20)
    sp.add_argument("--m", type=float, default=2.0)
    sp.add_argument("--truth", choices=sorted(TRUTHS), default="step")
    sp.add_argument("--noise-var", type=float, default=0.25)
    sp.add_argument("--tol", type=float, default=1e-8)
    common(sp)
    sp.set_defaults(func=cmd_rate_study)

    sp = sub.add_parser("basis-count-study", help="ERM versus HAL basis sizes")
    sp.add_argument("--d", default="2")
    sp.add_argument("--n", default="64,128,256,512")
    sp.add_argument("--reps", type=int, default=20)
    common(sp, seed=7)
    sp.set_defaults(func=cmd_basis_count_study)

    sp = sub.add_parser("compare-parametrizations", help="direct density fit versus hazard-induced density")
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--spec", default="uniform")
    sp.add_argument("--grid", default="auto")
    sp.add_argument("--k", type=int, default=5)
    common(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("rerun", help="replay a command from its config echo")
    sp.add_argument("config")
    sp.set_defaults(func=None)
    return p


def _echo(args, argv) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    params["argv"] = list(argv)
    doc = {
        "command": args.command,
        "version": __version__,
        "params": params,
        "seed": getattr(args, "seed", None),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    if args.command == "cv" or getattr(args, "m", None) == "auto":
        doc["params"]["default_grid"] = list(DEFAULT_GRID)
    Path(str(args.out) + ".config.json").write_text(dumps(doc))


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "rerun":
        try:
            doc = json.loads(Path(args.config).read_text())
            return main(doc["params"]["argv"])
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: cannot replay {args.config}: {exc}", file=sys.stderr)
            return EXIT_USAGE
    try:
        code = args.func(args)
        _echo(args, argv)
        return code
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, HalkitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
