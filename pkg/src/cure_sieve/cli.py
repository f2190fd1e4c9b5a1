"""Command-line entry point: ``cure-sieve {fit,simulate,check}``.

Exit codes: 0 success, 1 input error, 2 non-convergence, 3 oracle failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checks
from .errors import ConfigurationError, CureSieveError, DataError, InferenceError, McError
from .inference import beta_ci, cumhaz_increment, observed_information, score_matrix
from .likelihood import Constraints, cum_haz, hazard
from .optimizer import FitConfig, fit
from .records import InputError, read_dataset
from .simulate import DEFAULT_GRID, Scenario, curve_table, run_replications, summarize, write_curve_csv
from .splines import build_knots

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_ORACLE = 0, 1, 2, 3
HAZARD_GRID_POINTS = 201

logger = logging.getLogger("cure_sieve")


def _fmt(x: float) -> str:
    return repr(float(x))


def _functional(text: str) -> tuple[float, float]:
    try:
        q, t = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'q,t', got {text!r}") from None
    if not q <= t:
        raise argparse.ArgumentTypeError(f"functional needs q <= t, got {text!r}")
    return q, t


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_fit(args) -> int:
    try:
        data, names = read_dataset(args.input, args.tau)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for q, t in args.functional:
        if not (0 <= q and t <= args.tau):
            print(f"error: functional ({q:g}, {t:g}) must lie within [0, {args.tau:g}]", file=sys.stderr)
            return EXIT_INPUT
    if not np.any(data.exact_mask):
        print(
            "error: the data contain no exactly observed events; the baseline hazard is not identifiable "
            "from interval- and right-censored records alone, so the model cannot be fitted",
            file=sys.stderr,
        )
        return EXIT_INPUT

    try:
        times = data.knot_times()
        ks = build_knots(times, times.size, args.order, args.tau)
        cons = Constraints.default(data, ks, a0=args.a0, b0=args.b0, c0=args.c0)
        res = fit(data, ks, cons, FitConfig(seed=args.seed), warn=False)
    except (ConfigurationError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ridge = None
    try:
        blocks = observed_information(score_matrix(res, data))
        ridge = blocks.ridge_used
        rows = beta_ci(blocks, res, args.level)
        _write_csv(
            out / "estimates.csv",
            ["covariate", "estimate", "se", "p_value"],
            [[name, _fmt(r.estimate), _fmt(r.se), _fmt(r.p_value)] for name, r in zip(names, rows)],
        )
        funcs = []
        for q, t in args.functional:
            est, se = cumhaz_increment(res, blocks, q, t)
            funcs.append([_fmt(q), _fmt(t), _fmt(est), _fmt(se)])
        _write_csv(out / "functionals.csv", ["q", "t", "estimate", "se"], funcs)
    except InferenceError as exc:
        print(f"error: standard errors unavailable: {exc}", file=sys.stderr)
        inference_failed = True
    else:
        inference_failed = False

    grid = np.linspace(0.0, args.tau, HAZARD_GRID_POINTS)
    _write_csv(
        out / "hazard.csv",
        ["t", "hazard", "cumulative_hazard"],
        [[_fmt(t), _fmt(h), _fmt(c)] for t, h, c in zip(grid, hazard(res.params, ks, grid), cum_haz(res.params, ks, grid))],
    )
    summary = {
        "loglik": res.loglik,
        "iterations": res.iterations,
        "converged": res.converged,
        "grad_norm": res.grad_norm,
        "n": data.n,
        "counts": {
            "exact": int(data.exact_mask.sum()),
            "interval": int(data.interval_mask.sum()),
            "right": int(data.right_mask.sum()),
        },
        "covariates": names,
        "beta": res.params.beta.tolist(),
        "eta": res.params.eta.tolist(),
        "knots": {"order": ks.order, "tau": ks.tau, "interior": list(ks.interior), "full": ks.full.tolist()},
        "constraints": {
            "a0": cons.a0,
            "b0": cons.b0,
            "c0": cons.c0,
            "sum_cap": cons.sum_cap,
            "m": cons.m.tolist(),
        },
        "active_set": list(res.active_set),
        "ridge_used": ridge,
    }
    with open(out / "fit.json", "w", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if not inference_failed:
        print(f"{'covariate':<20}{'estimate':>10}{'se':>10}{'p_value':>10}")
        for name, r in zip(names, rows):
            print(f"{name:<20}{r.estimate:>10.3f}{r.se:>10.3f}{r.p_value:>10.3f}")
    if not res.converged:
        print(f"warning: optimizer did not converge (projected gradient {res.grad_norm:.3g})", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_INPUT if inference_failed else EXIT_OK


def cmd_simulate(args) -> int:
    try:
        sc = Scenario(args.scenario, args.trunc, args.n)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    grid = DEFAULT_GRID
    results = run_replications(sc, args.reps, args.seed, FitConfig(), grid=grid)
    try:
        summary = summarize(sc, results)
        curve = curve_table(sc, results, grid)
    except McError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary.to_csv(out / "mc_summary.csv")
    write_curve_csv(out / "hazard_curve.csv", curve)
    print(summary.format_table())
    return EXIT_OK


def cmd_check(args) -> int:
    results = checks.run_all(n_draws=args.draws, seed=args.seed)
    failed = []
    for r in results:
        print(r.line())
        if not r.passed:
            failed.append({"name": r.name, "detail": r.detail})
    if failed:
        print(json.dumps(failed, indent=2, default=float))
        return EXIT_ORACLE
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors map to the input-error exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cure-sieve", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit the cure model to a subject CSV")
    p.add_argument("--input", required=True, help="CSV with entry,status,time1,time2,<covariates>")
    p.add_argument("--tau", type=float, required=True, help="cure threshold (never inferred from data)")
    p.add_argument("--order", type=int, default=3, help="B-/M-spline order (default 3)")
    p.add_argument("--functional", type=_functional, action="append", default=[], metavar="Q,T",
                   help="report Lambda(T) - Lambda(Q); repeatable")
    p.add_argument("--a0", type=float, default=None)
    p.add_argument("--b0", type=float, default=None)
    p.add_argument("--c0", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="Monte Carlo study of a simulation scenario")
    p.add_argument("--scenario", choices=["h1", "h2", "h3"], required=True)
    p.add_argument("--trunc", choices=["light", "heavy"], required=True)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="run the built-in correctness oracles")
    p.add_argument("--draws", type=int, default=1_000_000, help="draws per scenario for the rate oracle")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CureSieveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
