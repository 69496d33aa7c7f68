"""Command-line front end.

Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure. Output is
assembled in memory and written only once the whole command has succeeded, so
a failing run leaves no partial files behind.
"""

from __future__ import annotations

import argparse
import io
import os
import sys
from pathlib import Path

import yaml

from . import io as out
from .cox import fit as cox_fit, martingale_residuals
from .errors import InputError, NumericalError
from .event_data import build_panel, read_records_csv, validate_records, write_records_csv
from .ksample import WEIGHT_FAMILIES, k_sample_test, two_sample_test
from .martingale_lab import censoring_from_config, hazard_from_config, run_study, simulate
from .multistate import aalen_johansen, cumulative_intensity_matrix
from .univariate import confidence_interval, kaplan_meier, nelson_aalen

SEED_ENV = "CPSURV_SEED"


class UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _split(value: str | None):
    return None if value is None else tuple(v.strip() for v in value.split(",") if v.strip())


def _level(value: str) -> float:
    x = float(value)
    if not 0 < x < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return x


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _load(args, covariates=None):
    path = Path(args.input)
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    records, names = read_records_csv(path, covariates)
    return validate_records(records, _split(args.states), names)


# ------------------------------------------------------------ subcommands


def _univariate(args, which: str):
    records = _load(args)
    panel = build_panel(records)
    if which == "nelson-aalen":
        est = nelson_aalen(panel, args.from_state, args.to_state, group=args.group)
    else:
        est = kaplan_meier(panel, group=args.group)
    est = confidence_interval(est, args.level, args.transform)
    files = {}
    if args.plot_data:
        files[args.plot_data] = out.emit_plot_data(est)
    text = out.estimate_json(est) if args.format == "json" else out.estimate_csv(est)
    return text, files


def _aalen_johansen(args):
    panel = build_panel(_load(args))
    inten = cumulative_intensity_matrix(panel, group=args.group)
    path = aalen_johansen(inten, args.s, args.t, covariance=not args.no_covariance)
    text = out.transition_json(path) if args.format == "json" else out.transition_csv(path)
    return text, {}


def _test(args):
    panel = build_panel(_load(args))
    groups = _split(args.groups)
    n_groups = len(groups) if groups else len(panel.groups)
    run = two_sample_test if n_groups == 2 else k_sample_test
    res = run(panel, args.weights, args.horizon, groups, args.from_state, args.to_state)
    if args.format == "table":
        return out.ksample_table(res), {}
    if args.format == "csv":
        return out.ksample_csv(res), {}
    return out.dumps(res.to_dict()), {}


def _cox(args):
    records = _load(args, _split(args.covariates))
    res = cox_fit(records, from_state=args.from_state, to_state=args.to_state,
                  tol=args.tol, max_iter=args.max_iter)
    files = {}
    if args.baseline:
        files[args.baseline] = out.step_csv(res.baseline, "cumulative_hazard")
    if args.residuals:
        files[args.residuals] = out.residuals_csv(martingale_residuals(res))
    text = out.cox_csv(res) if args.format == "csv" else out.dumps(res.to_dict())
    return text, files


def _read_yaml(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        cfg = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise InputError(f"{path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: expected a mapping at the top level")
    return cfg


def _simulate(args):
    if args.config:
        cfg = _read_yaml(args.config)
        hazard = hazard_from_config(cfg.get("hazard", {}))
        censoring = censoring_from_config(cfg.get("censoring"))
        n = int(cfg.get("n", args.n))
    else:
        hazard = hazard_from_config({"levels": [args.rate], "breakpoints": [0.0],
                                     "beta": list(args.beta or ()), "horizon": args.horizon})
        censoring = censoring_from_config(
            {"scheme": "random", "rate": args.censor_rate} if args.censor_rate else None)
        n = args.n
    records = simulate(n, hazard, censoring, seed=args.seed)
    buf = io.StringIO()
    write_records_csv(records, buf)
    return buf.getvalue(), {}


def _summary_rows(obj, prefix=""):
    if isinstance(obj, dict):
        for key in sorted(obj):
            yield from _summary_rows(obj[key], f"{prefix}.{key}" if prefix else str(key))
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            yield from _summary_rows(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def _study(args):
    cfg = _read_yaml(args.config)
    if args.seed_override is not None:
        cfg["seed"] = args.seed_override
    elif "seed" not in cfg:
        cfg["seed"] = _default_seed()
    report = run_study(cfg).to_dict()
    report = {"config": cfg, "report": report}
    files = {}
    if args.summary:
        rows = [[k, "" if v is None else (out.number(v) if isinstance(v, float) else v)]
                for k, v in _summary_rows(report["report"])]
        files[args.summary] = out.csv_text(("key", "value"), rows)
    return out.dumps(report), files


# ----------------------------------------------------------------- parser


def _common(p, output_formats, default_format):
    p.add_argument("--input", required=True, help="event records CSV (id,entry,exit,from,to[,group],covariates...)")
    p.add_argument("--states", help="comma-separated state space, in order (default: order of appearance)")
    p.add_argument("--output", help="write the main result here instead of standard output")
    p.add_argument("--format", choices=output_formats, default=default_format, help=f"output format (default {default_format})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cpsurv", description="Counting-process survival analysis.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, helptext in (("nelson-aalen", "cumulative transition intensity estimate"),
                           ("kaplan-meier", "product-limit survival estimate")):
        p = sub.add_parser(name, help=helptext, description=helptext)
        _common(p, ("csv", "json"), "csv")
        if name == "nelson-aalen":
            p.add_argument("--from-state", help="origin state (inferred when unique)")
            p.add_argument("--to-state", help="destination state (default: all exits)")
        p.add_argument("--group", help="restrict to one group label")
        p.add_argument("--level", type=_level, default=0.95, help="confidence level in (0, 1) (default 0.95)")
        p.add_argument("--transform", choices=("log", "loglog", "linear"),
                       help="interval transform (default log for hazards, loglog for survival)")
        p.add_argument("--plot-data", help="also write staircase plot coordinates to this file")

    p = sub.add_parser("aalen-johansen", help="transition probability matrices",
                       description="Aalen-Johansen transition matrices P(s, t) with plug-in covariance.")
    _common(p, ("csv", "json"), "csv")
    p.add_argument("--s", type=float, default=0.0, help="start time (default 0)")
    p.add_argument("--t", type=float, help="end time (default: last transition)")
    p.add_argument("--group", help="restrict to one group label")
    p.add_argument("--no-covariance", action="store_true", help="skip the covariance computation")

    p = sub.add_parser("test", help="weighted two- or k-sample test",
                       description="Weighted log-rank family test of equal intensities across groups.")
    _common(p, ("json", "table", "csv"), "json")
    p.add_argument("--weights", choices=WEIGHT_FAMILIES, default="logrank", help="weight family (default logrank)")
    p.add_argument("--horizon", type=float, help="only use event times up to this time")
    p.add_argument("--groups", help="comma-separated group labels to compare (default: all)")
    p.add_argument("--from-state", help="origin state (inferred when unique)")
    p.add_argument("--to-state", help="destination state (default: all exits)")

    p = sub.add_parser("cox", help="Cox regression", description="Cox regression with Breslow ties.")
    _common(p, ("json", "csv"), "json")
    p.add_argument("--covariates", help="comma-separated covariate columns (default: all)")
    p.add_argument("--from-state", help="origin state (inferred when unique)")
    p.add_argument("--to-state", help="destination state (default: all exits)")
    p.add_argument("--tol", type=float, default=1e-9, help="score tolerance (default 1e-9)")
    p.add_argument("--max-iter", type=int, default=50, help="Newton-Raphson iteration cap (default 50)")
    p.add_argument("--baseline", help="write the Breslow cumulative baseline hazard CSV here")
    p.add_argument("--residuals", help="write martingale residual paths CSV here")

    p = sub.add_parser("simulate", help="simulate event records",
                       description="Simulate survival or multi-state records from piecewise-constant hazards.")
    p.add_argument("--config", help="YAML file with `hazard`, `censoring` and `n`")
    p.add_argument("--n", type=int, default=100, help="number of subjects (default 100)")
    p.add_argument("--rate", type=float, default=1.0, help="constant hazard without --config (default 1)")
    p.add_argument("--beta", type=float, nargs="*", help="covariate effects; covariates are standard normal")
    p.add_argument("--censor-rate", type=float, help="exponential random censoring rate")
    p.add_argument("--horizon", type=float, help="administrative censoring time")
    p.add_argument("--seed", type=int, default=None, help=f"seed (default ${SEED_ENV} or 0)")
    p.add_argument("--output", help="write records here instead of standard output")

    p = sub.add_parser("study", help="run a Monte Carlo study",
                       description="Run a martingale, clt, coverage, calibration, cox or aj_variance study from YAML.")
    p.add_argument("--config", required=True, help="YAML study configuration")
    p.add_argument("--seed", dest="seed_override", type=int, default=None,
                   help=f"override the config seed (default: config, then ${SEED_ENV}, then 0)")
    p.add_argument("--output", help="write the JSON report here instead of standard output")
    p.add_argument("--summary", help="also write a key,value CSV summary here")
    return parser


COMMANDS = {
    "nelson-aalen": lambda a: _univariate(a, "nelson-aalen"),
    "kaplan-meier": lambda a: _univariate(a, "kaplan-meier"),
    "aalen-johansen": _aalen_johansen,
    "test": _test,
    "cox": _cox,
    "simulate": _simulate,
    "study": _study,
}


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help
            return int(exc.code or 0)
        if getattr(args, "seed", 0) is None:
            args.seed = _default_seed()
        text, files = COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=stderr)
        return 1
    main_target = getattr(args, "output", None)
    try:
        for target, content in files.items():
            Path(target).write_text(content, encoding="utf-8")
        if main_target:
            Path(main_target).write_text(text, encoding="utf-8")
        else:
            stdout.write(text)
    except OSError as exc:
        print(f"error: {exc}", file=stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())
