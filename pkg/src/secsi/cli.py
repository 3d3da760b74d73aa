"""Command line interface.

Exit codes: 0 success, 2 usage error, 3 invalid input (unreadable or
malformed files, bad parameters), 4 numerical failure inside a module.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .branches import ALL_BRANCHES, BranchId, run_all
from .harness import SCENARIOS, ScenarioConfig, ccdf, run_monte_carlo, write_report
from .io import load_covariance, load_factors, load_tensor, matrix_to_json, save_tensor
from .jevd import JevdOptions
from .perturb import NoiseModel, analyze_all, plugin_analysis
from .selection import SCHEMES, select
from .tensor_ops import cp_construct
from ._validation import check_factors, check_rank

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4

logger = logging.getLogger("secsi")


class InputError(Exception):
    pass


def _metadata(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "verbose")}
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return {
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "config_hash": hashlib.sha256(blob).hexdigest()[:16],
    }


def _emit(args, payload):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_noise(spec: str) -> NoiseModel:
    if spec.startswith("white"):
        _, _, value = spec.partition(":")
        try:
            variance = float(value) if value else 1.0
        except ValueError:
            raise InputError(f"invalid white noise variance in {spec!r}") from None
        if not variance > 0:
            raise InputError("noise variance must be positive")
        return NoiseModel.white(variance)
    if not os.path.exists(spec):
        raise InputError(f"noise must be 'white:<variance>' or a covariance file, got {spec!r}")
    try:
        return NoiseModel.from_covariance(load_covariance(spec))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _jevd(args) -> JevdOptions:
    return JevdOptions(max_sweeps=args.max_sweeps, tol=args.tol, seed=args.seed)


def _load(args):
    X = load_tensor(args.input)
    d = check_rank(args.rank, X.shape)
    return X, d


def cmd_decompose(args):
    X, d = _load(args)
    branches = ALL_BRANCHES if args.branch == "all" else (BranchId.from_label(args.branch),)
    est = run_all(X, d, _jevd(args), branches=branches)
    payload = {"metadata": _metadata(args), "branches": {}, "failures": {}}
    for b in est.branches:
        t = est[b]
        payload["branches"][b.label] = {
            "factors": {f"F{r + 1}": matrix_to_json(F) for r, F in enumerate(t.factors)},
            "diagnostics": t.diagnostics(),
        }
    payload["failures"] = {b.label: msg for b, msg in est.failures.items()}
    _emit(args, payload)
    if not est.triples:
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_analyze(args):
    X, d = _load(args)
    noise = _parse_noise(args.noise)
    noise.check_size(X.size)
    if args.plugin:
        pred = plugin_analysis(X, d, run_all(X, d, _jevd(args)), noise)
    else:
        if args.factors:
            factors = check_factors(load_factors(args.factors), X.shape, d)
        else:
            # noiseless input: any exact branch recovers the factors
            est = run_all(X, d, _jevd(args), branches=(BranchId(3, "rhs"),))
            if not est.triples:
                raise RuntimeError("could not recover factors from the input tensor")
            factors = est[BranchId(3, "rhs")].factors
        pred = analyze_all(X, d, factors, noise)
    rows = [(b.label, r + 1, v[r]) for b, v in pred.items() for r in range(3)]
    if args.format == "csv":
        out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
        try:
            meta = _metadata(args)
            out.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
            w = csv.writer(out, lineterminator="\n")
            w.writerow(("branch", "factor", "rmsfe"))
            for row in rows:
                w.writerow((row[0], row[1], "%.17g" % row[2]))
        finally:
            if args.out:
                out.close()
    else:
        _emit(args, {
            "metadata": _metadata(args),
            "plugin": bool(args.plugin),
            "rmsfe": {b.label: list(v) for b, v in pred.items()},
            "count": len(rows),
        })
    return EXIT_OK


def cmd_select(args):
    X, d = _load(args)
    noise = _parse_noise(args.noise)
    est = run_all(X, d, _jevd(args))
    if not est.triples:
        raise RuntimeError("all branches failed")
    res = select(args.scheme, X, d, est, noise, seed=args.seed)
    if args.save_reconstruction:
        save_tensor(args.save_reconstruction, cp_construct(*res.triple.factors))
    _emit(args, {
        "metadata": _metadata(args),
        "scheme": res.scheme,
        "chosen": res.chosen_labels,
        "factors": {f"F{r + 1}": matrix_to_json(F) for r, F in enumerate(res.triple.factors)},
        "residual": res.residual,
        "scores": res.scores,
    })
    return EXIT_OK


def _scenario_from_args(args) -> ScenarioConfig:
    if args.scenario in SCENARIOS:
        base = SCENARIOS[args.scenario].to_dict()
    elif os.path.exists(args.scenario):
        with open(args.scenario, encoding="utf-8") as fh:
            try:
                base = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{args.scenario}: invalid JSON ({exc})") from None
    else:
        raise InputError(f"unknown scenario {args.scenario!r}; use one of {sorted(SCENARIOS)} or a JSON file")
    overrides = {"seed": args.seed}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.snr_db:
        overrides["snr_db"] = args.snr_db
    if args.realizations is not None:
        overrides["realizations"] = args.realizations
    base.update(overrides)
    return ScenarioConfig.from_dict(base)


def cmd_simulate(args):
    cfg = _scenario_from_args(args)
    report = run_monte_carlo(cfg, threads=args.threads)
    paths = write_report(report, args.out, plots=not args.no_plots)
    for p in paths:
        logger.info("wrote %s", p)
    sys.stdout.write(json.dumps({"outputs": paths, "failures": report.failures}) + "\n")
    return EXIT_OK


def cmd_ccdf_report(args):
    path = args.input
    if os.path.isdir(path):
        path = os.path.join(path, "schemes.csv")
    if not os.path.exists(path):
        raise InputError(f"{path} not found")
    values = {}
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        try:
            for row in reader:
                values.setdefault(row["scheme"], []).append(float(row["trmsfe"]))
        except (KeyError, ValueError) as exc:
            raise InputError(f"{path}: not a scheme table ({exc})") from None
    if not values:
        raise InputError(f"{path}: no rows")
    levels = np.linspace(0.1, 0.9, 9)
    report = {}
    for name in sorted(values):
        x, y = ccdf(values[name])
        report[name] = {
            "trials": len(x),
            "median": float(np.median(x)),
            "deciles": [float(q) for q in np.quantile(x, levels)],
            "curve": [[float(a), float(b)] for a, b in zip(x, y)],
        }
    _emit(args, {"metadata": _metadata(args), "source": path, "schemes": report})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="secsi", description="SECSI CP decomposition and error prediction")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more diagnostics on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def tensor_cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("input", help="tensor JSON file")
        p.add_argument("--rank", "-d", type=int, required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--max-sweeps", type=int, default=100)
        p.add_argument("--tol", type=float, default=1e-12)
        p.add_argument("--out", "-o", help="output file (default stdout)")
        return p

    p = tensor_cmd("decompose", "run the SECSI branches")
    p.add_argument("--branch", default="all", help="'all' or a label such as 3-rhs")
    p.set_defaults(func=cmd_decompose)

    p = tensor_cmd("analyze", "closed-form rMSFE per branch and factor")
    p.add_argument("--noise", default="white:1.0", help="'white:<variance>' or a covariance file")
    p.add_argument("--plugin", action="store_true", help="treat the input as noisy and plug in estimates")
    p.add_argument("--factors", help="JSON with true factors F1, F2, F3 (noiseless analysis)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_analyze)

    p = tensor_cmd("select", "pick final estimates")
    p.add_argument("--scheme", choices=SCHEMES, default="pas")
    p.add_argument("--noise", default="white:1.0")
    p.add_argument("--save-reconstruction", metavar="FILE", help="write the rebuilt tensor as tensor JSON")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="Monte Carlo experiment")
    p.add_argument("--scenario", required=True, help="I, II, III, IV, V or a scenario JSON file")
    p.add_argument("--trials", type=int)
    p.add_argument("--realizations", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr-db", type=float, nargs="+")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default $SECSI_THREADS or 1)")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ccdf-report", help="CCDF summary of a scheme table")
    p.add_argument("input", help="schemes.csv or a simulate output directory")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_ccdf_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, IsADirectoryError, PermissionError, ValueError) as exc:
        print(f"secsi: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (np.linalg.LinAlgError, RuntimeError, FloatingPointError) as exc:
        print(f"secsi: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
