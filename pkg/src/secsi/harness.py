"""Monte Carlo experiments comparing predicted and measured factor errors.

Two kinds of scenario are supported.  In *varying* mode the noiseless tensor
is drawn once per realization and kept while the SNR is swept; every trial
adds fresh noise and records the empirical and the closed-form error of every
branch and factor.  In *fixed* mode the noiseless tensor is redrawn each
trial at one SNR and the selection schemes are compared through their total
error.

Every random draw comes from a generator seeded with the tuple
``(seed, realization, snr index, trial)``, or ``(seed, trial, stream)`` in
fixed mode, so results do not depend on execution order or thread count.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .branches import ALL_BRANCHES, BranchId, FactorTriple, run_all
from .jevd import JevdOptions
from .metrics import empirical_rmsfe, empirical_rmsfe_bruteforce  # noqa: F401  (re-exported)
from .perturb import NoiseModel, analyze_all
from .selection import SCHEMES, argmin_branch, select
from .plots import line_plot
from .tensor_ops import cp_construct, higher_order_norm

logger = logging.getLogger(__name__)

CORRELATED_F1 = np.array(
    [
        [1.0, 1.0, 1.0, 1.0],
        [1.0, 0.95, 0.95, 0.95],
        [1.0, 0.95, 1.0, 1.0],
        [1.0, 1.0, 0.95, 1.0],
        [0.95, 1.0, 1.0, 1.0],
    ]
)


@dataclass
class ScenarioConfig:
    name: str
    dims: tuple
    d: int
    field: str = "real"
    snr_db: tuple = (30.0, 40.0, 50.0, 60.0)
    trials: int = 500
    realizations: int = 3
    seed: int = 0
    mode: str = "varying"  # or "fixed"
    fixed_F1: Optional[list] = None
    branches: tuple = tuple(b.label for b in ALL_BRANCHES)
    schemes: tuple = SCHEMES
    jevd_max_sweeps: int = 100
    jevd_tol: float = 1e-12

    def __post_init__(self):
        self.dims = tuple(int(m) for m in self.dims)
        self.snr_db = tuple(float(s) for s in np.atleast_1d(self.snr_db))
        self.branches = tuple(self.branches)
        self.schemes = tuple(self.schemes)
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError("dims must be three positive integers")
        if not 1 <= self.d <= min(self.dims):
            raise ValueError(f"d={self.d} must lie in [1, {min(self.dims)}]")
        if self.trials < 1 or self.realizations < 1:
            raise ValueError("trials and realizations must be at least 1")
        if self.field not in ("real", "complex"):
            raise ValueError("field must be 'real' or 'complex'")
        if self.mode not in ("varying", "fixed"):
            raise ValueError("mode must be 'varying' or 'fixed'")
        if not self.snr_db:
            raise ValueError("at least one SNR value is needed")
        if self.fixed_F1 is not None:
            F1 = np.asarray(self.fixed_F1)
            if F1.shape != (self.dims[0], self.d):
                raise ValueError(f"fixed F1 has shape {F1.shape}, expected {(self.dims[0], self.d)}")
            self.fixed_F1 = F1.tolist()
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        for b in self.branches:
            BranchId.from_label(b)

    @property
    def branch_ids(self) -> tuple:
        return tuple(BranchId.from_label(b) for b in self.branches)

    @property
    def jevd_options(self) -> JevdOptions:
        return JevdOptions(max_sweeps=self.jevd_max_sweeps, tol=self.jevd_tol)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dims"] = list(self.dims)
        out["snr_db"] = list(self.snr_db)
        out["branches"] = list(self.branches)
        out["schemes"] = list(self.schemes)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**data)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


SCENARIOS = {
    "I": ScenarioConfig("I", (5, 5, 5), 4, "real"),
    "II": ScenarioConfig("II", (5, 8, 7), 4, "complex", fixed_F1=CORRELATED_F1.tolist()),
    "III": ScenarioConfig("III", (3, 15, 70), 3, "real", snr_db=(50.0,)),
    "IV": ScenarioConfig("IV", (5, 5, 5), 3, "real", snr_db=(50.0,), mode="fixed"),
    "V": ScenarioConfig("V", (3, 15, 70), 3, "real", snr_db=(40.0,), mode="fixed"),
}


def scenario(name: str, **overrides) -> ScenarioConfig:
    """Copy of a predefined scenario with fields replaced."""
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; expected one of {sorted(SCENARIOS)}")
    data = SCENARIOS[name].to_dict()
    data.update(overrides)
    return ScenarioConfig.from_dict(data)


# -- generation -----------------------------------------------------------------


def _gaussian(rng, shape, field_):
    if field_ == "complex":
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return rng.standard_normal(shape)


def gen_factors(cfg: ScenarioConfig, realization_seed) -> FactorTriple:
    """Ground-truth factors with i.i.d. Gaussian entries (unit variance)."""
    rng = np.random.default_rng(realization_seed)
    F = [_gaussian(rng, (M, cfg.d), cfg.field) for M in cfg.dims]
    if cfg.fixed_F1 is not None:
        F[0] = np.asarray(cfg.fixed_F1, dtype=F[0].dtype)
    return FactorTriple(*F)


def sigma_from_snr(x0_energy: float, snr_linear: float, M: int) -> float:
    """Noise variance giving the requested signal-to-noise energy ratio."""
    if not (x0_energy > 0 and snr_linear > 0 and M > 0):
        raise ValueError("energy, SNR and entry count must be positive")
    return x0_energy / (snr_linear * M)


def snr_db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def gen_noise(rng, dims, variance, field_):
    return np.sqrt(variance) * _gaussian(rng, dims, field_)


def ccdf(values):
    """Empirical CCDF at the sorted sample points: fraction strictly greater."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("ccdf of an empty sample")
    above = v.size - np.searchsorted(v, v, side="right")
    return v, above / v.size


def ccdf_at(values, x):
    v = np.sort(np.asarray(values, dtype=float).ravel())
    return float((v.size - np.searchsorted(v, x, side="right")) / v.size)


# -- experiment -----------------------------------------------------------------


@dataclass
class MonteCarloReport:
    config: ScenarioConfig
    results: list = field(default_factory=list)  # long-format rows
    schemes: list = field(default_factory=list)  # per trial and scheme
    failures: int = 0
    summary: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        return {
            "version": __version__,
            "scenario": self.config.name,
            "seed": self.config.seed,
            "trials": self.config.trials,
            "config_hash": self.config.config_hash(),
        }


RESULT_COLUMNS = ("scenario", "realization", "trial", "snr_db", "branch", "factor", "empirical", "analytical")
SCHEME_COLUMNS = (
    "scenario", "trial", "snr_db", "scheme", "chosen", "rmsfe1", "rmsfe2", "rmsfe3", "trmsfe", "residual",
    "oracle_analytical", "oracle_empirical",
)


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _varying_trial(args):
    cfg, X0, F, unit_analysis, r_idx, s_idx, trial = args
    snr = cfg.snr_db[s_idx]
    var = sigma_from_snr(higher_order_norm(X0) ** 2, snr_db_to_linear(snr), X0.size)
    rng = np.random.default_rng([cfg.seed, r_idx, s_idx, trial])
    X = X0 + gen_noise(rng, cfg.dims, var, cfg.field)
    est = run_all(X, cfg.d, cfg.jevd_options, branches=cfg.branch_ids)
    rows = []
    for b in cfg.branch_ids:
        if b not in est.triples:
            continue
        for r in range(3):
            rows.append((cfg.name, r_idx, trial, snr, b.label, r + 1,
                         empirical_rmsfe(F.factors[r], est[b].factors[r]), unit_analysis[b][r] * var))
    return rows, len(est.failures)


def _fixed_trial(args):
    cfg, trial = args
    snr = cfg.snr_db[0]
    F = gen_factors(cfg, [cfg.seed, trial, 0])
    rng = np.random.default_rng([cfg.seed, trial, 1])
    X0 = cp_construct(*F.factors)
    var = sigma_from_snr(higher_order_norm(X0) ** 2, snr_db_to_linear(snr), X0.size)
    X = X0 + gen_noise(rng, cfg.dims, var, cfg.field)
    est = run_all(X, cfg.d, cfg.jevd_options, branches=cfg.branch_ids)
    if not est.triples:
        return [], [], 1
    analytic = analyze_all(X0, cfg.d, F.factors, NoiseModel.white(var), branches=est.branches)
    rows, emp = [], {}
    for b in est.branches:
        emp[b] = [empirical_rmsfe(F.factors[r], est[b].factors[r]) for r in range(3)]
        for r in range(3):
            rows.append((cfg.name, trial, trial, snr, b.label, r + 1, emp[b][r], analytic[b][r]))
    oracle_an = [argmin_branch(analytic, r) for r in range(3)]
    oracle_emp = [min(emp, key=lambda b: (emp[b][r], b)) for r in range(3)]
    scheme_rows = []
    for name in cfg.schemes:
        res = select(name, X, cfg.d, est, NoiseModel.white(1.0), seed=[cfg.seed, trial, 2])
        errs = [empirical_rmsfe(F.factors[r], res.triple.factors[r]) for r in range(3)]
        scheme_rows.append((cfg.name, trial, snr, name, "/".join(res.chosen_labels), *errs, sum(errs), res.residual,
                            "/".join(b.label for b in oracle_an), "/".join(b.label for b in oracle_emp)))
    return rows, scheme_rows, len(est.failures)


def run_monte_carlo(cfg: ScenarioConfig, threads: Optional[int] = None) -> MonteCarloReport:
    """Run a scenario and aggregate the results.

    ``threads`` defaults to the ``SECSI_THREADS`` environment variable (or 1);
    the outcome does not depend on it.
    """
    threads = threads or int(os.environ.get("SECSI_THREADS", "1") or 1)
    report = MonteCarloReport(config=cfg)
    if cfg.mode == "varying":
        for r_idx in range(cfg.realizations):
            F = gen_factors(cfg, [cfg.seed, r_idx])
            X0 = cp_construct(*F.factors)
            unit = analyze_all(X0, cfg.d, F.factors, NoiseModel.white(1.0), branches=cfg.branch_ids)
            jobs = [(cfg, X0, F, unit, r_idx, s, t) for s in range(len(cfg.snr_db)) for t in range(cfg.trials)]
            for rows, fails in _map(_varying_trial, jobs, threads):
                report.results.extend(rows)
                report.failures += fails
    else:
        for rows, scheme_rows, fails in _map(_fixed_trial, [(cfg, t) for t in range(cfg.trials)], threads):
            report.results.extend(rows)
            report.schemes.extend(scheme_rows)
            report.failures += fails
    if report.failures:
        logger.warning("%d branch runs failed and were excluded", report.failures)
    report.summary = summarize(report)
    return report


def _gap_db(emp, an):
    return float(10.0 * np.log10(emp / an)) if emp > 0 and an > 0 else float("nan")


def summarize(report: MonteCarloReport) -> dict:
    cfg = report.config
    out = {"metadata": report.metadata(), "failures": report.failures}
    if report.results:
        groups = {}
        for row in report.results:
            key = (row[1], row[3], row[4], row[5]) if cfg.mode == "varying" else (0, row[3], row[4], row[5])
            groups.setdefault(key, []).append((row[6], row[7]))
        table = []
        for (real, snr, branch, factor), vals in sorted(groups.items()):
            emp = float(np.mean([v[0] for v in vals]))
            an = float(np.mean([v[1] for v in vals]))
            table.append({"realization": real, "snr_db": snr, "branch": branch, "factor": factor,
                          "trials": len(vals), "empirical": emp, "analytical": an, "gap_db": _gap_db(emp, an)})
        out["rmsfe"] = table
    if report.schemes:
        per = {}
        for row in report.schemes:
            per.setdefault(row[3], []).append(row)
        schemes = {}
        deciles = np.linspace(0.1, 0.9, 9)
        for name, rows in per.items():
            tr = np.array([r[8] for r in rows])
            schemes[name] = {
                "median_trmsfe": float(np.median(tr)),
                "mean_trmsfe": float(np.mean(tr)),
                "deciles": [float(q) for q in np.quantile(tr, deciles)],
            }
        if "pas" in per:
            pas = per["pas"]
            match_an = [c == o for r in pas for c, o in zip(r[4].split("/"), r[10].split("/"))]
            match_emp = [c == o for r in pas for c, o in zip(r[4].split("/"), r[11].split("/"))]
            schemes["pas"]["oracle_match_analytical"] = float(np.mean(match_an))
            schemes["pas"]["oracle_match_empirical"] = float(np.mean(match_emp))
        out["schemes"] = schemes
    return out


# -- output ---------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _csv_text(meta: dict, columns, rows) -> str:
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def results_csv(report: MonteCarloReport) -> str:
    return _csv_text(report.metadata(), RESULT_COLUMNS, report.results)


def schemes_csv(report: MonteCarloReport) -> str:
    return _csv_text(report.metadata(), SCHEME_COLUMNS, report.schemes)


def ccdf_csv(report: MonteCarloReport) -> str:
    rows = []
    per = {}
    for row in report.schemes:
        per.setdefault(row[3], []).append(row[8])
    for name in sorted(per):
        x, y = ccdf(per[name])
        rows.extend((name, xi, yi) for xi, yi in zip(x, y))
    return _csv_text(report.metadata(), ("scheme", "trmsfe", "ccdf"), rows)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_report(report: MonteCarloReport, out_dir, plots: bool = True) -> list:
    """Write CSV tables, ``summary.json`` and optional SVG plots; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    files = {"results.csv": results_csv(report)}
    if report.schemes:
        files["schemes.csv"] = schemes_csv(report)
        files["ccdf.csv"] = ccdf_csv(report)
    summary = dict(report.summary)
    summary["config"] = report.config.to_dict()
    files["summary.json"] = json.dumps(_json_safe(summary), indent=2, sort_keys=True) + "\n"
    if plots:
        files.update(_plots(report))
    paths = []
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths.append(path)
    return paths


def _plots(report: MonteCarloReport) -> dict:
    cfg = report.config
    out = {}
    if cfg.mode == "varying" and report.summary.get("rmsfe"):
        series = {}
        agg = {}
        for row in report.summary["rmsfe"]:
            key = (row["realization"], row["branch"], row["snr_db"])
            e, a = agg.get(key, (0.0, 0.0))
            agg[key] = (e + row["empirical"], a + row["analytical"])
        for real in range(cfg.realizations):
            for b in cfg.branches:
                pts = sorted((k[2], v) for k, v in agg.items() if k[0] == real and k[1] == b)
                if not pts:
                    continue
                xs = [p[0] for p in pts]
                series[f"r{real} {b} analytical"] = (xs, [p[1][1] for p in pts], "line")
                series[f"r{real} {b} empirical"] = (xs, [p[1][0] for p in pts], "marker")
        out["trmsfe.svg"] = line_plot(series, f"Scenario {cfg.name}: TrMSFE", "SNR [dB]", "TrMSFE", logy=True)
    if report.schemes:
        per = {}
        for row in report.schemes:
            per.setdefault(row[3], []).append(row[8])
        series = {name: (*ccdf(v), "line") for name, v in sorted(per.items())}
        out["ccdf.svg"] = line_plot(series, f"Scenario {cfg.name}: CCDF of TrMSFE", "TrMSFE", "CCDF",
                                    logx=True, step=True)
    return out
