"""Command-line interface: ``fit``, ``cv``, ``simulate`` and ``pathdemo``.

Every subcommand writes its results into ``--out`` (default: current
directory).  Settings come from defaults, then an optional ``--config`` file
of ``key = value`` lines, then command-line flags.  The effective settings
are echoed into the JSON output.

Exit codes: 0 on success, 2 for invalid input or settings, 3 when the
numerical work fails.
"""

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from . import __version__
from .cv import naive_cv, ris_cv, select_lambda
from .diagnostics import (UnivariateScenario, detect_discontinuities, path_report,
                          univariate_registry)
from .exceptions import AlphaZero, KTooLarge, PenseError
from .metrics import METRICS
from .pense import LossSpec, adaptive_loadings, compute_path, lambda_grid
from .rho import calibrate_cutoff
from .simulation import SimulationConfig, simulate
from .standardize import Standardization

FORMAT_VERSION = 1

class InputError(Exception):
    """Invalid data file, config file or setting (exit code 2)."""


# ---------------------------------------------------------------- settings

@dataclass
class RunConfig:
    loss: str = "s"
    rho: str = "bisquare"
    delta: float = 0.25
    alpha: float = 0.5
    q: int = 50
    min_ratio: float = 1e-3
    lambdas: Optional[Tuple[float, ...]] = None
    M: int = 40
    K: int = 7
    R: int = 5
    c_tau: float = 3.0
    metric: str = "tau"
    rule: str = "one-se"
    engine: str = "ris"
    seed: int = 0
    adaptive: bool = False
    exponent: float = 1.0
    threads: int = 1
    n_subsets: int = 10
    start_every: Optional[int] = None
    explore_iterations: Optional[int] = None
    explore_keep: int = 10
    scale: Optional[float] = None
    standardize: bool = True

    def validate(self):
        def need(ok, msg):
            if not ok:
                raise InputError(msg)

        need(self.loss in ("s", "m"), f"loss must be 's' or 'm', got {self.loss!r}")
        need(self.rho in ("bisquare", "lqq", "hampel"),
             f"rho must be bisquare, lqq or hampel, got {self.rho!r}")
        need(0 < self.delta <= 0.5, f"delta must lie in (0, 0.5], got {self.delta}")
        need(0 < self.alpha <= 1, f"alpha must lie in (0, 1], got {self.alpha}"
             " (alpha = 0 has no finite lambda_max; give --lambdas explicitly)"
             if self.lambdas is None else f"alpha must lie in [0, 1], got {self.alpha}")
        need(self.q >= 1, "q must be at least 1")
        need(0 < self.min_ratio < 1, "min_ratio must lie in (0, 1)")
        if self.lambdas is not None:
            lam = np.asarray(self.lambdas, dtype=float)
            need(lam.size > 0 and np.all(lam >= 0), "lambdas must be non-negative")
            need(np.all(np.diff(lam) < 0), "lambdas must be strictly descending")
        need(self.M >= 1, "M must be at least 1")
        need(self.K >= 2, "K must be at least 2")
        need(self.R >= 1, "R must be at least 1")
        need(self.c_tau > 0, "c_tau must be positive")
        need(self.metric in METRICS, f"metric must be one of {sorted(METRICS)}")
        need(self.rule in ("min", "one-se"), "rule must be 'min' or 'one-se'")
        need(self.engine in ("ris", "naive"), "engine must be 'ris' or 'naive'")
        need(self.exponent > 0, "exponent must be positive")
        need(self.threads >= 1, "threads must be at least 1")
        need(self.n_subsets >= 0, "n_subsets must be non-negative")
        need(self.start_every is None or self.start_every >= 1, "start_every must be positive")
        need(self.explore_iterations is None or self.explore_iterations >= 1,
             "explore_iterations must be positive")
        need(self.explore_keep >= 1, "explore_keep must be positive")
        if self.loss == "m":
            need(self.scale is not None and self.scale > 0,
                 "the M-loss needs a positive residual scale (scale = ...)")
        return self

    def loss_spec(self) -> LossSpec:
        if self.loss == "s":
            return LossSpec.s_loss(self.delta, self.rho)
        return LossSpec.m_loss(self.scale, calibrate_cutoff(self.rho, self.delta))

    def path_options(self) -> dict:
        return dict(n_subsets=self.n_subsets, seed=self.seed, start_every=self.start_every,
                    explore_iterations=self.explore_iterations, explore_keep=self.explore_keep)


def _coerce(name, kind, raw):
    # kind is the annotation string of the RunConfig field
    if raw is None or (isinstance(raw, str) and raw.lower() in ("none", "")):
        if "Optional" in kind:
            return None
        raise InputError(f"{name} needs a value")
    try:
        if "Tuple" in kind:
            items = raw if isinstance(raw, (list, tuple)) else str(raw).strip("[]()").split(",")
            return tuple(float(v) for v in items if str(v).strip())
        if "bool" in kind:
            if isinstance(raw, bool):
                return raw
            low = str(raw).lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if "int" in kind:
            value = float(raw)
            if value != int(value):
                raise ValueError(raw)
            return int(value)
        if "float" in kind:
            return float(raw)
        return str(raw)
    except ValueError:
        raise InputError(f"invalid value {raw!r} for {name}") from None


def read_config_file(path) -> dict:
    """Flat ``key = value`` settings; ``#`` starts a comment, quotes are optional."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise InputError(f"{path}, line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "'\"":
            value = value[1:-1]
        out[key] = value
    return out


def build_config(cls, file_values: dict, flag_values: dict, kinds: dict):
    """Defaults, overridden by the config file, overridden by flags."""
    merged = {}
    for key, raw in list(file_values.items()) + list(flag_values.items()):
        if key not in kinds:
            raise InputError(f"unknown setting {key!r}")
        merged[key] = _coerce(key, kinds[key], raw)
    return cls(**merged)


# ---------------------------------------------------------------- data

@dataclass
class Dataset:
    names: Tuple[str, ...]
    y: np.ndarray
    x: np.ndarray


def read_dataset(path) -> Dataset:
    """Numeric CSV with a header; the first column is the response."""
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise InputError(f"{path}: need a header with the response and at least one predictor")
        header = [h.strip() for h in header]
        rows = []
        for line_no, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}, row {line_no}: expected {len(header)} fields, "
                                 f"found {len(row)}")
            values = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise InputError(f"{path}, row {line_no}, column {name!r}: "
                                     f"not a finite number: {cell!r}")
                values.append(v)
            rows.append(values)
    if len(rows) < 3:
        raise InputError(f"{path}: need at least 3 data rows")
    data = np.array(rows)
    return Dataset(tuple(header), data[:, 0], data[:, 1:])


# ---------------------------------------------------------------- output

def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _clean(obj):
    # JSON has no inf/nan; numpy scalars and arrays become plain lists
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def write_json(path, payload):
    payload = dict(format_version=FORMAT_VERSION, **payload)
    Path(path).write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


# ---------------------------------------------------------------- commands

def _prepare(args, cfg: RunConfig):
    data = read_dataset(args.data)
    if data.x.shape[0] <= cfg.K and args.command == "cv":
        raise InputError(f"K = {cfg.K} folds need more than {cfg.K} observations")
    std = Standardization.fit(data.x, data.y, cfg.standardize, data.names[1:])
    xs, ys = std.transform(data.x, data.y)
    return data, std, xs, ys


def _grid(cfg, xs, ys, loss, loadings):
    if cfg.lambdas is not None:
        return np.asarray(cfg.lambdas, dtype=float)
    return lambda_grid(xs, ys, loss, cfg.alpha, cfg.q, cfg.min_ratio, loadings)


def _loadings(cfg, xs, ys, loss):
    # pilot: global minimum at the middle of a non-adaptive single-minimum path
    if not cfg.adaptive:
        return None
    grid = _grid(cfg, xs, ys, loss, None)
    pilot = compute_path(xs, ys, loss, cfg.alpha, grid, M=1, **cfg.path_options())
    mid = pilot[len(grid) // 2]
    if not mid:
        raise PenseError("pilot fit for the adaptive penalty failed")
    return adaptive_loadings(mid[0], cfg.exponent)


def _minimum_record(m, std, p):
    b0, beta = std.back_transform(m.intercept, m.beta, p)
    return b0, beta


def cmd_fit(args, cfg: RunConfig):
    data, std, xs, ys = _prepare(args, cfg)
    loss = cfg.loss_spec()
    loadings = _loadings(cfg, xs, ys, loss)
    grid = _grid(cfg, xs, ys, loss, loadings)
    reg = compute_path(xs, ys, loss, cfg.alpha, grid, M=cfg.M, loadings=loadings,
                       **cfg.path_options())
    p = data.x.shape[1]
    rows, records = [], []
    for t, lam in enumerate(reg.lambdas):
        for q, m in enumerate(reg[t]):
            b0, beta = _minimum_record(m, std, p)
            nnz, l1 = int(np.count_nonzero(beta)), float(np.abs(beta).sum())
            rows.append([t, lam, q, m.objective, m.scale, nnz, l1, m.n_zero_weights, b0, *beta])
            records.append({"lambda_index": t, "lambda": lam, "q": q, "objective": m.objective,
                            "scale": m.scale, "nnz": nnz, "l1_norm": l1,
                            "n_zero_weights": m.n_zero_weights, "converged": m.converged,
                            "intercept": b0, "coefficients": beta})
    out = Path(args.out)
    write_csv(out / "path.csv", ["lambda_index", "lambda", "q", "objective", "scale", "nnz",
                                 "l1_norm", "n_zero_weights", "intercept", *data.names[1:]], rows)
    write_json(out / "fit.json", {"command": "fit", "config": _config_json(cfg),
                                  "predictors": list(data.names[1:]),
                                  "standardization": std.to_json(), "lambdas": reg.lambdas,
                                  "loadings": loadings, "minima": records})
    return 0


def cmd_cv(args, cfg: RunConfig):
    timing = {}
    t0 = time.perf_counter()
    data, std, xs, ys = _prepare(args, cfg)
    loss = cfg.loss_spec()
    loadings = _loadings(cfg, xs, ys, loss)
    grid = _grid(cfg, xs, ys, loss, loadings)
    timing["setup"] = time.perf_counter() - t0
    ris = cfg.engine == "ris"
    t0 = time.perf_counter()
    reg = compute_path(xs, ys, loss, cfg.alpha, grid, M=cfg.M if ris else 1, loadings=loadings,
                       **cfg.path_options())
    timing["full_data_path"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    if ris:
        outcome = ris_cv(reg, xs, ys, loss, cfg.alpha, K=cfg.K, R=cfg.R, seed=cfg.seed,
                         loadings=loadings, n_jobs=cfg.threads)
    else:
        outcome = naive_cv(reg, xs, ys, loss, cfg.alpha, K=cfg.K, R=cfg.R, metric=cfg.metric,
                           seed=cfg.seed, c_tau=cfg.c_tau, loadings=loadings, n_jobs=cfg.threads,
                           **{k: v for k, v in cfg.path_options().items() if k != "seed"})
    timing["cross_validation"] = time.perf_counter() - t0
    timing["total"] = sum(timing.values())
    sel = select_lambda(outcome, cfg.rule)
    rows = []
    for t, lam in enumerate(outcome.lambdas):
        for q in range(max(1, int(outcome.n_minima[t]))):
            rows.append([lam, q, outcome.metric, outcome.e_hat[t, q], outcome.sd[t, q],
                         t == sel.index and q == sel.q])
    chosen = reg[sel.index][sel.q]
    p = data.x.shape[1]
    b0, beta = _minimum_record(chosen, std, p)
    out = Path(args.out)
    write_csv(out / "curve.csv", ["lambda", "q", "metric", "e_hat", "sd", "selected_flag"], rows)
    write_json(out / "cv.json", {
        "command": "cv", "engine": outcome.engine, "metric": outcome.metric, "rule": cfg.rule,
        "config": _config_json(cfg), "predictors": list(data.names[1:]),
        "standardization": std.to_json(), "lambdas": outcome.lambdas, "loadings": loadings,
        "selection": {"lambda": sel.lam, "lambda_index": sel.index, "q": sel.q,
                      "e_hat": sel.e_hat, "sd": sel.sd},
        "coefficients": {"intercept": b0, "beta": beta},
        "n_minima": outcome.n_minima, "diagnostics": outcome.diagnostics})
    # wall-clock numbers vary run to run, so they live apart from the deterministic outputs
    write_json(out / "timing.json", {"command": "cv", "engine": outcome.engine,
                                     "seconds": timing})
    return 0


@dataclass
class SimulateConfig:
    n: int = 100
    p: int = 50
    error_family: str = "stable_1_5"
    snr: float = 1.0
    leverage_fraction: float = 0.2
    leverage_multiplier: float = 8.0
    contamination_fraction: float = 0.3
    contamination_snr: float = 10.0
    seed: int = 0


def cmd_simulate(args, cfg: SimulateConfig):
    try:
        sim = SimulationConfig(n=cfg.n, p=cfg.p, error_family=cfg.error_family, snr=cfg.snr,
                               leverage_fraction=cfg.leverage_fraction,
                               leverage_multiplier=cfg.leverage_multiplier,
                               contamination_fraction=cfg.contamination_fraction,
                               contamination_snr=cfg.contamination_snr, rng_seed=cfg.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    ds = simulate(sim)
    out = Path(args.out)
    names = [f"x{j + 1}" for j in range(ds.p)]
    write_csv(out / "dataset.csv", ["y", *names],
              ([yi, *xi] for yi, xi in zip(ds.response, ds.design)))
    write_json(out / "truth.json", {
        "command": "simulate", "config": asdict(cfg), "beta_true": ds.beta_true,
        "true_error_scale": ds.true_error_scale,
        "contaminated_rows": [rows.tolist() for rows in ds.contaminated_rows],
        "leverage_rows": ds.leverage_rows.tolist(),
        "contamination_columns": [[names[j] for j in cols] for cols in ds.contamination_columns],
        "leverage_multipliers": list(ds.leverage_multipliers)})
    return 0


@dataclass
class PathDemoConfig:
    rho: str = "bisquare"
    delta: float = 0.5
    b: float = 0.3
    n: int = 100
    sigma_c: float = 0.01
    sigma_star: float = 0.1
    beta_c: float = 0.5
    beta_star: float = 100.0
    seed: int = 0
    M: int = 2
    n_grid: int = 20_000
    rel_threshold: float = 10.0


def cmd_pathdemo(args, cfg: PathDemoConfig):
    if cfg.rho not in ("bisquare", "lqq", "hampel"):
        raise InputError(f"rho must be bisquare, lqq or hampel, got {cfg.rho!r}")
    if cfg.n_grid < 100 or cfg.M < 1:
        raise InputError("n_grid must be at least 100 and M at least 1")
    try:
        scenario = UnivariateScenario(cfg.sigma_c, cfg.sigma_star, cfg.beta_c, cfg.beta_star,
                                      cfg.b, cfg.n, calibrate_cutoff(cfg.rho, cfg.delta))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    x, y, _ = scenario.generate(cfg.seed)
    report = path_report(scenario, x, y, cfg.rel_threshold, n_grid=cfg.n_grid)
    pred_c, pred_s = scenario.predicted_minima(report.lambdas)
    se_c, se_s = scenario.branch_standard_errors(report.lambdas)
    rows = []
    for t, lam, mins, g in zip(range(len(report.lambdas)), report.lambdas, report.minima,
                               report.global_trace):
        for m in mins:
            star = abs(m.location - cfg.beta_star) < abs(m.location - cfg.beta_c)
            rows.append([lam, m.location, m.objective, m.location == g,
                         "star" if star else "c",
                         pred_s[t] if star else pred_c[t], se_s[t] if star else se_c[t]])
    reg = univariate_registry(scenario, x, y, 1, seed=cfg.seed)
    traced = np.array([m[0].beta[0] if m else np.nan for m in reg.minima])
    out = Path(args.out)
    write_csv(out / "fig_s1.csv", ["lambda", "location", "objective", "is_global", "branch",
                                   "predicted", "predicted_se"], rows)
    write_json(out / "report.json", {
        "command": "pathdemo", "config": asdict(cfg), "lambdas": report.lambdas,
        "n_minima": [len(m) for m in report.minima], "global_trace": report.global_trace,
        "discontinuities": [d._asdict() for d in report.discontinuities],
        "single_minimum_path": traced,
        "single_minimum_path_discontinuities": [
            d._asdict() for d in detect_discontinuities(traced, report.lambdas,
                                                        cfg.rel_threshold)]})
    return 0


def _config_json(cfg):
    d = asdict(cfg)
    d["lambdas"] = list(cfg.lambdas) if cfg.lambdas is not None else None
    return d


# ---------------------------------------------------------------- parser

_RUN_FLAGS = [
    ("--loss", str, "s (S-loss) or m (M-loss with fixed --scale)"),
    ("--rho", str, "bisquare, lqq or hampel"),
    ("--delta", float, "breakdown point / M-scale right-hand side"),
    ("--alpha", float, "elastic-net mixing, 1 = lasso"),
    ("--q", int, "number of lambda values"),
    ("--min-ratio", float, "smallest lambda as a fraction of lambda_max"),
    ("--lambdas", str, "explicit descending comma-separated lambda grid"),
    ("--M", int, "local minima retained per lambda"),
    ("--seed", int, "random seed"),
    ("--adaptive", str, "true for adaptive penalty loadings"),
    ("--exponent", float, "adaptive loading exponent"),
    ("--n-subsets", int, "random-subset starts"),
    ("--start-every", int, "regenerate starts at every k-th lambda"),
    ("--explore-iterations", int, "IRWLS iterations for screening fresh starts"),
    ("--explore-keep", int, "screened starts optimized to convergence"),
    ("--scale", float, "fixed residual scale of the M-loss"),
]
_CV_FLAGS = [
    ("--engine", str, "ris or naive"),
    ("--K", int, "folds"),
    ("--R", int, "replications"),
    ("--metric", str, "naive-CV metric: tau, rmspe or mape"),
    ("--c-tau", float, "tau-size cutoff"),
    ("--rule", str, "min or one-se"),
]


def _add(parser, specs):
    for flag, kind, text in specs:
        parser.add_argument(flag, type=kind, help=text, default=argparse.SUPPRESS,
                            dest=flag.lstrip("-").replace("-", "_"))


def _dataclass_flags(cfg_cls):
    specs = []
    for f in fields(cfg_cls):
        kind = {"int": int, "float": float}.get(str(f.type), str)
        specs.append(("--" + f.name.replace("_", "-"), kind, f"default {f.default!r}"))
    return specs


def build_parser():
    parser = argparse.ArgumentParser(prog="pensecv", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"pensecv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_threads=True):
        p.add_argument("--config", help="file of 'key = value' settings")
        p.add_argument("--out", default=".", help="output directory")
        if with_threads:
            p.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                           help="worker threads for the folds")
        p.add_argument("-v", "--verbose", action="store_true")

    fit = sub.add_parser("fit", help="penalized robust regression path")
    fit.add_argument("data", help="CSV file: header, response first")
    common(fit)
    _add(fit, _RUN_FLAGS)
    fit.add_argument("--no-standardize", dest="standardize", action="store_const",
                     const="false", default=argparse.SUPPRESS)

    cv = sub.add_parser("cv", help="cross-validated choice of lambda")
    cv.add_argument("data", help="CSV file: header, response first")
    common(cv)
    _add(cv, _RUN_FLAGS + _CV_FLAGS)
    cv.add_argument("--no-standardize", dest="standardize", action="store_const",
                    const="false", default=argparse.SUPPRESS)

    sim = sub.add_parser("simulate", help="contaminated heavy-tailed regression data")
    common(sim, with_threads=False)
    _add(sim, _dataclass_flags(SimulateConfig))

    demo = sub.add_parser("pathdemo", help="two-population non-smooth path demonstration")
    common(demo, with_threads=False)
    _add(demo, _dataclass_flags(PathDemoConfig))
    return parser


_COMMANDS = {
    "fit": (cmd_fit, RunConfig),
    "cv": (cmd_cv, RunConfig),
    "simulate": (cmd_simulate, SimulateConfig),
    "pathdemo": (cmd_pathdemo, PathDemoConfig),
}
_GENERIC = {"command", "data", "config", "out", "verbose"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    handler, cfg_cls = _COMMANDS[args.command]
    kinds = {f.name: str(f.type) for f in fields(cfg_cls)}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        flags = {k: v for k, v in vars(args).items() if k not in _GENERIC}
        cfg = build_config(cfg_cls, file_values, flags, kinds)
        if isinstance(cfg, RunConfig):
            cfg.validate()
        Path(args.out).mkdir(parents=True, exist_ok=True)
        with np.errstate(all="ignore"):
            return handler(args, cfg)
    except (InputError, KTooLarge, AlphaZero, ValueError) as exc:
        print(f"pensecv: error: {exc}", file=sys.stderr)
        return 2
    except (PenseError, FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"pensecv: numerical failure: {exc}", file=sys.stderr)
        return 3
