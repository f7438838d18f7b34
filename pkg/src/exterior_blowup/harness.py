"""Run configuration, single runs, epsilon sweeps, scaling fits and reports."""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import tomli

from . import odi
from .certifier import (CertifierOptions, certify, inequality_chain, write_certificate_json,
                        write_chain_csv)
from .errors import (AdmissibilityError, BlowupLabError, ConfigError, FitError, InputError,
                     InvariantError)
from .model import InitialData, ModelParams
from .solver import (LifespanEstimate, RadialGrid, SolverOptions, detect_blowup, evolve,
                     write_series_csv, write_snapshots)

log = logging.getLogger(__name__)

_MODEL_KEYS = {"tau", "zeta", "lambda", "p", "epsilon", "dimension"}
_GRID_KEYS = {"r_max", "h", "n"}
_SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverOptions)}
_CERT_KEYS = ({f.name for f in dataclasses.fields(CertifierOptions)}
              | {"enabled", "chain", "chain_points", "chain_tol", "chain_fraction"})
_SWEEP_KEYS = {"epsilons", "eps_max", "eps_min", "n", "workers"}
_OUTPUT_KEYS = {"dir", "snapshots", "snapshot_format"}
_SECTIONS = {"model": _MODEL_KEYS, "data": None, "grid": _GRID_KEYS, "solver": _SOLVER_KEYS,
             "certifier": _CERT_KEYS, "sweep": _SWEEP_KEYS, "output": _OUTPUT_KEYS}


def _parse_lambda(value, key="model.lambda") -> complex:
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number or [re, im], got {value!r}")
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, list) and len(value) == 2 and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return complex(value[0], value[1])
    raise ConfigError(f"{key}: expected a number or [re, im], got {value!r}")


def _check_types(section: str, block: dict, template) -> dict:
    """Coerce values to the type of the dataclass defaults in ``template``."""
    defaults = {f.name: f.default for f in dataclasses.fields(template)}
    out = {}
    for key, value in block.items():
        if key not in defaults:
            continue
        want = type(defaults[key])
        if want is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"{section}.{key}: expected a boolean, got {value!r}")
        elif want in (int, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
            if want is int and not float(value).is_integer():
                raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
            value = want(value)
        elif want is tuple:
            if not isinstance(value, list):
                raise ConfigError(f"{section}.{key}: expected a list, got {value!r}")
            value = tuple(float(v) for v in value)
        out[key] = value
    return out


@dataclass
class RunConfig:
    model: dict
    data: dict
    grid: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    certifier: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a table")
        for name, block in raw.items():
            if name not in _SECTIONS:
                raise ConfigError(f"unknown section {name!r}")
            if not isinstance(block, dict):
                raise ConfigError(f"{name}: expected a table")
            allowed = _SECTIONS[name]
            if allowed is not None:
                for key in block:
                    if key not in allowed:
                        raise ConfigError(f"unknown key {name}.{key}")
        for required in ("model", "data"):
            if required not in raw:
                raise ConfigError(f"missing section {required!r}")
        cfg = cls(**{k: dict(v) for k, v in raw.items()})
        cfg.validate()
        return cfg

    @classmethod
    def from_toml(cls, path) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                raw = tomli.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        return cls.from_dict(raw)

    def validate(self) -> None:
        self.params()
        self.initial_data()
        self.radial_grid()
        self.solver_options()
        self.certifier_options()
        self.epsilons()

    def params(self, epsilon: Optional[float] = None) -> ModelParams:
        m = self.model
        kw = {}
        for key in ("tau", "dimension"):
            if key in m:
                if isinstance(m[key], bool) or not isinstance(m[key], int):
                    raise ConfigError(f"model.{key}: expected an integer, got {m[key]!r}")
                kw[key] = m[key]
        for key in ("zeta", "p", "epsilon"):
            if key in m:
                if isinstance(m[key], bool) or not isinstance(m[key], (int, float)):
                    raise ConfigError(f"model.{key}: expected a number, got {m[key]!r}")
                kw[key] = float(m[key])
        if "lambda" in m:
            kw["lam"] = _parse_lambda(m["lambda"])
        if epsilon is not None:
            kw["epsilon"] = float(epsilon)
        try:
            return ModelParams(**kw)
        except InputError as exc:
            raise ConfigError(f"model: {exc}") from exc

    def initial_data(self) -> InitialData:
        if "profile" not in self.data:
            raise ConfigError("missing key data.profile")
        try:
            return InitialData.from_spec(self.data)
        except (InputError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"data: {exc}") from exc

    def radial_grid(self) -> RadialGrid:
        g = self.grid
        for key, value in g.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"grid.{key}: expected a number, got {value!r}")
        r_max = float(g.get("r_max", self.initial_data().support[1] + 25.0))
        try:
            if "n" in g:
                if "h" in g:
                    raise ConfigError("grid: give either grid.h or grid.n, not both")
                return RadialGrid(r_max=r_max, n=int(g["n"]))
            return RadialGrid.from_spacing(r_max, float(g.get("h", 0.05)))
        except InputError as exc:
            raise ConfigError(f"grid: {exc}") from exc

    def solver_options(self) -> SolverOptions:
        return SolverOptions(**_check_types("solver", self.solver, SolverOptions))

    def certifier_options(self) -> CertifierOptions:
        return CertifierOptions(**_check_types("certifier", self.certifier, CertifierOptions))

    @property
    def certify_enabled(self) -> bool:
        return bool(self.certifier.get("enabled", True))

    @property
    def out_dir(self) -> Path:
        return Path(self.output.get("dir", "out"))

    def epsilons(self) -> list:
        s = self.sweep
        if not s:
            return []
        if "epsilons" in s:
            if any(k in s for k in ("eps_max", "eps_min", "n")):
                raise ConfigError("sweep: give sweep.epsilons or a log range, not both")
            eps = s["epsilons"]
            if not isinstance(eps, list) or any(
                    isinstance(e, bool) or not isinstance(e, (int, float)) for e in eps):
                raise ConfigError("sweep.epsilons: expected a list of numbers")
            eps = [float(e) for e in eps]
        elif {"eps_max", "eps_min", "n"} <= set(s):
            if not isinstance(s["n"], int) or s["n"] < 1:
                raise ConfigError("sweep.n: expected a positive integer")
            if not (s["eps_max"] > 0 and s["eps_min"] > 0):
                raise ConfigError("sweep.eps_min and sweep.eps_max must be positive")
            eps = [float(e) for e in np.geomspace(s["eps_max"], s["eps_min"], s["n"])]
        elif "workers" in s and len(s) == 1:
            eps = []
        else:
            missing = sorted({"eps_max", "eps_min", "n"} - set(s))
            raise ConfigError(f"missing key sweep.{missing[0]}")
        if any(not e > 0 for e in eps):
            raise ConfigError("sweep.epsilons: values must be positive")
        if len(set(eps)) != len(eps):
            raise ConfigError("sweep.epsilons: values must be distinct")
        return eps

    def with_epsilon(self, epsilon: float) -> "RunConfig":
        model = dict(self.model, epsilon=float(epsilon))
        return dataclasses.replace(self, model=model)


@dataclass
class SweepRecord:
    epsilon: float
    lifespan: LifespanEstimate
    bound: Optional[odi.ODIBound] = None
    meta: dict = field(default_factory=dict)
    error: Optional[str] = None

    def as_dict(self) -> dict:
        return {"epsilon": self.epsilon, "lifespan": self.lifespan.as_dict(),
                "bound": None if self.bound is None else self.bound.as_dict(),
                "meta": self.meta, "error": self.error}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepRecord":
        bound = d.get("bound")
        return cls(epsilon=float(d["epsilon"]), lifespan=LifespanEstimate.from_dict(d["lifespan"]),
                   bound=None if bound is None else odi.ODIBound.from_dict(bound),
                   meta=dict(d.get("meta", {})), error=d.get("error"))

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SweepRecord":
        return cls.from_dict(json.loads(text))


def run_dir_name(epsilon: float) -> str:
    return f"eps_{epsilon:.6e}"


def run_single(cfg: RunConfig, out_dir=None, certify_run: Optional[bool] = None) -> SweepRecord:
    """Model, solver and certifier for the configured epsilon; persists per-run files."""
    params = cfg.params()
    data = cfg.initial_data()
    grid = cfg.radial_grid()
    sopts = cfg.solver_options()
    copts = cfg.certifier_options()
    want_cert = cfg.certify_enabled if certify_run is None else certify_run
    want_cert = want_cert and params.lam != 0
    want_chain = want_cert and bool(cfg.certifier.get("chain", False))
    keep_snaps = bool(cfg.output.get("snapshots", False))
    sopts = dataclasses.replace(sopts, store_snapshots=keep_snaps or want_chain)
    eps = params.epsilon
    try:
        report = certify(params, data, copts) if want_cert else None
        traj = evolve(params, data, grid, sopts)
        est = detect_blowup(traj, params, sopts.M_threshold, sopts.dt_contraction)
        meta = {"r_max": float(traj.meta["r_max"]), "n": int(traj.meta["n"]),
                "h": float(traj.meta["h"]), "steps": int(traj.meta["steps"]),
                "dt_min": float(np.min(traj.dt[1:])) if traj.dt.size > 1 else None,
                "dt_max": float(np.max(traj.dt[1:])) if traj.dt.size > 1 else None,
                "enlargements": int(traj.enlargements), "boundary_leak": float(traj.boundary_leak),
                "stop_reason": traj.stop_reason}
        if report is not None:
            meta["delta"] = float(report.delta)
            meta["C6"] = float(report.C6)
        if want_chain:
            horizon = est.T_lo if est.blew_up else traj.t_final
            top = float(cfg.certifier.get("chain_fraction", 0.8)) * horizon
            if top > copts.R0:
                R_list = np.geomspace(copts.R0, top, int(cfg.certifier.get("chain_points", 10)))
                rows = inequality_chain(traj, params, data, R_list, copts,
                                        constants=report.constants,
                                        tol=float(cfg.certifier.get("chain_tol", 0.05)),
                                        angle=report.angle, c0=report.c0)
                report.chain_residuals = rows
                meta["chain_min_rel_slack"] = float(min(r["rel_slack"] for r in rows))
                meta["chain_passed"] = all(r["passed"] for r in rows)
    except BlowupLabError as exc:
        try:
            wrapped = type(exc)(f"[epsilon={eps!r}] {exc}")
        except TypeError:
            raise exc
        raise wrapped from exc
    if out_dir is not None:
        run_dir = Path(out_dir) / "runs" / run_dir_name(eps)
        run_dir.mkdir(parents=True, exist_ok=True)
        write_series_csv(traj, run_dir / "series.csv")
        if keep_snaps:
            fmt = cfg.output.get("snapshot_format", "csv")
            write_snapshots(traj, run_dir / f"snapshots.{fmt}", fmt)
        if report is not None:
            write_certificate_json(report, run_dir / "certificate.json")
            if report.chain_residuals:
                write_chain_csv(report.chain_residuals, run_dir / "chain.csv")
    return SweepRecord(epsilon=eps, lifespan=est,
                       bound=None if report is None else report.odi_bound, meta=meta)


def _run_one(cfg: RunConfig, epsilon: float, out_dir) -> SweepRecord:
    try:
        return run_single(cfg.with_epsilon(epsilon), out_dir)
    except BlowupLabError as exc:
        log.warning("epsilon=%r failed: %s", epsilon, exc)
        return SweepRecord(epsilon=epsilon,
                           lifespan=LifespanEstimate("Inconclusive", reason=str(exc)),
                           error=f"{type(exc).__name__}: {exc}")


def sweep(cfg: RunConfig, out_dir=None, workers: Optional[int] = None) -> list:
    """One record per configured epsilon, sorted by epsilon descending."""
    eps_list = cfg.epsilons()
    if not eps_list:
        log.warning("sweep: empty epsilon list")
        return []
    workers = workers or int(cfg.sweep.get("workers", 1))
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, cfg, e, out_dir) for e in eps_list]
            records = [f.result() for f in futures]
    else:
        records = [_run_one(cfg, e, out_dir) for e in eps_list]
    return sorted(records, key=lambda rec: -rec.epsilon)


@dataclass
class FitReport:
    model: str
    slope: float
    intercept: float
    r2: float
    n: int
    theory_slope: Optional[float] = None
    log_coef: Optional[float] = None
    dominance: Optional[bool] = None
    violations: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _lstsq(X, y):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0
    return coef, r2


def check_dominance(records) -> list:
    """Epsilons whose measured blow-up time exceeds the certified bound."""
    return [r.epsilon for r in records
            if r.bound is not None and r.lifespan.blew_up and not r.bound.dominates(r.lifespan.T_est)]


def fit_scaling(records, model: str = "PowerLog", p: Optional[float] = None,
                log_regressor: bool = False, strict: bool = True) -> FitReport:
    """Least-squares growth law of the measured lifespans.

    PowerLog: log T = a + b log(1/eps) [+ c log log(1/eps)]; ExpExp: log log T = a + b/eps.
    The slope is reported next to the theoretical ceiling (p-1)/(2-p); dominance of
    every measured T by its certified bound is checked and, if ``strict``, enforced.
    """
    blown = [r for r in records if r.lifespan.blew_up]
    if len(blown) < 4:
        raise FitError(f"need at least 4 blow-up records, got {len(blown)}")
    eps = np.array([r.epsilon for r in blown])
    T = np.array([r.lifespan.T_est for r in blown])
    if model == "PowerLog":
        x = np.log(1.0 / eps)
        cols = [np.ones_like(x), x]
        if log_regressor:
            if np.any(x <= 0):
                raise FitError("the log log(1/eps) regressor needs eps < 1")
            cols.append(np.log(x))
        coef, r2 = _lstsq(np.column_stack(cols), np.log(T))
        theory = (p - 1.0) / (2.0 - p) if p is not None and p < 2 else None
        log_coef = float(coef[2]) if log_regressor else None
    elif model == "ExpExp":
        if np.any(T <= 1):
            raise FitError("ExpExp fit needs T > 1")
        coef, r2 = _lstsq(np.column_stack([np.ones_like(eps), 1.0 / eps]), np.log(np.log(T)))
        theory, log_coef = None, None
    else:
        raise FitError(f"unknown fit model {model!r}")
    violations = check_dominance(records)
    has_bounds = any(r.bound is not None for r in records)
    if strict and violations:
        raise InvariantError(f"measured lifespan exceeds the certified bound at eps={violations}")
    return FitReport(model=model, slope=float(coef[1]), intercept=float(coef[0]), r2=float(r2),
                     n=len(blown), theory_slope=theory, log_coef=log_coef,
                     dominance=(not violations) if has_bounds else None, violations=violations)


SWEEP_COLUMNS = ("epsilon", "status", "T_est", "T_lo", "T_hi", "t_end", "bound_case",
                 "bound_log_T", "bound_loglog_T", "delta", "r_max", "n", "steps", "dt_min",
                 "error")


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_sweep_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in records:
            ls, b, m = r.lifespan, r.bound, r.meta
            w.writerow([_cell(v) for v in (
                r.epsilon, ls.status, ls.T_est, ls.T_lo, ls.T_hi, ls.t_end,
                None if b is None else b.case_tag, None if b is None else b.log_T,
                None if b is None else b.loglog_T, m.get("delta"), m.get("r_max"), m.get("n"),
                m.get("steps"), m.get("dt_min"), r.error)])


_PLOT = """# gnuplot script: lifespan versus epsilon on log axes
set datafile separator ","
set key autotitle columnhead
set logscale x
set xlabel "epsilon"
set ylabel "log T"
set title "measured lifespan and certified upper bound"
plot "{csv}" using 1:(log($3)) with linespoints title "measured T_est", \\
     "{csv}" using 1:8 with lines title "certified bound (log T)"
"""


def emit_report(records, fits, out_dir) -> dict:
    """summary.json, sweep.csv and a plot script; returns the written paths."""
    if not records:
        raise InputError("emit_report needs at least one record")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    records = sorted(records, key=lambda rec: -rec.epsilon)
    paths = {"summary": out / "summary.json", "sweep": out / "sweep.csv", "plot": out / "plot.gp"}
    summary = {"records": [r.as_dict() for r in records]}
    if fits:
        summary["fits"] = [f.as_dict() for f in fits]
    with open(paths["summary"], "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_sweep_csv(records, paths["sweep"])
    with open(paths["plot"], "w") as fh:
        fh.write(_PLOT.format(csv="sweep.csv"))
    series = sorted((out / "runs").glob("*/series.csv")) if (out / "runs").is_dir() else []
    paths["series"] = series
    return paths


def load_summary(out_dir) -> tuple:
    """Records and fit dicts from a summary.json written by ``emit_report``."""
    path = Path(out_dir) / "summary.json"
    if not path.is_file():
        raise ConfigError(f"no summary.json in {out_dir}")
    with open(path) as fh:
        raw = json.load(fh)
    return [SweepRecord.from_dict(d) for d in raw.get("records", [])], raw.get("fits", [])


def default_workers() -> int:
    return max(1, min(os.cpu_count() or 1, 8))
