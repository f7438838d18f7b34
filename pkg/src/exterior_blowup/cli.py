"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 admissibility error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import odi
from .certifier import certify, write_certificate_json
from .cutoff import CutoffSpec, estimate_constants, log_compatible
from .errors import (AdmissibilityError, BlowupLabError, ConfigError, FitError, InputError)
from .harness import (RunConfig, emit_report, fit_scaling, load_summary, run_single, sweep)
from .solver import write_series_csv

EXIT_OK, EXIT_CONFIG, EXIT_ADMISSIBILITY, EXIT_NUMERICAL = 0, 2, 3, 4


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out) if args.out else cfg.out_dir


def cmd_simulate(args) -> int:
    cfg = RunConfig.from_toml(args.config)
    if args.epsilon is not None:
        cfg = cfg.with_epsilon(args.epsilon)
    out = _out_dir(args, cfg)
    rec = run_single(cfg, out, certify_run=False)
    _print(rec.as_dict())
    return EXIT_OK


def cmd_certify(args) -> int:
    cfg = RunConfig.from_toml(args.config)
    if args.epsilon is not None:
        cfg = cfg.with_epsilon(args.epsilon)
    report = certify(cfg.params(), cfg.initial_data(), cfg.certifier_options())
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_certificate_json(report, out / "certificate.json")
    _print({"case_tag": report.odi_bound.case_tag, "delta": report.delta,
            "T_upper": report.odi_bound.symbolic, "C6": report.C6,
            "display": report.theorem_bound_display})
    return EXIT_OK


def _fits(records, p):
    fits = []
    for model in ("PowerLog", "ExpExp"):
        try:
            fits.append(fit_scaling(records, model, p=p, strict=False))
        except FitError as exc:
            logging.getLogger(__name__).info("no %s fit: %s", model, exc)
    return fits


def cmd_sweep(args) -> int:
    cfg = RunConfig.from_toml(args.config)
    out = _out_dir(args, cfg)
    records = sweep(cfg, out, workers=args.workers)
    if not records:
        print("empty sweep: nothing to report", file=sys.stderr)
        return EXIT_OK
    fits = _fits(records, cfg.params().p)
    paths = emit_report(records, fits, out)
    for rec in records:
        T = rec.lifespan.T_est
        bound = rec.bound.symbolic if rec.bound is not None else "-"
        print(f"eps={rec.epsilon:.6g}  {rec.lifespan.status:12s}  T_est={T!r}  bound={bound}")
    for fit in fits:
        print(f"{fit.model}: slope={fit.slope:.6g}  theory={fit.theory_slope}  r2={fit.r2:.4f}")
    print(f"wrote {paths['summary']} and {paths['sweep']}")
    if any(f.dominance is False for f in fits):
        print("certified bound violated by a measured lifespan", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_odi_bound(args) -> int:
    params = odi.ODIParams(delta=args.delta, C0=args.c0, R1=args.r1, theta=args.theta,
                           kappa=args.kappa, p=args.p)
    out = {"numeric": odi.lifespan_bound_numeric(params).as_dict()}
    if args.closed_form:
        out["closed_form"] = odi.lifespan_bound_closed_form(params, delta0=args.delta0).as_dict()
    _print(out)
    return EXIT_OK


def cmd_cutoff_verify(args) -> int:
    R_list = [float(x) for x in args.r_list.split(",") if x.strip()]
    spec = CutoffSpec(args.p)
    cons = estimate_constants(spec, R_list, args.samples, args.seed)
    spread = {}
    for key in ("C1", "C2", "C3", "C4"):
        vals = [d[key] for _, d in cons.per_R]
        spread[key] = (max(vals) - min(vals)) / max(vals) if max(vals) > 0 else 0.0
    r = np.geomspace(1.0, 1e3, 10_001)
    ok_log = bool(np.all(log_compatible(r)))
    stable = all(v <= 0.05 for v in spread.values())
    _print({"constants": cons.as_dict(), "per_R": [{"R": R, **d} for R, d in cons.per_R],
            "relative_spread": spread, "stable": stable, "log_compatible": ok_log})
    return EXIT_OK if stable and ok_log else EXIT_NUMERICAL


def cmd_report(args) -> int:
    records, _ = load_summary(args.dir)
    if not records:
        print("summary has no records", file=sys.stderr)
        return EXIT_OK
    p = args.p
    fits = _fits(records, p)
    paths = emit_report(records, fits, args.dir)
    for fit in fits:
        print(f"{fit.model}: slope={fit.slope:.6g}  theory={fit.theory_slope}  r2={fit.r2:.4f}")
    print(f"wrote {paths['summary']}, {paths['sweep']} and {paths['plot']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="exterior-blowup",
                                 description="Blow-up lifespans on the exterior of the unit disk.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn, help_ in (("simulate", cmd_simulate, "evolve one configuration"),
                            ("certify", cmd_certify, "certified lifespan bound for one configuration")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config")
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--out")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("sweep", help="epsilon sweep with fits and report")
    sp.add_argument("config")
    sp.add_argument("--out")
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("odi-bound", help="lifespan bound from criterion constants")
    sp.add_argument("--delta", type=float, required=True)
    sp.add_argument("--c0", type=float, required=True)
    sp.add_argument("--r1", type=float, default=math.e)
    sp.add_argument("--theta", type=float, default=0.0)
    sp.add_argument("--kappa", type=float, default=1.0)
    sp.add_argument("--p", type=float, default=2.0)
    sp.add_argument("--closed-form", action="store_true")
    sp.add_argument("--delta0", type=float, default=0.1)
    sp.set_defaults(func=cmd_odi_bound)

    sp = sub.add_parser("cutoff-verify", help="estimate and check the cutoff constants")
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--r-list", default="10,100,1000")
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_cutoff_verify)

    sp = sub.add_parser("report", help="rebuild fits and report files from a sweep directory")
    sp.add_argument("dir")
    sp.add_argument("--p", type=float)
    sp.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AdmissibilityError as exc:
        print(f"admissibility error: {exc}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    except (BlowupLabError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
