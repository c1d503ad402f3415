"""Command-line entry point: ``randpress <command> --config run.json``.

Each run writes a JSON result record (resolved configuration, its digest,
the result and diagnostics) and, for commands with per-n or per-T data, a
CSV with the columns ``n_or_T, beta, sample, raw_value, averaged_value``.

Exit status: 0 success, 1 invalid configuration, 2 estimation failure,
3 failed verification suite or replay mismatch.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import __version__
from .config import COMMANDS, SUITE_NAMES, RunConfig, apply_overrides, config_digest, parse_config
from .errors import (
    BracketFailure,
    ConfigError,
    EnumerationLimit,
    EstimationFailed,
    InsufficientTrajectory,
    InvalidArgument,
    ScanInconclusive,
)
from .estimators import (
    EstimatorConfig,
    critical_exponent_scan,
    fiber_pressure,
    induced_pressure_direct,
    nonlinear_induced_pressure,
    nonlinear_pressure,
    pressure_curve,
    pseudo_inverse_solve,
)
from .measures import equilibrium_gap, optimize_objective, variational_objective
from .verification import run_consistency_suite, run_property_suite, run_reduction_suite

log = logging.getLogger("randpress")

EXIT_OK, EXIT_VALIDATION, EXIT_ESTIMATION, EXIT_SUITE = 0, 1, 2, 3
CSV_COLUMNS = ("n_or_T", "beta", "sample", "raw_value", "averaged_value")
DEFAULT_SUITE_COUNTS = {"reduction": 20, "property": 50}


def _fmt(x):
    if x is None or x == "":
        return ""
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    x = float(x)
    return "nan" if math.isnan(x) else "%.12g" % x


def _estimate_rows(est, beta=""):
    rows = []
    for i, x in enumerate(est.xs):
        for j in range(est.raw.shape[0]):
            rows.append((x, beta, j, est.raw[j, i], est.averaged[i]))
    return rows


def run_command(cfg: RunConfig):
    """Evaluate the configured command; returns ``(result, csv_rows, exit_status)``."""
    name = cfg.command.name
    system, est = cfg.system, cfg.estimator
    if est is None:
        est = EstimatorConfig()
    phi, psi, F = cfg.Phi, cfg.scaling, cfg.nonlinearity
    cmd = cfg.command

    if name == "pressure":
        e = fiber_pressure(system, cfg.potential, est)
        return {"estimate": e.to_dict()}, _estimate_rows(e), EXIT_OK
    if name == "induced":
        e = induced_pressure_direct(system, cfg.potential, psi, est)
        return {"estimate": e.to_dict()}, _estimate_rows(e), EXIT_OK
    if name == "nonlinear":
        e = nonlinear_pressure(system, phi, F, est)
        return {"estimate": e.to_dict()}, _estimate_rows(e), EXIT_OK
    if name == "nonlinear-induced":
        r = nonlinear_induced_pressure(system, phi, psi, F, est, cmd.method)
        if cmd.method == "direct":
            return {"estimate": r.to_dict()}, _estimate_rows(r), EXIT_OK
        return {"root": r.to_dict()}, None, EXIT_OK
    if name == "curve":
        c = pressure_curve(system, phi, psi, cmd.beta_grid, est, F)
        rows = [(c.n, b, j, c.raw[j, i], c.values[i])
                for i, b in enumerate(c.betas) for j in range(c.raw.shape[0])]
        return {"curve": c.to_dict()}, rows, EXIT_OK
    if name == "solve":
        r = pseudo_inverse_solve(system, phi, psi, est, F)
        return {"root": r.to_dict()}, None, EXIT_OK
    if name == "scan":
        s = critical_exponent_scan(system, phi, psi, est, cmd.beta_grid, F)
        rows = [(T, b, "mean", s.log_values[i, j], s.log_values[i, j])
                for i, b in enumerate(s.betas) for j, T in enumerate(s.Ts)]
        return {"scan": s.to_dict()}, rows, EXIT_OK
    if name == "variational":
        res = optimize_objective(system, cmd.flavor, phi, psi, F, cmd.budget)
        out = {"variational": res.to_dict()}
        if cfg.measure is not None:
            out["objective_at_measure"] = variational_objective(cfg.measure, cmd.flavor, phi, psi, F)
        return out, None, EXIT_OK
    if name == "gap":
        fl = cmd.flavor
        if fl == "linear":
            ref = fiber_pressure(system, cfg.potential, est)
        elif fl == "nonlinear":
            ref = nonlinear_pressure(system, phi, F, est)
        else:
            ref = pseudo_inverse_solve(system, phi, psi, est, F if fl == "nonlinear-induced" else None)
        gap = equilibrium_gap(system, fl, phi, ref, psi, F, cmd.budget)
        return {"gap": gap, "reference": ref.to_dict()}, None, EXIT_OK
    if name == "verify":
        return run_suite(cmd.suite, cmd.seed, cmd.count)
    raise InvalidArgument(f"unknown command {name!r}")


def run_suite(suite, seed=0, count=None):
    if suite == "consistency":
        rep = run_consistency_suite()
    elif suite == "reduction":
        rep = run_reduction_suite(seed, count or DEFAULT_SUITE_COUNTS[suite])
    elif suite == "property":
        rep = run_property_suite(seed, count or DEFAULT_SUITE_COUNTS[suite])
    else:
        raise InvalidArgument(f"unknown suite {suite!r}")
    log.info(rep.summary())
    return {"report": rep.to_dict()}, None, (EXIT_OK if rep.passed else EXIT_SUITE)


def make_record(cfg: RunConfig, result: dict, status: int) -> dict:
    return {
        "randpress_version": __version__,
        "command": cfg.command.name,
        "config": cfg.document,
        "config_digest": cfg.digest,
        "exit_status": status,
        "result": result,
    }


def canonical(obj) -> str:
    """Stable text form used for bitwise comparison of results (floats round-trip exactly)."""
    return json.dumps(obj, sort_keys=True, allow_nan=True)


def write_outputs(cfg: RunConfig, record: dict, rows, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    name = cfg.command.name
    if name == "verify":
        name = f"verify-{cfg.command.suite}"
    stem = f"{cfg.output.prefix}{name}"
    path = out_dir / f"{stem}.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True, allow_nan=True) + "\n")
    written = [path]
    if rows is not None and cfg.output.csv:
        cpath = out_dir / f"{stem}.csv"
        with cpath.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in rows:
                w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
        written.append(cpath)
    return written


def replay(record_path: Path) -> tuple:
    """Re-run a result record's configuration and compare results bitwise."""
    record = json.loads(record_path.read_text())
    doc = record["config"]
    if config_digest(doc) != record.get("config_digest"):
        raise ConfigError("record config does not match its digest")
    cfg = parse_config(doc)
    result, _, status = run_command(cfg)
    same = canonical(result) == canonical(record["result"]) and status == record.get("exit_status")
    return same, result


def _build_parser():
    p = argparse.ArgumentParser(prog="randpress", description="Pressures of random subshifts of finite type.")
    p.add_argument("--version", action="version", version=f"randpress {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", type=Path, required=config_required, help="JSON run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a dotted config path (repeatable)")
        sp.add_argument("--seed", type=int, help="override every seed")
        sp.add_argument("--out", type=Path, help="artifact directory (default $RANDPRESS_OUT or ./results)")
        sp.add_argument("--threads", type=int, help="worker cap for per-sample evaluation")
        sp.add_argument("--quiet", action="store_true")

    for name in COMMANDS:
        if name == "verify":
            continue
        common(sub.add_parser(name))
    v = sub.add_parser("verify")
    v.add_argument("suite", choices=SUITE_NAMES)
    v.add_argument("--count", type=int)
    common(v, config_required=False)
    r = sub.add_parser("replay", help="re-run a result record and compare bitwise")
    r.add_argument("record", type=Path)
    r.add_argument("--quiet", action="store_true")
    return p


def _load(args) -> RunConfig:
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}", kind="parse") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            msg = f"{args.config}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            raise ConfigError(msg, [msg], kind="parse") from None
    else:
        doc = {"version": 1}
    doc = apply_overrides(doc, args.set, args.seed)
    doc.setdefault("command", {})["name"] = args.command
    if args.command == "verify":
        doc["command"]["suite"] = args.suite
        if args.count is not None:
            doc["command"]["count"] = args.count
    if args.threads is not None:
        doc.setdefault("estimator", {})["threads"] = args.threads
    return parse_config(doc)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "replay":
            same, _ = replay(args.record)
            log.info("replay %s: %s", args.record, "identical" if same else "MISMATCH")
            return EXIT_OK if same else EXIT_SUITE
        cfg = _load(args)
        result, rows, status = run_command(cfg)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"{exc.kind} error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (InvalidArgument, InsufficientTrajectory) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EstimationFailed, BracketFailure, ScanInconclusive, EnumerationLimit) as exc:
        print(f"estimation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    out_dir = args.out or Path(cfg.output.dir or os.environ.get("RANDPRESS_OUT") or "results")
    record = make_record(cfg, result, status)
    for path in write_outputs(cfg, record, rows, out_dir):
        log.info("wrote %s", path)
    return status


if __name__ == "__main__":
    sys.exit(main())
