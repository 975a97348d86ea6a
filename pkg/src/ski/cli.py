"""Command-line entry point: ``ski run | benchmark | relevance-report | print-config``.

Exit codes: 0 success, 1 configuration or input error, 2 filter failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import PRESETS, RunConfig, apply_overrides, load_config, make_scenario
from .errors import ConfigError, SkiError
from .scenarios.runner import run_identification

EXIT_OK, EXIT_CONFIG, EXIT_FILTER = 0, 1, 2
TABLE_COLUMNS = ("method", "mean_l1_error_median", "per_step_ms_median", "seeds")
RELEVANCE_COLUMNS = ("basis", "variance", "selected")


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, args.set or [])
    if getattr(args, "method", None):
        cfg = apply_overrides(cfg, [f"method={json.dumps(args.method)}"])
    if getattr(args, "seed", None) is not None:
        cfg = apply_overrides(cfg, [f"seeds=[{args.seed}]"])
    if getattr(args, "workers", None) is not None:
        cfg = apply_overrides(cfg, [f"workers={args.workers}"])
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    out = args.out or cfg.output_dir or os.environ.get("SKI_OUT_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run_cell(cfg: RunConfig, method: str, seed: int, out: Path | None = None):
    """One (scenario, method, seed) run; writes artifacts when ``out`` is given.

    Returns the metrics as a dict. Plant divergence is reported like a filter
    failure.
    """
    scenario = make_scenario(cfg)
    try:
        trace, metrics = run_identification(
            scenario, method, seed, cfg.filter, cfg.ard, cfg.sindy_lambda
        )
    except SkiError as exc:
        result = {
            "method": method, "scenario": cfg.scenario, "seed": seed,
            "mean_l1_error": None, "l1_relative_error_L": None, "per_step_ms": None,
            "selected_basis": [], "failed": True,
            "error": f"{type(exc).__name__}: {exc}",
        }
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / "metrics.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
        return result
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        trace.to_csv(out / "trace.csv")
        trace.timing_to_csv(out / "timing.csv")
        metrics.to_json(out / "metrics.json")
    return asdict(metrics)


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args, cfg)
    seed = cfg.seeds[0]
    (out / "config.json").write_text(cfg.to_json())
    result = run_cell(cfg, cfg.method, seed, out)
    if result["failed"]:
        print(f"run failed: {result['error']}", file=sys.stderr)
        return EXIT_FILTER
    print(
        f"{cfg.scenario}/{cfg.method} seed={seed}: "
        f"mean_l1_error={result['mean_l1_error']:.4g} "
        f"per_step_ms={result['per_step_ms'] if result['per_step_ms'] is None else round(result['per_step_ms'], 3)} "
        f"selected={result.get('selected_labels', result['selected_basis'])}"
    )
    return EXIT_OK


def _cell_job(job):
    cfg, method, seed, out = job
    return run_cell(cfg, method, seed, out)


def aggregate(results, methods) -> list:
    rows = []
    for m in methods:
        ok = [r for r in results if r["method"] == m and not r["failed"]]
        err = [r["mean_l1_error"] for r in ok if r["mean_l1_error"] is not None]
        ms = [r["per_step_ms"] for r in ok if r["per_step_ms"] is not None]
        rows.append({
            "method": m,
            "mean_l1_error_median": float(np.median(err)) if err else None,
            "per_step_ms_median": float(np.median(ms)) if ms else None,
            "seeds": len(ok),
        })
    return rows


def write_table(rows, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if row[k] is None else row[k] for k in TABLE_COLUMNS})


def cmd_benchmark(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args, cfg)
    (out / "config.json").write_text(cfg.to_json())
    jobs = [
        (cfg, m, s, out / "cells" / f"{m}_seed{s}")
        for m in cfg.methods for s in cfg.seeds
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_cell_job, jobs))
    else:
        results = [_cell_job(j) for j in jobs]
    for r in results:
        if r["failed"]:
            print(f"cell {r['method']} seed={r['seed']} failed: {r['error']}", file=sys.stderr)
    rows = aggregate(results, cfg.methods)
    write_table(rows, out / "table1.csv")
    for row in rows:
        print(f"{row['method']:>6}  error={row['mean_l1_error_median']}  "
              f"ms={row['per_step_ms_median']}  seeds={row['seeds']}")
    return EXIT_OK if all(r["seeds"] > 0 for r in rows) else EXIT_FILTER


def relevance_rows(trace_path: Path, threshold: float) -> list:
    """Final prior variances from a trace CSV.

    Raises:
        ValueError: if the trace is empty or lacks prior-variance columns.
    """
    with open(trace_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        last = None
        for last in reader:
            pass
    if not header or last is None:
        raise ValueError("trace has no data rows")
    cols = [(i, h[len("prior["):-1]) for i, h in enumerate(header)
            if h.startswith("prior[") and h.endswith("]")]
    if not cols:
        raise ValueError("trace has no prior-variance columns")
    if len(last) != len(header):
        raise ValueError("last trace row does not match the header")
    var = np.array([float(last[i]) for i, _ in cols])
    if not np.all(np.isfinite(var)):
        raise ValueError("trace holds no prior variances (not an ARD run?)")
    top = var.max()
    return [
        {"basis": name, "variance": repr(float(v)), "selected": int(v >= threshold * top)}
        for (_, name), v in zip(cols, var)
    ]


def cmd_relevance_report(args) -> int:
    path = Path(args.trace)
    try:
        rows = relevance_rows(path, args.threshold)
    except FileNotFoundError:
        print(f"error: trace not found: {path}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, csv.Error) as exc:
        print(f"error: malformed trace {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else path.with_name("relevance.csv")
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RELEVANCE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    for r in rows:
        print(f"{r['basis']:>10}  {float(r['variance']):.4e}  {'*' if r['selected'] else ''}")
    return EXIT_OK


def cmd_print_config(args) -> int:
    cfg = _resolve_config(args)
    sys.stdout.write(cfg.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ski", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log filter diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p, seed=True):
        p.add_argument("config", help=f"JSON config path or preset ({', '.join(PRESETS)})")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (dotted for nested blocks); repeatable")
        if seed:
            p.add_argument("--seed", type=int, help="run this seed only")

    p = sub.add_parser("run", help="run one (scenario, method, seed) cell")
    add_config_args(p)
    p.add_argument("--method", help="override the config method")
    p.add_argument("--out", help="output directory (default: config, then $SKI_OUT_DIR, then .)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("benchmark", help="run the method x seed grid and write table1.csv")
    add_config_args(p, seed=False)
    p.add_argument("--workers", type=int, help="parallel cells (each single-threaded)")
    p.add_argument("--out", help="output directory (default: config, then $SKI_OUT_DIR, then .)")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("relevance-report", help="final ARD variances from a trace CSV")
    p.add_argument("trace", help="trace.csv written by 'ski run'")
    p.add_argument("--threshold", type=float, default=1e-4,
                   help="selected if variance >= threshold * max (default 1e-4)")
    p.add_argument("--out", help="output CSV (default: relevance.csv next to the trace)")
    p.set_defaults(func=cmd_relevance_report)

    p = sub.add_parser("print-config", help="echo the resolved config as JSON")
    add_config_args(p)
    p.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
