"""Single and multi-seed execution with CSV/JSON output.

Trace files are comma separated with a header line and floats written with
17 significant digits, so identical runs produce identical bytes. Aggregate
files are computed from the per-seed trace files alone.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..metrics import TRACE_COLUMNS, RateFit, rate_fit
from ..errors import InsufficientDataError
from ..problems import build
from ..solver import run
from .config import ExperimentConfig

AGGREGATE_COLUMNS = ("k", "seeds", "infeas_mean", "infeas_stderr", "gap_mean", "gap_stderr",
                     "lambda_norm_mean", "lambda_norm_stderr")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_trace(path, records):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in records:
            w.writerow([_fmt(v) for v in rec.row()])


def read_trace(path) -> dict:
    """Columns of a trace CSV as arrays (``gap_method`` stays a list of str)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for col in TRACE_COLUMNS:
        vals = [r[col] for r in rows]
        out[col] = vals if col == "gap_method" else np.array(vals, dtype=float)
    return out


def _write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def solve_one(cfg: ExperimentConfig, seed: int, out_dir=None, instance=None):
    """Run one seed; write ``trace``, ``summary`` and ``descriptor`` files when ``out_dir`` is set."""
    instance = instance or build(cfg.descriptor)
    scfg = cfg.seed_config(seed, instance)
    gap = None if cfg.gap_method == "none" else cfg.gap_method
    t0 = time.perf_counter()
    result = run(instance, scfg, checkpoints=cfg.checkpoint_list(), gap=gap, timing=cfg.timing)
    wall_ms = (time.perf_counter() - t0) * 1e3
    last = result.trace[-1]
    summary = {"xbar": [float(v) for v in result.xbar], "infeas": last.infeas_xbar,
               "gap": None if math.isnan(last.gap_xbar) else last.gap_xbar,
               "gap_method": last.gap_method,
               "lambda_norm": last.lambda_norm, "wall_ms": wall_ms,
               "lambda_sq_max": result.lambda_sq_max, "iters": scfg.iters, "seed": seed}
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_trace(out_dir / f"trace_seed{seed}.csv", result.trace)
        _write_json(out_dir / f"summary_seed{seed}.json", summary)
        _write_json(out_dir / "descriptor.json", cfg.descriptor.to_dict())
    return result, summary


def _bench_worker(args):
    cfg, seed, out_dir = args
    _, summary = solve_one(cfg, seed, out_dir)
    return summary


def aggregate(trace_paths) -> dict:
    """Mean and standard error across seeds, per checkpoint."""
    traces = [read_trace(p) for p in trace_paths]
    ks = traces[0]["k"]
    for t in traces[1:]:
        if not np.array_equal(t["k"], ks):
            raise ValueError("traces have different checkpoints")
    m = len(traces)
    out = {"k": ks.astype(int), "seeds": np.full(len(ks), m)}
    for col, name in (("infeas_xbar", "infeas"), ("gap_xbar", "gap"), ("lambda_norm", "lambda_norm")):
        stack = np.array([t[col] for t in traces])
        out[f"{name}_mean"] = stack.mean(axis=0)
        out[f"{name}_stderr"] = (stack.std(axis=0, ddof=1) / math.sqrt(m)) if m > 1 else np.zeros(len(ks))
    return out


def write_aggregate(path, agg):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for i in range(len(agg["k"])):
            w.writerow([_fmt(agg[c][i]) for c in AGGREGATE_COLUMNS])


def _fit_entry(ks, values, k_min):
    try:
        fit: RateFit = rate_fit(ks, values, k_min=k_min)
        return {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2, "points": fit.points}
    except InsufficientDataError as exc:
        return {"slope": None, "error": str(exc)}


def rate_report(agg, k_min) -> dict:
    ks = agg["k"]
    return {"k_min": k_min, "k_max": int(ks[-1]),
            "infeas": _fit_entry(ks, agg["infeas_mean"], k_min),
            "gap": _fit_entry(ks, agg["gap_mean"], k_min),
            "reference_slope": "log(K+1)/sqrt(K+2) has local log-log slope -0.5 + 1/ln K"}


def bench(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Run every seed, then write the aggregate CSV and the rate report."""
    out_dir = Path(out_dir or cfg.out_dir())
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, s, out_dir) for s in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            summaries = list(pool.map(_bench_worker, jobs))
    else:
        summaries = [_bench_worker(j) for j in jobs]
    agg = aggregate([out_dir / f"trace_seed{s}.csv" for s in cfg.seeds])
    write_aggregate(out_dir / "aggregate.csv", agg)
    report = rate_report(agg, cfg.fit_k_min)
    report["seeds"] = list(cfg.seeds)
    report["lambda_sq_max"] = {str(s["seed"]): s["lambda_sq_max"] for s in summaries}
    _write_json(out_dir / "rate_report.json", report)
    _write_json(out_dir / "config.json", cfg.to_dict())
    return report
