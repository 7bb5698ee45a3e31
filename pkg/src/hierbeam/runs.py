"""Load sweeps producing CSV rows.

Every sweep multiplies the arrival rates by each factor at fixed service
rates. Rows are emitted in sweep order, then beam order.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .alloc import alpha_fair, feasible
from .codebook import CodebookTree
from .elastic import (FLAG_OVERLOAD, TrafficModel, critical_load_factor, mt_line_performance,
                      mt_saturation_factor, mt_tree_performance, mt_void_and_busy, pf_performance,
                      stability_check)
from .sim import SimConfig, simulate_elastic, simulate_streaming, simulated_busy_stats
from .streaming import StreamingModel, blocking_probabilities

ELASTIC_COLUMNS = ["load_factor", "beam", "depth", "method", "lambda", "rho", "expected_n", "throughput",
                   "normalized_throughput", "flag"]
STREAMING_COLUMNS = ["load_factor", "beam", "depth", "s_v", "rho", "blocking_probability", "method"]
ELASTIC_STDERR_COLUMNS = ["expected_n_stderr", "throughput_stderr"]
STREAMING_STDERR_COLUMNS = ["blocking_probability_stderr"]


def resolve_factors(tree: CodebookTree, traffic: TrafficModel, sweep, scale: str = "absolute") -> list[float]:
    """Turn configured sweep values into absolute multipliers of ``lam``."""
    if scale == "absolute":
        base = 1.0
    elif scale == "pf-critical":
        base = critical_load_factor(tree, traffic)
    elif scale == "mt-saturation":
        base = mt_saturation_factor(tree, traffic)
    else:
        raise ValueError(f"unknown sweep scale {scale!r}")
    return [float(f) * base for f in sweep]


def _elastic_rows(tree, traffic, factor, report):
    rows = []
    rho = traffic.rho
    norm = report.normalized_throughput(traffic)
    for v in range(tree.n):
        rows.append({"load_factor": factor, "beam": tree.labels[v], "depth": int(tree.depth[v]),
                     "method": report.method, "lambda": traffic.lam[v], "rho": rho[v],
                     "expected_n": report.expected_n[v], "throughput": report.throughput[v],
                     "normalized_throughput": norm[v], "flag": report.flags.get(v, "")})
    return rows


def _overload_rows(tree, traffic, factor, method):
    rho = traffic.rho
    return [{"load_factor": factor, "beam": tree.labels[v], "depth": int(tree.depth[v]), "method": method,
             "lambda": traffic.lam[v], "rho": rho[v], "expected_n": math.inf, "throughput": 0.0,
             "normalized_throughput": 0.0, "flag": FLAG_OVERLOAD} for v in range(tree.n)]


def pf_rows(tree: CodebookTree, traffic: TrafficModel, factors) -> list[dict]:
    """Proportional-fair sweep. Points outside the stability region are all flagged."""
    rows = []
    for f in factors:
        t = traffic.scaled(f)
        if not stability_check(tree, t):
            rows += _overload_rows(tree, t, f, "pf-exact")
            continue
        rows += _elastic_rows(tree, t, f, pf_performance(tree, t))
    return rows


def mt_rows(tree: CodebookTree, traffic: TrafficModel, factors, moments: str = "exp",
            sim: SimConfig | None = None, busy_cycles: int = 10_000) -> list[dict]:
    """Max-throughput sweep; exact on lines, busy-period formula on trees."""
    rows = []
    for f in factors:
        t = traffic.scaled(f)
        if tree.is_line:
            if t.rho.sum() >= 1.0:
                rows += _overload_rows(tree, t, f, "mt-line-exact")
                continue
            rep = mt_line_performance(tree, t)
        else:
            stats = mt_void_and_busy(tree, t, strict=False)
            if moments == "simulated":
                stats = simulated_busy_stats(tree, t, sim, busy_cycles)
            rep = mt_tree_performance(tree, t, stats)
        rows += _elastic_rows(tree, t, f, rep)
    return rows


def streaming_rows(model: StreamingModel, factors) -> list[dict]:
    rows = []
    tree = model.tree
    for f in factors:
        m = model.scaled(f)
        rep = blocking_probabilities(m)
        for v in range(tree.n):
            rows.append({"load_factor": f, "beam": tree.labels[v], "depth": int(tree.depth[v]),
                         "s_v": int(m.s[v]), "rho": m.rho[v], "blocking_probability": rep.p[v],
                         "method": rep.method})
    return rows


def simulate_rows(tree: CodebookTree, traffic: TrafficModel, factors, sim: SimConfig,
                  model: StreamingModel | None = None) -> list[dict]:
    """Simulation sweep; each point gets its own seed derived from ``sim.seed``."""
    rows = []
    seeds = np.random.SeedSequence(int(sim.seed) % 2 ** 64).generate_state(len(factors), dtype=np.uint64)
    for f, seed in zip(factors, seeds):
        cfg = SimConfig(sim.horizon_events, sim.warmup_fraction, int(seed), sim.flow_sizes, sim.policy,
                        sim.n_batches, sim.check_feasibility, sim.max_flows)
        if sim.policy == "streaming":
            m = model.scaled(f)
            est = simulate_streaming(m, cfg)
            for v in range(tree.n):
                rows.append({"load_factor": f, "beam": tree.labels[v], "depth": int(tree.depth[v]),
                             "s_v": int(m.s[v]), "rho": m.rho[v], "blocking_probability": est.blocking[v],
                             "method": "simulation", "blocking_probability_stderr": est.blocking_stderr[v]})
            continue
        t = traffic.scaled(f)
        est = simulate_elastic(tree, t, sim.policy, cfg)
        rep = est.to_performance_report(t)
        for row, v in zip(_elastic_rows(tree, t, f, rep), range(tree.n)):
            row["expected_n_stderr"] = est.expected_n_stderr[v]
            row["throughput_stderr"] = est.throughput_stderr[v]
            rows.append(row)
    return rows


def allocation_artifact(tree: CodebookTree, population, alpha, maxmin_alpha: float = 16.0) -> dict:
    res = alpha_fair(tree, population, alpha, maxmin_alpha)
    out = res.to_dict()
    out["beams"] = list(tree.labels)
    out["flow_beams"] = [tree.labels[b] for b in population.beam]
    out["path_sums"] = tree.path_sums(res.gamma).tolist()
    out["feasible"] = feasible(tree, res.gamma)
    return out


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    """Write rows with a fixed column order, shortest round-trip floats and LF endings."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


__all__ = ["ELASTIC_COLUMNS", "STREAMING_COLUMNS", "ELASTIC_STDERR_COLUMNS", "STREAMING_STDERR_COLUMNS",
           "resolve_factors", "pf_rows", "mt_rows", "streaming_rows", "simulate_rows", "allocation_artifact",
           "write_csv", "write_json"]
