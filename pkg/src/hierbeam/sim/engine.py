"""Discrete-event simulation of the elastic and streaming flow models.

Estimates use batch means over the post-warmup events. Everything is
driven by a single seed, so reruns with the same configuration are
bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..codebook import CodebookTree
from ..elastic import (FLAG_OVERLOAD, FLAG_UNDEFINED, SIMULATION, BusyPeriodStats, PerformanceReport,
                       TrafficModel, mt_void_and_busy)
from ..streaming import BlockingReport, StreamingModel
from . import _kernels as K

POLICIES = {"pf": K.POLICY_PF, "mt": K.POLICY_MT}
DEFAULT_MAX_FLOWS = 1_000_000


@dataclass(frozen=True)
class FlowSizes:
    """Flow size (or holding work) distribution with unit mean.

    ``hyperexponential`` mixes two exponentials: mean ``m1`` with
    probability ``p``, mean ``m2`` otherwise.
    """

    kind: str = "exponential"
    p: float = 1.0
    m1: float = 1.0
    m2: float = 1.0

    def __post_init__(self):
        if self.kind not in ("exponential", "deterministic", "hyperexponential"):
            raise ValueError(f"unknown flow size distribution {self.kind!r}")
        if self.kind == "hyperexponential":
            if not (0.0 < self.p < 1.0) or self.m1 <= 0 or self.m2 <= 0:
                raise ValueError("hyperexponential needs 0 < p < 1 and positive means")
            mean = self.p * self.m1 + (1.0 - self.p) * self.m2
            if abs(mean - 1.0) > 1e-12:
                raise ValueError(f"flow sizes must have mean 1, got {mean!r}")

    @classmethod
    def hyperexponential(cls, p: float, m1: float, m2: float | None = None) -> "FlowSizes":
        """Two-phase mixture; ``m2`` defaults to the value giving mean 1."""
        if m2 is None:
            m2 = (1.0 - p * m1) / (1.0 - p)
        return cls("hyperexponential", p, m1, m2)

    @classmethod
    def parse(cls, spec) -> "FlowSizes":
        """Accept a name, a dict, or an existing instance."""
        if isinstance(spec, FlowSizes):
            return spec
        if isinstance(spec, str):
            return cls(spec)
        spec = dict(spec)
        kind = spec.pop("kind")
        if kind == "hyperexponential":
            return cls.hyperexponential(spec["p"], spec["m1"], spec.get("m2"))
        if spec:
            raise ValueError(f"unexpected parameters for {kind}: {sorted(spec)}")
        return cls(kind)

    def scv(self) -> float:
        """Squared coefficient of variation."""
        if self.kind == "deterministic":
            return 0.0
        if self.kind == "exponential":
            return 1.0
        return 2.0 * (self.p * self.m1 ** 2 + (1 - self.p) * self.m2 ** 2) - 1.0

    @property
    def code(self) -> int:
        return {"exponential": K.DIST_EXPONENTIAL, "deterministic": K.DIST_DETERMINISTIC,
                "hyperexponential": K.DIST_HYPEREXPONENTIAL}[self.kind]

    def to_dict(self):
        if self.kind == "hyperexponential":
            return {"kind": self.kind, "p": self.p, "m1": self.m1, "m2": self.m2}
        return {"kind": self.kind}


@dataclass(frozen=True)
class SimConfig:
    horizon_events: int = 1_000_000
    warmup_fraction: float = 0.2
    seed: int = 0
    flow_sizes: FlowSizes = field(default_factory=FlowSizes)
    policy: str = "pf"
    n_batches: int = 20
    check_feasibility: bool = True
    max_flows: int = DEFAULT_MAX_FLOWS

    def __post_init__(self):
        if int(self.horizon_events) < 1:
            raise ValueError("horizon_events must be positive")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must lie in [0, 1)")
        if self.policy not in ("pf", "mt", "streaming"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.n_batches < 2:
            raise ValueError("need at least two batches")
        object.__setattr__(self, "flow_sizes", FlowSizes.parse(self.flow_sizes))

    @property
    def warmup(self) -> int:
        return int(self.horizon_events * self.warmup_fraction)

    def kernel_seed(self) -> int:
        # numba seeds from 32 bits; hash the full 64-bit seed down
        return int(np.random.SeedSequence(int(self.seed) % 2 ** 64).generate_state(1)[0])

    def to_dict(self):
        return {"horizon_events": self.horizon_events, "warmup_fraction": self.warmup_fraction,
                "seed": self.seed, "flow_size_distribution": self.flow_sizes.to_dict(),
                "policy": self.policy, "n_batches": self.n_batches}


@dataclass
class SimEstimate:
    """Batch-means estimates for one simulation run.

    For elastic runs ``throughput`` is ``lam / E[N]`` and ``arrival_n`` the
    mean flow counts seen by arrivals (equal to ``expected_n`` by PASTA).
    For streaming runs ``blocking`` holds the blocked fraction of arrivals.
    ``diverged`` is set when the flow count exceeded ``max_flows``.
    """

    expected_n: np.ndarray
    expected_n_stderr: np.ndarray
    events_processed: int
    throughput: np.ndarray | None = None
    throughput_stderr: np.ndarray | None = None
    blocking: np.ndarray | None = None
    blocking_stderr: np.ndarray | None = None
    arrival_n: np.ndarray | None = None
    arrival_n_stderr: np.ndarray | None = None
    violations: int = 0
    diverged: bool = False

    def to_performance_report(self, traffic: TrafficModel) -> PerformanceReport:
        flags = {}
        for v in range(len(traffic.lam)):
            if traffic.lam[v] == 0:
                flags[v] = FLAG_UNDEFINED
            elif self.diverged:
                flags[v] = FLAG_OVERLOAD
        rep = PerformanceReport(self.expected_n, self.throughput, SIMULATION, not self.diverged, flags)
        rep.expected_n_stderr = self.expected_n_stderr
        rep.throughput_stderr = self.throughput_stderr
        return rep

    def to_blocking_report(self) -> BlockingReport:
        return BlockingReport(self.blocking, math.nan, "simulation", self.events_processed,
                              1.0 - self.blocking, self.blocking_stderr)


def _batch_ratio(num, den):
    """Pooled ratio and its batch-means standard error, per column."""
    est = num.sum(axis=0) / np.where(den.sum(axis=0) > 0, den.sum(axis=0), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        per = num / den
    ok = np.isfinite(per).sum(axis=0)
    se = np.full(per.shape[1], np.nan)
    for j in range(per.shape[1]):
        col = per[np.isfinite(per[:, j]), j]
        if ok[j] >= 2:
            se[j] = col.std(ddof=1) / math.sqrt(ok[j])
    return est, se


def simulate_elastic(tree: CodebookTree, traffic: TrafficModel, policy: str = None,
                     config: SimConfig = None) -> SimEstimate:
    """Simulate elastic flows under PF or MT beam scheduling.

    Beam activities are recomputed from the flow counts after every event
    (scheduling is much faster than flow dynamics), and flows of a beam
    share its rate equally.
    """
    config = config or SimConfig()
    policy = policy or config.policy
    if policy not in POLICIES:
        raise ValueError(f"elastic policy must be 'pf' or 'mt', got {policy!r}")
    fs = config.flow_sizes
    out = K.elastic_kernel(tree.parent.astype(np.int64), traffic.lam, traffic.r, POLICIES[policy],
                           fs.code, fs.p, fs.m1, fs.m2, int(config.horizon_events), config.warmup,
                           int(config.n_batches), config.kernel_seed(), bool(config.check_feasibility),
                           int(config.max_flows), 0)
    btime, area, arrivals, seen, _, violations, overflow, events, _ = out
    en, en_se = _batch_ratio(area, np.repeat(btime[:, None], tree.n, axis=1))
    an, an_se = _batch_ratio(seen, np.repeat(arrivals.sum(axis=1)[:, None], tree.n, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        psi = np.where(traffic.lam > 0, traffic.lam / en, traffic.r)
        psi_se = np.where(traffic.lam > 0, psi * en_se / en, 0.0)
    return SimEstimate(en, en_se, int(events), psi, psi_se, arrival_n=an, arrival_n_stderr=an_se,
                       violations=int(violations), diverged=bool(overflow))


def simulate_streaming(model: StreamingModel, config: SimConfig = None) -> SimEstimate:
    """Simulate the loss network; holding times have mean ``1 / r[v]``."""
    config = config or SimConfig(policy="streaming")
    fs = config.flow_sizes
    tr = model.traffic
    btime, area, arrivals, blocked, events = K.streaming_kernel(
        model.tree.parent.astype(np.int64), model.s.astype(np.int64), int(model.xi), tr.lam, tr.r,
        fs.code, fs.p, fs.m1, fs.m2, int(config.horizon_events), config.warmup,
        int(config.n_batches), config.kernel_seed())
    en, en_se = _batch_ratio(area, np.repeat(btime[:, None], model.tree.n, axis=1))
    p, p_se = _batch_ratio(blocked, arrivals)
    p = np.nan_to_num(p, nan=0.0)
    return SimEstimate(en, en_se, int(events), blocking=p, blocking_stderr=p_se)


@dataclass
class BusyMomentEstimate:
    mean: float
    second_moment: float
    mean_stderr: float
    second_moment_stderr: float
    cycles: int
    regenerative: bool = True


def estimate_busy_moments(tree: CodebookTree, traffic: TrafficModel, beam: int, config: SimConfig = None,
                          min_cycles: int = 10_000) -> BusyMomentEstimate:
    """Regenerative estimate of the busy-period moments of the descendants of ``beam``.

    Only descendants receive traffic; under max throughput their dynamics
    do not depend on the rest of the tree. Each return to the empty state
    closes a cycle. If fewer than ``min_cycles`` cycles complete within
    ``config.horizon_events`` events, the result is flagged
    ``regenerative=False``.
    """
    config = config or SimConfig(horizon_events=50_000_000, policy="mt")
    below = tree.descendants(beam, inclusive=False)
    if len(below) == 0 or traffic.lam[below].sum() == 0:
        return BusyMomentEstimate(0.0, 0.0, 0.0, 0.0, 0)
    lam = np.zeros(tree.n)
    lam[below] = traffic.lam[below]
    fs = config.flow_sizes
    out = K.elastic_kernel(tree.parent.astype(np.int64), lam, traffic.r, K.POLICY_MT, fs.code, fs.p,
                           fs.m1, fs.m2, int(config.horizon_events), 0, 2, config.kernel_seed(), False,
                           int(config.max_flows), int(min_cycles))
    cycles = out[-1]
    k = len(cycles)
    if k < 2:
        return BusyMomentEstimate(math.inf, math.inf, math.nan, math.nan, k, False)
    sq = cycles ** 2
    return BusyMomentEstimate(float(cycles.mean()), float(sq.mean()),
                              float(cycles.std(ddof=1) / math.sqrt(k)),
                              float(sq.std(ddof=1) / math.sqrt(k)), k, k >= min_cycles)


def simulated_busy_stats(tree: CodebookTree, traffic: TrafficModel, config: SimConfig = None,
                         min_cycles: int = 10_000) -> BusyPeriodStats:
    """Busy-period moments of every beam by simulation, for ``mt_tree_performance``."""
    base = mt_void_and_busy(tree, traffic, strict=False)
    mean = np.zeros(tree.n)
    m2 = np.zeros(tree.n)
    mse = np.zeros(tree.n)
    m2se = np.zeros(tree.n)
    over = base.overloaded.copy()
    for v in range(tree.n):
        if tree.is_leaf(v):
            continue
        est = estimate_busy_moments(tree, traffic, v, config, min_cycles)
        mean[v], m2[v], mse[v], m2se[v] = est.mean, est.second_moment, est.mean_stderr, est.second_moment_stderr
        over[v] |= not est.regenerative
    return BusyPeriodStats(mean, m2, base.void_prob, "simulated", over, mse, m2se)
