"""Flow-level performance of elastic traffic.

Flows arrive on beam ``v`` as a Poisson process of rate ``lam[v]``, carry a
unit mean amount of work and are served at rate ``r[v]`` while the beam is
active. Proportional fairness has a product-form stationary distribution;
max throughput gives strict priority to deeper beams and is handled through
busy periods of the subtrees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codebook import CodebookTree
from .errors import MtOverload, NotALine, Unstable

PF_EXACT = "pf-exact"
MT_LINE_EXACT = "mt-line-exact"
MT_EXP_APPROX = "mt-exp-approx"
MT_SIM_MOMENTS = "mt-sim-moments"
SIMULATION = "simulation"
CTMC_ORACLE = "ctmc-oracle"

FLAG_UNDEFINED = "throughput-undefined"
FLAG_OVERLOAD = "overload"


@dataclass(frozen=True)
class TrafficModel:
    """Per-beam arrival rates ``lam`` and service rates ``r``."""

    lam: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        r = np.asarray(self.r, dtype=float)
        if lam.shape != r.shape or lam.ndim != 1:
            raise ValueError("lam and r must be vectors of equal length")
        if np.any(lam < 0) or np.any(r <= 0) or not (np.all(np.isfinite(lam)) and np.all(np.isfinite(r))):
            raise ValueError("need finite lam >= 0 and r > 0")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "r", r)

    @classmethod
    def from_rho(cls, rho, r) -> "TrafficModel":
        r = np.asarray(r, dtype=float)
        return cls(np.asarray(rho, dtype=float) * r, r)

    @property
    def rho(self) -> np.ndarray:
        return self.lam / self.r

    def scaled(self, factor: float) -> "TrafficModel":
        """Arrival rates multiplied by ``factor`` (loads scale identically)."""
        return TrafficModel(self.lam * factor, self.r)

    def descendant_arrivals(self, tree: CodebookTree) -> np.ndarray:
        """``ell[v]``: total arrival rate over the strict descendants of ``v``."""
        return tree.subtree_sums(self.lam, inclusive=False)


@dataclass
class PerformanceReport:
    """Per-beam mean flow count and flow throughput.

    ``flags`` maps a beam index to a note: ``"throughput-undefined"`` when
    no traffic reaches the beam (its raw rate is reported as throughput),
    ``"overload"`` when the beam is unstable (throughput 0).
    """

    expected_n: np.ndarray
    throughput: np.ndarray
    method: str
    stable: bool
    flags: dict = field(default_factory=dict)
    expected_n_stderr: np.ndarray | None = None
    throughput_stderr: np.ndarray | None = None

    def normalized_throughput(self, traffic: TrafficModel) -> np.ndarray:
        return self.throughput / traffic.r


@dataclass
class BusyPeriodStats:
    """Busy periods ``B_v`` of the descendants of each beam.

    ``void_prob[v]`` is the stationary probability that ``v`` and all its
    descendants are empty. Leaves have no descendants, their busy period is
    reported as 0. ``overloaded`` marks beams whose subtree has no
    stationary regime (their entries are 0 or inf).
    """

    mean: np.ndarray
    second_moment: np.ndarray
    void_prob: np.ndarray
    source: str
    overloaded: np.ndarray
    mean_stderr: np.ndarray | None = None
    second_moment_stderr: np.ndarray | None = None


def _finish(traffic, expected_n, method, stable, flags=None):
    flags = dict(flags or {})
    lam, r = traffic.lam, traffic.r
    psi = np.empty_like(expected_n)
    for v in range(len(lam)):
        if flags.get(v) == FLAG_OVERLOAD:
            psi[v] = 0.0
        elif lam[v] == 0.0:
            psi[v] = r[v]
            flags[v] = FLAG_UNDEFINED
        else:
            psi[v] = lam[v] / expected_n[v]
    return PerformanceReport(expected_n, psi, method, stable, flags)


# stability -----------------------------------------------------------------

def stability_check(tree: CodebookTree, traffic: TrafficModel) -> bool:
    """True iff every root-to-beam load sum is strictly below one."""
    return bool(np.all(tree.path_sums(traffic.rho) < 1.0))


def critical_load_factor(tree: CodebookTree, traffic: TrafficModel) -> float:
    """Largest uniform scaling of the arrivals keeping every path sum below one."""
    m = float(tree.path_sums(traffic.rho).max())
    return math.inf if m == 0 else 1.0 / m


# proportional fairness -----------------------------------------------------

def pf_log_normalization(tree: CodebookTree, rho) -> float:
    """``ln c(rho)`` with ``c = prod_v (1 - S_anc(v)) / (1 - S_self_anc(v))``."""
    rho = np.asarray(rho, dtype=float)
    incl = tree.path_sums(rho)
    excl = incl - rho
    if np.any(incl >= 1.0):
        raise Unstable("load path sum reaches one")
    return float(np.sum(np.log1p(-excl) - np.log1p(-incl)))


def pf_unnormalized_weight(tree: CodebookTree, rho, state) -> float:
    """``prod_v rho_v^{n_v} binom(subtree count of v, n_v)``."""
    n = np.asarray(state, dtype=np.int64)
    sub = tree.subtree_sums(n).astype(np.int64)
    w = 1.0
    for v in range(tree.n):
        if n[v]:
            w *= rho[v] ** n[v] * math.comb(int(sub[v]), int(n[v]))
    return w


def pf_stationary_prob(tree: CodebookTree, traffic: TrafficModel, state) -> float:
    """Stationary probability of the flow-count vector ``state`` under PF."""
    if not stability_check(tree, traffic):
        raise Unstable("PF system is unstable")
    rho = traffic.rho
    n = np.asarray(state, dtype=np.int64)
    sub = tree.subtree_sums(n).astype(np.int64)
    logw = 0.0
    for v in range(tree.n):
        if n[v]:
            logw += n[v] * math.log(rho[v]) + math.log(math.comb(int(sub[v]), int(n[v])))
    return math.exp(logw - pf_log_normalization(tree, rho))


def pf_performance(tree: CodebookTree, traffic: TrafficModel) -> PerformanceReport:
    """Mean flow counts and flow throughputs under proportional fairness.

    ``E[N_v] = rho_v * sum_{u in subtree(v)} (1 - deg(u)) / (1 - S(u))`` where
    ``S(u)`` is the load summed from the root down to ``u``.
    """
    if not stability_check(tree, traffic):
        raise Unstable("PF system is unstable: a load path sum is >= 1")
    rho = traffic.rho
    term = (1.0 - tree.degree) / (1.0 - tree.path_sums(rho))
    en = rho * tree.subtree_sums(term)
    # cancellation in the signed sum can leave tiny negatives at zero load
    en = np.where(rho == 0, 0.0, en)
    return _finish(traffic, en, PF_EXACT, True)


# max throughput -------------------------------------------------------------

def mt_line_performance(tree: CodebookTree, traffic: TrafficModel) -> PerformanceReport:
    """Exact max-throughput performance on a line (preemptive priority M/M/1)."""
    if not tree.is_line:
        raise NotALine("tree has a beam with more than one child")
    rho, r = traffic.rho, traffic.r
    if rho.sum() >= 1.0:
        raise Unstable("total load >= 1")
    n = tree.n
    en = np.empty(n)
    for v in range(n):
        s_ge = rho[v:].sum()
        s_gt = rho[v + 1:].sum()
        num = rho[v] * (1.0 + np.sum(rho[v:] * (r[v] / r[v:] - 1.0)))
        en[v] = num / ((1.0 - s_ge) * (1.0 - s_gt))
    return _finish(traffic, en, MT_LINE_EXACT, True)


def mt_void_and_busy(tree: CodebookTree, traffic: TrafficModel, strict: bool = True) -> BusyPeriodStats:
    """Void probabilities and mean busy periods by leaf-to-root recursion.

    ``P(subtree of v empty) = prod_children P(subtree of child empty) - rho_v``.
    The second moment uses the exponential approximation ``E[B^2] = 2 E[B]^2``.

    Raises
    ------
    MtOverload
        When ``strict`` and some void probability is not positive. With
        ``strict=False`` the affected beams (and their ancestors) are marked
        in ``overloaded`` instead.
    """
    rho = traffic.rho
    ell = traffic.descendant_arrivals(tree)
    n = tree.n
    void = np.zeros(n)
    child_void = np.ones(n)  # product over children
    over = np.zeros(n, dtype=bool)
    mean = np.zeros(n)
    for v in range(n - 1, -1, -1):
        if any(over[c] for c in tree.children[v]):
            over[v] = True
            mean[v] = math.inf
        else:
            if ell[v] > 0:
                mean[v] = (1.0 / child_void[v] - 1.0) / ell[v]
            void[v] = child_void[v] - rho[v]
            if void[v] <= 0.0:
                over[v] = True
                void[v] = 0.0
        if v > 0:
            child_void[tree.parent[v]] *= void[v]
    if strict and over.any():
        bad = [tree.labels[v] for v in np.flatnonzero(over)]
        raise MtOverload(f"max-throughput overload at beams {bad}")
    return BusyPeriodStats(mean, 2.0 * mean ** 2, void, "exp-approx", over)


def mt_tree_performance(tree: CodebookTree, traffic: TrafficModel, stats: BusyPeriodStats) -> PerformanceReport:
    """Max-throughput mean flow counts from busy-period moments.

    Overloaded beams get ``E[N] = inf`` and throughput 0 with an
    ``"overload"`` flag.
    """
    lam, rho = traffic.lam, traffic.rho
    ell = traffic.descendant_arrivals(tree)
    en = np.empty(tree.n)
    flags = {}
    for v in range(tree.n):
        if stats.overloaded[v]:
            en[v] = math.inf
            flags[v] = FLAG_OVERLOAD
            continue
        a = 1.0 + stats.mean[v] * ell[v]
        denom = (1.0 - rho[v] * a) * a
        if denom <= 0.0:
            en[v] = math.inf
            flags[v] = FLAG_OVERLOAD
            continue
        b2 = stats.second_moment[v] if ell[v] > 0 else 0.0
        en[v] = (0.5 * lam[v] * ell[v] * b2 + rho[v] * a * a) / denom
    method = MT_SIM_MOMENTS if stats.source == "simulated" else MT_EXP_APPROX
    return _finish(traffic, en, method, not flags, flags)


def mt_saturation_factor(tree: CodebookTree, traffic: TrafficModel, tol: float = 1e-12) -> float:
    """Smallest arrival scaling at which some beam overloads under max throughput."""
    def ok(c):
        return not mt_void_and_busy(tree, traffic.scaled(c), strict=False).overloaded.any()

    if traffic.lam.sum() == 0:
        return math.inf
    lo, hi = 0.0, 1.0
    while ok(hi):
        lo, hi = hi, 2 * hi
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return hi
