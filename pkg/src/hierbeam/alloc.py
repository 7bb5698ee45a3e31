"""Alpha-fair time sharing between beams and flows.

A beam may transmit only while none of its ancestors does. The fraction of
time ``gamma[v]`` beam ``v`` is active is parametrized as
``gamma[v] = kappa[v] * prod(1 - kappa[a] for a in ancestors(v))``, where
``kappa[v]`` is the share of the time left free by the ancestors that ``v``
takes. Flows of a beam split its active time according to ``delta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codebook import CodebookTree, FlowPopulation
from .errors import EmptyPopulation, NonPositiveRate

MAXMIN = "maxmin"
DEFAULT_MAXMIN_ALPHA = 16.0
FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class AllocationResult:
    """Optimal beam/flow time shares for a static population.

    ``delta`` is indexed like the flows of the population it was computed
    for. ``phi`` holds the aggregated per-beam weights and ``theta`` the
    optimal utility of each subtree. For max throughput ``theta`` is NaN.
    ``ops`` counts elementary arithmetic steps of the solver.
    """

    alpha: float
    kappa: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    utility: float
    phi: np.ndarray
    theta: np.ndarray
    ops: int = 0

    def to_dict(self):
        return {"alpha": self.alpha, "kappa": self.kappa.tolist(), "gamma": self.gamma.tolist(),
                "delta": self.delta.tolist(), "utility": self.utility}


def resolve_alpha(alpha, maxmin_alpha: float = DEFAULT_MAXMIN_ALPHA) -> float:
    if isinstance(alpha, str):
        if alpha.lower() != MAXMIN:
            raise ValueError(f"unknown fairness {alpha!r}")
        return float(maxmin_alpha)
    alpha = float(alpha)
    if not alpha >= 0:
        raise ValueError("alpha must be nonnegative")
    return alpha


def f_alpha(x, alpha: float):
    """Alpha-fair utility of a rate (elementwise)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if alpha == 1.0:
            return np.log(x)
        return np.power(x, 1.0 - alpha) / (1.0 - alpha)


def flow_utility(flows: FlowPopulation, gamma, delta, alpha: float) -> float:
    """Sum of ``f_alpha(r_k * gamma[v_k] * delta_k)`` over flows."""
    x = flows.rate * np.asarray(gamma)[flows.beam] * np.asarray(delta)
    return float(np.sum(f_alpha(x, alpha)))


def gamma_from_kappa(tree: CodebookTree, kappa) -> np.ndarray:
    """Activity fractions from conditional shares (descending pass)."""
    kappa = np.asarray(kappa, dtype=float)
    free = np.ones(tree.n)  # time left free by v and its ancestors
    gamma = np.empty(tree.n)
    for v in range(tree.n):
        above = 1.0 if v == 0 else free[tree.parent[v]]
        gamma[v] = kappa[v] * above
        free[v] = above * (1.0 - kappa[v])
    return gamma


def feasible(tree: CodebookTree, gamma, tol: float = FEASIBILITY_TOL) -> bool:
    """True iff every root-to-beam path has total activity at most one."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < -tol) or np.any(gamma > 1 + tol):
        return False
    return bool(np.all(tree.path_sums(gamma) <= 1.0 + tol))


def _check_flows(tree, flows):
    if len(flows) == 0:
        raise EmptyPopulation("no flows to allocate")
    if np.any(~(flows.rate > 0)):
        raise NonPositiveRate("every flow needs a positive rate")
    if np.any((flows.beam < 0) | (flows.beam >= tree.n)):
        raise ValueError("flow assigned to a beam outside the tree")


def pf_closed_form(tree: CodebookTree, counts) -> AllocationResult:
    """Proportional fair allocation from the per-beam flow counts.

    ``kappa[v]`` is the share of flows of the subtree of ``v`` sitting on
    ``v`` itself. ``delta`` lists ``1/n_v`` for flows ordered by beam, and
    the utility assumes unit rates (rates only shift it by a constant).
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.sum() < 1:
        raise EmptyPopulation("no flows to allocate")
    sub = tree.subtree_sums(counts)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(sub > 0, counts / sub, 0.0)
    # gamma_v = n_v / sub_v * prod_a (sub_a - n_a) / sub_a over ancestors a,
    # formed as one integer ratio so each entry is correctly rounded
    gamma = np.zeros(tree.n)
    num = [1] * tree.n
    den = [1] * tree.n
    for v in range(tree.n):
        pn, pd = (1, 1) if v == 0 else (num[tree.parent[v]], den[tree.parent[v]])
        sv, nv = int(sub[v]), int(counts[v])
        if sv == 0:
            num[v], den[v] = pn, pd
            continue
        gamma[v] = (pn * nv) / (pd * sv)
        num[v], den[v] = pn * (sv - nv), pd * sv
    beam = np.repeat(np.arange(tree.n), counts)
    delta = 1.0 / counts[beam]

    # subtree utility: theta_v = n_v ln kappa_v + sum_c theta_c + |D(v)| ln(1 - kappa_v)
    theta = np.zeros(tree.n)
    below = sub - counts
    for v in range(tree.n - 1, -1, -1):
        t = theta[v]
        if counts[v] > 0:
            t += counts[v] * math.log(kappa[v])
        if below[v] > 0:
            t += below[v] * math.log1p(-kappa[v])
        theta[v] = t
        if v > 0:
            theta[tree.parent[v]] += t
    with np.errstate(divide="ignore"):
        utility = float(np.sum(np.log(gamma[beam] * delta)))
    return AllocationResult(1.0, kappa, gamma, delta, utility, counts.astype(float), theta,
                            ops=3 * tree.n + len(beam))


def mt_closed_form(tree: CodebookTree, counts) -> AllocationResult:
    """Max-throughput allocation: a beam is on iff all its descendants are empty.

    Assumes equal rates within each beam. Empty beams with empty descendants
    get ``gamma = 1`` (they would be on if a flow showed up).
    """
    counts = np.asarray(counts, dtype=np.int64)
    below = tree.subtree_sums(counts) - counts
    gamma = (below == 0).astype(float)
    # nonempty beams: kappa reproduces gamma through the descending pass
    kappa = gamma.copy()
    beam = np.repeat(np.arange(tree.n), counts)
    delta = 1.0 / counts[beam] if len(beam) else np.zeros(0)
    utility = float(np.sum(gamma[beam] * delta))  # unit rates
    return AllocationResult(0.0, kappa, gamma, delta, utility,
                            counts.astype(float), np.full(tree.n, np.nan), ops=2 * tree.n)


def alpha_fair(tree: CodebookTree, flows: FlowPopulation, alpha=1.0,
               maxmin_alpha: float = DEFAULT_MAXMIN_ALPHA) -> AllocationResult:
    """Unique alpha-fair allocation via a two-pass dynamic program.

    Parameters
    ----------
    tree : CodebookTree
    flows : FlowPopulation
        Serving beam and positive rate of every flow.
    alpha : float or ``"maxmin"``
        Fairness parameter. ``0`` and ``1`` use the max-throughput and
        proportional-fair closed forms, ``"maxmin"`` a large finite alpha.

    Returns
    -------
    AllocationResult
        Linear-time solution; ``ops`` reports the number of arithmetic
        steps so the cost can be checked against ``|V| + |K|``.
    """
    alpha = resolve_alpha(alpha, maxmin_alpha)
    _check_flows(tree, flows)
    n = tree.n
    counts = flows.counts(n)

    if alpha == 1.0:
        res = pf_closed_form(tree, counts)
        delta = 1.0 / counts[flows.beam]
        util = flow_utility(flows, res.gamma, delta, 1.0)
        return AllocationResult(1.0, res.kappa, res.gamma, delta, util, res.phi, res.theta, res.ops)
    if alpha == 0.0:
        for v in np.flatnonzero(counts):
            rv = flows.rate[flows.beam == v]
            if not np.allclose(rv, rv[0], rtol=1e-12, atol=0):
                raise ValueError("max throughput needs equal rates within a beam")
        res = mt_closed_form(tree, counts)
        delta = 1.0 / counts[flows.beam]
        util = flow_utility(flows, res.gamma, delta, 0.0)
        return AllocationResult(0.0, res.kappa, res.gamma, delta, util, res.phi, res.theta, res.ops)

    ops = 0
    # aggregated weights
    w = flows.rate ** (1.0 / alpha - 1.0)
    wsum = np.zeros(n)
    for k in range(len(flows)):
        wsum[flows.beam[k]] += w[k]
        ops += 1
    delta = w / wsum[flows.beam]
    ops += len(flows)

    # ascending phase: theta[v] is the best utility of the subtree of v
    # given the whole time, kappa[v] the optimal share v keeps for itself.
    # Every theta has the sign of 1 - alpha, so the pass tracks log|theta|
    # and log phi; large alpha would overflow the plain values.
    with np.errstate(divide="ignore"):
        log_phi = alpha * np.log(wsum)
    kappa = np.zeros(n)
    log_theta = np.full(n, -math.inf)
    log_tau = np.full(n, -math.inf)
    busy_below = np.zeros(n, dtype=bool)  # some flow strictly below v
    one_m = 1.0 - alpha
    log_abs_one_m = math.log(abs(one_m))
    for v in range(n - 1, -1, -1):
        lt = log_tau[v]
        if log_phi[v] == -math.inf:
            kappa[v] = 0.0
            log_theta[v] = lt
        elif not busy_below[v]:
            kappa[v] = 1.0
            log_theta[v] = log_phi[v] - log_abs_one_m
        else:
            # kappa = 1 / (1 + x**(1/alpha)) with x = (1 - alpha) t / phi > 0
            e = (log_abs_one_m + lt - log_phi[v]) / alpha
            sp = np.logaddexp(0.0, e)
            log_k, log_km = -sp, e - sp
            kappa[v] = math.exp(log_k)
            log_theta[v] = np.logaddexp(one_m * log_k + log_phi[v] - log_abs_one_m, one_m * log_km + lt)
        ops += 1
        if v > 0:
            p = tree.parent[v]
            log_tau[p] = np.logaddexp(log_tau[p], log_theta[v])
            busy_below[p] |= busy_below[v] or wsum[v] > 0
            ops += 1
    with np.errstate(over="ignore"):
        phi = np.exp(log_phi)
        theta = math.copysign(1.0, one_m) * np.exp(log_theta)

    # descending phase
    gamma = gamma_from_kappa(tree, kappa)
    ops += n
    util = flow_utility(flows, gamma, delta, alpha)
    return AllocationResult(alpha, kappa, gamma, delta, util, phi, theta, ops)


def theta_from_kappa(tree: CodebookTree, phi, kappa, alpha: float) -> np.ndarray:
    """Re-evaluate the subtree utilities for given shares ``kappa``."""
    theta = np.zeros(tree.n)
    tau = np.zeros(tree.n)
    one_m = 1.0 - alpha
    for v in range(tree.n - 1, -1, -1):
        own = phi[v] * kappa[v] ** one_m / one_m if phi[v] > 0 else 0.0
        rest = (1.0 - kappa[v]) ** one_m * tau[v] if tau[v] != 0 else 0.0
        theta[v] = own + rest
        if v > 0:
            tau[tree.parent[v]] += theta[v]
    return theta


def draw_activation(tree: CodebookTree, kappa, rng_seed=None, size: int | None = None) -> np.ndarray:
    """Randomized slot scheduler realizing the activity fractions of ``kappa``.

    Each beam draws an independent Bernoulli(``kappa[v]``) and transmits iff
    it drew 1 and no ancestor did. Returns a 0/1 vector (or a ``(size, |V|)``
    array of slots). ``rng_seed`` may be an int or a ``numpy.random.Generator``.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    kappa = np.asarray(kappa, dtype=float)
    shape = (1 if size is None else size, tree.n)
    y = rng.random(shape) < kappa
    blocked = np.zeros(shape, dtype=bool)
    for v in range(1, tree.n):
        p = tree.parent[v]
        blocked[:, v] = blocked[:, p] | y[:, p]
    z = (y & ~blocked).astype(np.int8)
    return z[0] if size is None else z


def in_activation_sets(tree: CodebookTree, z) -> bool:
    """True iff no active beam has an active ancestor."""
    z = np.asarray(z)
    above = tree.path_sums(z.astype(float), inclusive=False)
    return bool(np.all((z == 0) | (above == 0)))
