"""Brute-force reference computations.

These deliberately avoid the recursions they are used to check: grid
search instead of the allocation DP, a linear scan instead of tree descent,
the Erlang-B recursion for single-beam loss systems, and so on.
"""
from __future__ import annotations

import itertools

import numpy as np

from .alloc import f_alpha
from .codebook import CodebookTree, FlowPopulation


def associate_scan(tree: CodebookTree, point) -> int | None:
    """Deepest covering beam found by scanning every region."""
    best = None
    for v in range(tree.n):
        if tree.regions[v].contains(point):
            if best is None or tree.depth[v] > tree.depth[best]:
                best = v
    return best


def _gamma_batch(tree: CodebookTree, kappa: np.ndarray) -> np.ndarray:
    gamma = np.empty_like(kappa)
    free = np.empty_like(kappa)
    for v in range(tree.n):
        above = 1.0 if v == 0 else free[:, tree.parent[v]]
        gamma[:, v] = kappa[:, v] * above
        free[:, v] = above * (1.0 - kappa[:, v])
    return gamma


def optimal_delta(flows: FlowPopulation, alpha: float) -> np.ndarray:
    """Within-beam split maximizing the utility for any fixed beam activity.

    Stationarity of ``sum f_alpha(r_k g d_k)`` under ``sum d_k = 1`` gives
    ``d_k`` proportional to ``r_k ** (1/alpha - 1)``.
    """
    w = flows.rate ** (1.0 / alpha - 1.0)
    tot = np.bincount(flows.beam, weights=w)
    return w / tot[flows.beam]


def grid_search_alpha_fair(tree: CodebookTree, flows: FlowPopulation, alpha: float,
                           resolution: float = 1e-3, coarse: int = 20):
    """Maximize the alpha-fair utility over ``kappa`` on a lattice.

    The lattice has spacing ``resolution``. An exhaustive scan is done on a
    coarse sub-lattice, then the window around the incumbent is rescanned
    at successively finer spacings down to ``resolution``.

    Returns ``(utility, kappa)``.
    """
    n = tree.n
    units = int(round(1.0 / resolution))
    delta = optimal_delta(flows, alpha)

    def evaluate(grid_units):
        kappa = grid_units / units
        gamma = _gamma_batch(tree, kappa)
        x = flows.rate[None, :] * gamma[:, flows.beam] * delta[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = f_alpha(x, alpha).sum(axis=1)
        u = np.where(np.isnan(u), -np.inf, u)
        i = int(np.argmax(u))
        return u[i], grid_units[i]

    step = max(1, units // coarse)
    axes = [np.arange(0, units + 1, step)] * n
    axes = [np.union1d(a, [units]) for a in axes]
    best_u, best = evaluate(np.array(list(itertools.product(*axes)), dtype=float))
    while step > 1:
        new_step = max(1, step // 5)
        axes = []
        for c in best:
            lo = max(0, int(c) - 2 * step)
            hi = min(units, int(c) + 2 * step)
            axes.append(np.arange(lo, hi + 1, new_step))
        step = new_step
        u, cand = evaluate(np.array(list(itertools.product(*axes)), dtype=float))
        if u >= best_u:
            best_u, best = u, cand
    return float(best_u), best / units


def erlang_b(servers: int, load: float) -> float:
    """Erlang-B blocking via ``B(k) = a B(k-1) / (k + a B(k-1))``."""
    b = 1.0
    for k in range(1, servers + 1):
        b = load * b / (k + load * b)
    return b


def max_path_sum(tree: CodebookTree, x) -> float:
    """Largest root-to-node sum, by enumerating every path explicitly."""
    best = 0.0
    for v in range(tree.n):
        best = max(best, sum(x[u] for u in tree.ancestors(v, inclusive=True)))
    return best


def mm1_busy_moments(rate: float, load: float) -> tuple[float, float]:
    """Mean and second moment of an M/M/1 busy period."""
    return 1.0 / (rate * (1.0 - load)), 2.0 / (rate ** 2 * (1.0 - load) ** 3)
