"""Exact stationary solution of the elastic CTMC on a truncated lattice."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..codebook import CodebookTree
from ..elastic import TrafficModel
from ..errors import TooLarge

MAX_STATES = 200_000


@dataclass
class CtmcSolution:
    """``boundary_mass`` is the stationary mass of states with ``cap`` flows."""

    expected_n: np.ndarray
    boundary_mass: float
    n_states: int
    cap: int
    empty_prob: float = math.nan


def lattice(n_beams: int, cap: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``n_beams`` with sum at most ``cap``."""
    states = np.zeros((1, 0), dtype=np.int64)
    used = np.zeros(1, dtype=np.int64)
    for _ in range(n_beams):
        counts = cap - used + 1
        idx = np.repeat(np.arange(len(states)), counts)
        starts = np.repeat(np.cumsum(counts) - counts, counts)
        k = np.arange(int(counts.sum())) - starts
        states = np.column_stack([states[idx], k])
        used = used[idx] + k
    return states


def service_fractions(tree: CodebookTree, states: np.ndarray, policy: str) -> np.ndarray:
    """Beam activities ``gamma(n)`` for every row of ``states``."""
    sub = states.astype(float).copy()
    for v in range(tree.n - 1, 0, -1):
        sub[:, tree.parent[v]] += sub[:, v]
    if policy == "mt":
        return (sub == states).astype(float)
    gamma = np.zeros_like(sub)
    free = np.ones_like(sub)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(sub > 0, states / sub, 0.0)
    for v in range(tree.n):
        above = 1.0 if v == 0 else free[:, tree.parent[v]]
        gamma[:, v] = kappa[:, v] * above
        free[:, v] = above * (1.0 - kappa[:, v])
    return gamma


def solve_truncated_ctmc(tree: CodebookTree, traffic: TrafficModel, policy: str, state_cap: int) -> CtmcSolution:
    """Stationary flow counts of the CTMC restricted to ``sum(n) <= state_cap``.

    Arrivals that would exceed the cap are dropped, which biases the counts
    low by an amount controlled by ``boundary_mass``.

    Raises
    ------
    TooLarge
        If the truncated lattice has more than 200000 states.
    """
    if policy not in ("pf", "mt"):
        raise ValueError(f"policy must be 'pf' or 'mt', got {policy!r}")
    n_states = math.comb(state_cap + tree.n, tree.n)
    if n_states > MAX_STATES:
        raise TooLarge(f"{n_states} states exceed the limit of {MAX_STATES}")
    states = lattice(tree.n, state_cap)
    base = state_cap + 1
    weights = base ** np.arange(tree.n - 1, -1, -1, dtype=np.int64)
    keys = states @ weights
    order = np.argsort(keys)
    sorted_keys = keys[order]

    def index_of(target):
        return order[np.searchsorted(sorted_keys, target @ weights)]

    total = states.sum(axis=1)
    rate_out = traffic.r * service_fractions(tree, states, policy) * (states > 0)
    rows, cols, vals = [], [], []
    for v in range(tree.n):
        e = np.zeros(tree.n, dtype=np.int64)
        e[v] = 1
        up = np.flatnonzero(total < state_cap)
        if traffic.lam[v] > 0 and len(up):
            rows.append(up)
            cols.append(index_of(states[up] + e))
            vals.append(np.full(len(up), traffic.lam[v]))
        down = np.flatnonzero(rate_out[:, v] > 0)
        if len(down):
            rows.append(down)
            cols.append(index_of(states[down] - e))
            vals.append(rate_out[down, v])
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    m = len(states)
    q = sp.coo_matrix((vals, (rows, cols)), shape=(m, m)).tocsr()
    q = q - sp.diags(np.asarray(q.sum(axis=1)).ravel())
    # pin pi(empty state) = 1 and drop its balance equation; keeps the
    # system sparse, unlike swapping in a dense normalization row
    empty = int(index_of(np.zeros((1, tree.n), dtype=np.int64))[0])
    keep = np.flatnonzero(np.arange(m) != empty)
    qt = q.T.tocsr()
    a = qt[keep][:, keep].tocsc()
    rhs = -qt[keep][:, [empty]].toarray().ravel()
    pi = np.empty(m)
    pi[empty] = 1.0
    pi[keep] = spla.spsolve(a, rhs, permc_spec="MMD_AT_PLUS_A") if len(keep) else np.zeros(0)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return CtmcSolution(pi @ states, float(pi[total == state_cap].sum()), m, state_cap, float(pi[empty]))


def solve_to_tolerance(tree: CodebookTree, traffic: TrafficModel, policy: str,
                       boundary_tol: float = 1e-8, start_cap: int = 16) -> CtmcSolution:
    """Grow the cap until the boundary mass drops below ``boundary_tol``.

    The boundary mass decays roughly geometrically in the cap, so each new
    cap is extrapolated from the last solve (with a 10% margin).
    """
    cap = start_cap
    while True:
        sol = solve_truncated_ctmc(tree, traffic, policy, cap)
        b = sol.boundary_mass
        if b < boundary_tol:
            return sol
        if 0.0 < b < 1.0:
            target = math.ceil(1.1 * cap * math.log(boundary_tol) / math.log(b))
        else:
            target = 2 * cap
        cap = min(max(target, cap + 4), 2 * cap)
