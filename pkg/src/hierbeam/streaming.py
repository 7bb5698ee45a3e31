"""Streaming traffic with circuit admission control.

The radio resource is split into ``xi`` circuits. A flow of beam ``v``
holds ``s[v]`` circuits while present, and a state is admissible iff for
every beam the circuits held along its root path fit in ``xi``. Arrivals
that would leave the admissible set are blocked.

Blocking probabilities come from a leaf-to-root recursion over partial
normalization constants ``c_v(s)`` (the weighted number of admissible
states of the subtree of ``v`` when ``s`` circuits are available), followed
by a pass along each beam's ancestor path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codebook import CodebookTree
from .elastic import TrafficModel
from .errors import Inadmissible, TooLarge

ENUMERATION_LIMIT = 10_000_000


@dataclass(frozen=True)
class StreamingModel:
    tree: CodebookTree
    xi: int
    s: np.ndarray
    traffic: TrafficModel

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.int64)
        if int(self.xi) != self.xi or self.xi < 1:
            raise ValueError("xi must be a positive integer")
        object.__setattr__(self, "xi", int(self.xi))
        if s.shape != (self.tree.n,) or np.any(s < 1) or np.any(s > self.xi):
            raise ValueError("each demand s[v] must be an integer in [1, xi]")
        if len(self.traffic.lam) != self.tree.n:
            raise ValueError("traffic vectors must have one entry per beam")
        object.__setattr__(self, "s", s)

    @property
    def rho(self):
        return self.traffic.rho

    def scaled(self, factor: float) -> "StreamingModel":
        return StreamingModel(self.tree, self.xi, self.s, self.traffic.scaled(factor))


@dataclass
class BlockingReport:
    """Per-beam blocking probabilities.

    ``log_normalization`` is ``ln c(rho)``, the log of the total weight of
    admissible states. ``accepted_fraction[v]`` is the weight of states
    where a ``v`` arrival is admitted, relative to ``c``; it equals
    ``1 - p[v]`` up to rounding.
    """

    p: np.ndarray
    log_normalization: float
    method: str
    ops: int = 0
    accepted_fraction: np.ndarray | None = None
    stderr: np.ndarray | None = None

    @property
    def normalization(self) -> float:
        return math.exp(self.log_normalization)


def admissible(model: StreamingModel, state) -> bool:
    """True iff every root-to-beam path holds at most ``xi`` circuits."""
    n = np.asarray(state, dtype=np.int64)
    if np.any(n < 0):
        return False
    return bool(np.all(model.tree.path_sums(n * model.s) <= model.xi))


def _log_weight(rho, n) -> float:
    lw = 0.0
    for v, k in enumerate(n):
        if k:
            if rho[v] == 0:
                return -math.inf
            lw += k * math.log(rho[v]) - math.lgamma(k + 1)
    return lw


class _Kernel:
    """Scaled coefficients ``rho^l / l!`` for ``l = 0..floor(xi/s)``."""

    def __init__(self, rho: float, s: int, xi: int):
        m = xi // s
        if rho == 0.0:
            self.coef = np.zeros(m + 1)
            self.coef[0] = 1.0
            self.shift = 0.0
        else:
            ell = np.arange(m + 1)
            loga = ell * math.log(rho) - np.array([math.lgamma(k + 1) for k in ell])
            self.shift = float(loga.max())
            self.coef = np.exp(loga - self.shift)
        self.step = s

    def apply(self, f: np.ndarray) -> tuple[np.ndarray, int]:
        """``out[x] = sum_l coef[l] f[x - l*step]`` over valid indices."""
        out = np.zeros_like(f)
        ops = 0
        size = len(f)
        for ell, a in enumerate(self.coef):
            off = ell * self.step
            if off >= size:
                break
            out[off:] += a * f[:size - off]
            ops += size - off
        return out, ops


def blocking_probabilities(model: StreamingModel) -> BlockingReport:
    """Exact blocking probabilities in ``O(xi |V| h)`` table updates per kernel term.

    Every table is stored scaled by a per-beam factor ``exp(L_v)`` so loads
    and circuit counts far beyond the double range stay representable.
    ``ops`` counts scalar multiply-adds.
    """
    tree, xi, s = model.tree, model.xi, model.s
    rho = model.rho
    n = tree.n
    size = xi + 1
    ops = 0
    kern = [_Kernel(float(rho[v]), int(s[v]), xi) for v in range(n)]

    # phase 1: c_v(x), x = 0..xi, scaled so that c_v(xi) = 1
    c = [None] * n
    logc = np.zeros(n)
    log_child = np.zeros(n)
    for v in range(n - 1, -1, -1):
        prod = np.ones(size)
        for u in tree.children[v]:
            prod *= c[u]
            log_child[v] += logc[u]
            ops += size
        cv, k = kern[v].apply(prod)
        ops += k
        top = cv[-1]
        c[v] = cv / top
        logc[v] = log_child[v] + kern[v].shift + math.log(top)

    def shifted(f, w):
        out = np.zeros_like(f)
        if w < size:
            out[w:] = f[:size - w]
        return out

    # windowed mass W_u(x) = c_u(x) - c_u(x - w), accumulated from
    # nonnegative terms only (same scaling as c_u)
    window = {}

    def window_mass(u, w):
        nonlocal ops
        key = (u, w)
        if key in window:
            return window[key]
        kids = tree.children[u]
        if not kids:
            q = np.zeros(size)
            q[:min(w, size)] = 1.0
        else:
            # prod_k c_k(y) - prod_k c_k(y - w), telescoped
            q = np.zeros(size)
            for i, ui in enumerate(kids):
                term = window_mass(ui, w).copy()
                for k in kids[:i]:
                    term *= shifted(c[k], w)
                for k in kids[i + 1:]:
                    term *= c[k]
                q += term
                ops += size * len(kids)
        wv, k = kern[u].apply(q)
        ops += k
        scale = math.exp(kern[u].shift + log_child[u] - logc[u])
        window[key] = wv * scale
        return window[key]

    # phase 2: walk each beam's ancestor path; d tracks the blocked mass
    # (states where a v arrival is refused) and q the admitted mass
    p = np.empty(n)
    accepted = np.empty(n)
    for v in range(n):
        d = window_mass(v, int(s[v]))
        q = shifted(c[v], int(s[v]))
        ops += size
        node = v
        while node != 0:
            a = tree.parent[node]
            other = np.ones(size)
            for u in tree.children[a]:
                if u != node:
                    other *= c[u]
                    ops += size
            rd, k1 = kern[a].apply(d * other)
            rq, k2 = kern[a].apply(q * other)
            ops += k1 + k2 + 2 * size
            scale = math.exp(kern[a].shift + log_child[a] - logc[a])
            d = rd * scale
            q = rq * scale
            node = a
        # c_root(xi) is 1 after scaling
        p[v] = min(1.0, d[-1] / c[0][-1])
        accepted[v] = q[-1] / c[0][-1]
    return BlockingReport(p, float(logc[0] + math.log(c[0][-1])), "recursion", ops, accepted)


def streaming_stationary_prob(model: StreamingModel, state) -> float:
    """Stationary probability of an admissible state."""
    if not admissible(model, state):
        raise Inadmissible(f"state {list(state)} exceeds the circuit budget")
    logc = blocking_probabilities(model).log_normalization
    return math.exp(_log_weight(model.rho, np.asarray(state, dtype=np.int64)) - logc)


def enumerate_states(model: StreamingModel, limit: int = ENUMERATION_LIMIT) -> np.ndarray:
    """All admissible states as rows of an integer array."""
    tree, xi, s = model.tree, model.xi, model.s
    states = np.zeros((1, 0), dtype=np.int64)
    load = np.zeros((1, 0), dtype=np.int64)  # circuits on each root path
    for v in range(tree.n):
        base = np.full(len(states), xi) if v == 0 else xi - load[:, tree.parent[v]]
        kmax = base // s[v]
        counts = kmax + 1
        total = int(counts.sum())
        if total > limit:
            raise TooLarge(f"more than {limit} admissible states")
        idx = np.repeat(np.arange(len(states)), counts)
        starts = np.repeat(np.cumsum(counts) - counts, counts)
        nv = np.arange(total) - starts
        parent_load = 0 if v == 0 else load[idx, tree.parent[v]]
        states = np.column_stack([states[idx], nv])
        load = np.column_stack([load[idx], parent_load + nv * s[v]])
    return states


def blocking_enumeration(model: StreamingModel, limit: int = ENUMERATION_LIMIT) -> BlockingReport:
    """Blocking probabilities by summing the product-form weights of all states."""
    tree, xi, s = model.tree, model.xi, model.s
    rho = model.rho
    states = enumerate_states(model, limit)
    fact = np.array([math.factorial(k) for k in range(int(states.max(initial=0)) + 1)], dtype=float)
    w = np.ones(len(states))
    for v in range(tree.n):
        w *= np.power(rho[v], states[:, v]) / fact[states[:, v]]
    load = states * s
    for v in range(1, tree.n):
        load[:, v] += load[:, tree.parent[v]]
    # worst path below each beam
    worst = load.copy()
    for v in range(tree.n - 1, 0, -1):
        p = tree.parent[v]
        np.maximum(worst[:, p], worst[:, v], out=worst[:, p])
    total = math.fsum(w)
    p = np.array([math.fsum(w[worst[:, v] + s[v] > xi]) / total for v in range(tree.n)])
    return BlockingReport(p, math.log(total), "enumeration", len(states), 1.0 - p)
