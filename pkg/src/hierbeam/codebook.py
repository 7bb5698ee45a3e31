"""Hierarchical codebooks: beam trees, covered regions, gains and flow association.

Nodes are addressed by 0-based index. Index 0 is the root and indices are
sorted by non-decreasing depth, so ``parent[v] < v`` for every non-root
``v``. The user-facing identifiers from an input file are kept in
``CodebookTree.labels``.
"""
from __future__ import annotations

import json
import json.decoder
import json.scanner
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, InvalidTree, PointOutsideCell


@dataclass(frozen=True)
class Region:
    """Axis-aligned box ``[x_min, x_max) x [y_min, y_max)``."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate region {self.as_list()}")

    def contains(self, point) -> bool:
        x, y = point
        return self.x_min <= x < self.x_max and self.y_min <= y < self.y_max

    def contains_region(self, other: "Region") -> bool:
        return (self.x_min <= other.x_min and other.x_max <= self.x_max
                and self.y_min <= other.y_min and other.y_max <= self.y_max)

    def overlaps(self, other: "Region") -> bool:
        # half-open boxes sharing only an edge do not overlap
        return (max(self.x_min, other.x_min) < min(self.x_max, other.x_max)
                and max(self.y_min, other.y_min) < min(self.y_max, other.y_max))

    def as_list(self):
        return [self.x_min, self.x_max, self.y_min, self.y_max]


class CodebookTree:
    """Directed tree of beams.

    Parameters
    ----------
    parent : sequence of int
        ``parent[v]`` is the parent index of node ``v``; the root (index 0)
        has parent ``-1`` (``None`` is accepted too).
    regions : sequence of Region, optional
        Covered region of each beam. Abstract trees used only for traffic
        analysis may omit regions.
    labels : sequence, optional
        External identifiers, defaults to ``1..|V|``.

    Raises
    ------
    InvalidTree
        If the parent array does not describe a rooted tree numbered by
        non-decreasing depth.
    """

    def __init__(self, parent: Sequence[int | None], regions: Sequence[Region] | None = None,
                 labels: Sequence[Hashable] | None = None):
        par = np.array([-1 if p is None else int(p) for p in parent], dtype=np.int64)
        n = len(par)
        if n == 0:
            raise InvalidTree("a codebook needs at least one beam")
        if par[0] != -1:
            raise InvalidTree("node 0 must be the root")
        roots = np.flatnonzero(par < 0)
        if len(roots) != 1:
            raise InvalidTree(f"expected exactly one root, found {len(roots)}")
        for v in range(1, n):
            if not 0 <= par[v] < v:
                raise InvalidTree(f"parent of node {v} must precede it, got {par[v]}")
        depth = np.zeros(n, dtype=np.int64)
        for v in range(1, n):
            depth[v] = depth[par[v]] + 1
        if np.any(np.diff(depth) < 0):
            raise InvalidTree("nodes are not sorted by non-decreasing depth")
        children = [[] for _ in range(n)]
        for v in range(1, n):
            children[par[v]].append(v)

        if regions is not None and len(regions) != n:
            raise InvalidTree(f"{len(regions)} regions for {n} nodes")
        if labels is not None and len(labels) != n:
            raise InvalidTree(f"{len(labels)} labels for {n} nodes")

        par.setflags(write=False)
        depth.setflags(write=False)
        self.parent = par
        self.depth = depth
        self.children = tuple(tuple(c) for c in children)
        self.degree = np.array([len(c) for c in children], dtype=np.int64)
        self.degree.setflags(write=False)
        self.regions = tuple(regions) if regions is not None else None
        self.labels = tuple(labels) if labels is not None else tuple(range(1, n + 1))

    # construction helpers ------------------------------------------------

    @classmethod
    def from_parent_map(cls, parent: Mapping[Hashable, Hashable | None],
                        regions: Mapping[Hashable, Region] | None = None) -> "CodebookTree":
        """Build a tree from ``{label: parent_label}``, renumbering by depth.

        Nodes are renumbered by ``(depth, label)`` so a file whose labels are
        already depth-sorted keeps its order.
        """
        labels = list(parent)
        roots = [k for k in labels if parent[k] is None]
        if len(roots) != 1:
            raise InvalidTree(f"expected exactly one root, found {len(roots)}")
        kids: dict = {k: [] for k in labels}
        for k in labels:
            p = parent[k]
            if p is None:
                continue
            if p not in kids:
                raise InvalidTree(f"node {k!r} has unknown parent {p!r}")
            kids[p].append(k)
        depth = {roots[0]: 0}
        stack = [roots[0]]
        while stack:
            u = stack.pop()
            for c in kids[u]:
                depth[c] = depth[u] + 1
                stack.append(c)
        if len(depth) != len(labels):
            unreachable = sorted(set(labels) - set(depth), key=repr)
            raise InvalidTree(f"nodes not reachable from the root (cycle?): {unreachable}")
        try:
            order = sorted(labels, key=lambda k: (depth[k], k))
        except TypeError:
            order = sorted(labels, key=lambda k: (depth[k], repr(k)))
        index = {k: i for i, k in enumerate(order)}
        par = [-1 if parent[k] is None else index[parent[k]] for k in order]
        regs = [regions[k] for k in order] if regions is not None else None
        return cls(par, regs, order)

    @classmethod
    def from_edges(cls, edges, n_nodes: int | None = None, regions=None) -> "CodebookTree":
        """Build from an edge list of labels, e.g. ``[(1, 2), (1, 3)]``."""
        parent: dict = {}
        for a, b in edges:
            if b in parent and parent[b] is not None:
                raise InvalidTree(f"node {b!r} has two parents")
            parent[b] = a
            parent.setdefault(a, None)
        if n_nodes is not None:
            for k in range(1, n_nodes + 1):
                parent.setdefault(k, None)
        if not parent:
            parent = {1: None}
        return cls.from_parent_map(parent, regions)

    @classmethod
    def line(cls, n: int) -> "CodebookTree":
        return cls([-1] + list(range(n - 1)))

    @classmethod
    def regular(cls, degree: int, height: int) -> "CodebookTree":
        parent = [-1]
        level = [0]
        for _ in range(height):
            nxt = []
            for u in level:
                for _ in range(degree):
                    parent.append(u)
                    nxt.append(len(parent) - 1)
            level = nxt
        return cls(parent)

    # queries ---------------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.parent)

    @property
    def height(self) -> int:
        return int(self.depth[-1])

    @property
    def max_degree(self) -> int:
        return int(self.degree.max())

    @property
    def is_line(self) -> bool:
        return bool(np.all(self.degree <= 1))

    def is_leaf(self, v: int) -> bool:
        return self.degree[v] == 0

    def edges(self):
        return [(int(self.parent[v]), v) for v in range(1, self.n)]

    def ancestors(self, v: int, inclusive: bool = False) -> list[int]:
        """Ancestors of ``v`` ordered from nearest to the root."""
        out = [v] if inclusive else []
        u = self.parent[v]
        while u >= 0:
            out.append(int(u))
            u = self.parent[u]
        return out

    def descendants(self, v: int, inclusive: bool = False) -> list[int]:
        out = [v] if inclusive else []
        stack = list(self.children[v])
        while stack:
            u = stack.pop()
            out.append(u)
            stack.extend(self.children[u])
        return sorted(out)

    def path_sums(self, x, inclusive: bool = True) -> np.ndarray:
        """Sum of ``x`` over the ancestors of each node (optionally including itself)."""
        x = np.asarray(x, dtype=float)
        out = x.copy()
        for v in range(1, self.n):
            out[v] += out[self.parent[v]]
        return out if inclusive else out - x

    def subtree_sums(self, x, inclusive: bool = True) -> np.ndarray:
        """Sum of ``x`` over the descendants of each node (optionally including itself)."""
        x = np.asarray(x, dtype=float)
        out = x.copy()
        for v in range(self.n - 1, 0, -1):
            out[self.parent[v]] += out[v]
        return out if inclusive else out - x

    def __repr__(self):
        return f"CodebookTree(n={self.n}, edges={[(self.labels[a], self.labels[b]) for a, b in self.edges()]})"


@dataclass(frozen=True)
class GainModel:
    """Received power per beam plus the link budget constants.

    ``gain[v]`` is the (constant) received signal power anywhere inside the
    region of beam ``v``; outside it the power is taken to be zero.
    """

    gain: np.ndarray
    noise_power: float
    bandwidth: float

    def __post_init__(self):
        g = np.asarray(self.gain, dtype=float)
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("gains must be finite and nonnegative")
        if self.noise_power <= 0 or self.bandwidth <= 0:
            raise ValueError("noise_power and bandwidth must be positive")
        object.__setattr__(self, "gain", g)

    def rates(self) -> np.ndarray:
        return self.bandwidth * np.log2(1.0 + self.gain / self.noise_power)


def compute_rate(gain_model: GainModel, beam: int) -> float:
    """Shannon rate ``W log2(1 + g / N0^2)`` of a flow served by ``beam`` (bits/s)."""
    return gain_model.bandwidth * math.log2(1.0 + gain_model.gain[beam] / gain_model.noise_power)


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)

    def add(self, name, failures, skipped=False):
        self.checks[name] = {"ok": not failures, "skipped": skipped, "failures": list(failures)}

    @property
    def passed(self) -> bool:
        return all(c["ok"] for c in self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, c in self.checks.items() if not c["ok"]]

    def __str__(self):
        lines = []
        for k, c in self.checks.items():
            status = "skip" if c["skipped"] else ("ok" if c["ok"] else "FAIL")
            lines.append(f"{k}: {status}")
            lines.extend(f"  {msg}" for msg in c["failures"])
        return "\n".join(lines)


def validate_tree(tree: CodebookTree, gains: GainModel | None = None) -> ValidationReport:
    """Check the tree structure and the three hierarchy properties.

    ``nested``: child regions lie inside the parent region. ``disjoint``:
    sibling regions do not overlap. ``gain_monotone``: gains strictly
    increase from parent to child. Region checks are skipped for trees
    without regions, the gain check when ``gains`` is omitted.
    """
    rep = ValidationReport()
    n = tree.n
    par = tree.parent

    rep.add("single_root", [] if np.count_nonzero(par < 0) == 1 else ["root count != 1"])
    rep.add("edge_count", [] if len(tree.edges()) == n - 1 else ["|E| != |V| - 1"])
    rep.add("depth_sorted", [f"edge {e} not increasing" for e in tree.edges() if not e[0] < e[1]])
    seen = set(tree.descendants(0, inclusive=True))
    rep.add("reachable", [f"node {v} unreachable" for v in range(n) if v not in seen])

    lab = tree.labels
    if tree.regions is None:
        rep.add("nested", [], skipped=True)
        rep.add("disjoint", [], skipped=True)
    else:
        reg = tree.regions
        rep.add("nested", [f"region of {lab[b]} not inside region of {lab[a]}"
                           for a, b in tree.edges() if not reg[a].contains_region(reg[b])])
        bad = []
        for v in range(n):
            kids = tree.children[v]
            for i, a in enumerate(kids):
                for b in kids[i + 1:]:
                    if reg[a].overlaps(reg[b]):
                        bad.append(f"siblings {lab[a]} and {lab[b]} overlap")
        rep.add("disjoint", bad)

    if gains is None:
        rep.add("gain_monotone", [], skipped=True)
    else:
        g = gains.gain
        if len(g) != n:
            rep.add("gain_monotone", [f"{len(g)} gains for {n} nodes"])
        else:
            rep.add("gain_monotone", [f"gain of {lab[b]} <= gain of parent {lab[a]}"
                                      for a, b in tree.edges() if not g[b] > g[a]])
    return rep


def association_trace(tree: CodebookTree, point) -> tuple[int, int]:
    """Descend from the root; return ``(beam, number_of_region_tests)``."""
    if tree.regions is None:
        raise ValueError("tree has no regions")
    reg = tree.regions
    if not reg[0].contains(point):
        raise PointOutsideCell(f"point {tuple(point)} is outside the cell")
    v, tests = 0, 0
    while True:
        for c in tree.children[v]:
            tests += 1
            if reg[c].contains(point):
                v = c
                break
        else:
            return v, tests


def associate(tree: CodebookTree, point) -> int:
    """Return the deepest beam whose region covers ``point``."""
    return association_trace(tree, point)[0]


@dataclass(frozen=True)
class FlowPopulation:
    """Static set of flows: serving beam and achievable rate of each flow."""

    beam: np.ndarray
    rate: np.ndarray
    locations: np.ndarray | None = None
    ids: tuple | None = None

    def __post_init__(self):
        beam = np.asarray(self.beam, dtype=np.int64).reshape(-1)
        rate = np.asarray(self.rate, dtype=float).reshape(-1)
        if beam.shape != rate.shape:
            raise ValueError("beam and rate must have the same length")
        object.__setattr__(self, "beam", beam)
        object.__setattr__(self, "rate", rate)
        if self.ids is None:
            object.__setattr__(self, "ids", tuple(range(len(beam))))

    def __len__(self):
        return len(self.beam)

    def counts(self, n_nodes: int) -> np.ndarray:
        return np.bincount(self.beam, minlength=n_nodes)

    @classmethod
    def from_counts(cls, counts, rates=None) -> "FlowPopulation":
        """``counts[v]`` flows on beam ``v`` with per-beam rate ``rates[v]`` (default 1)."""
        counts = np.asarray(counts, dtype=np.int64)
        beam = np.repeat(np.arange(len(counts)), counts)
        r = np.ones(len(counts)) if rates is None else np.asarray(rates, dtype=float)
        return cls(beam, r[beam])

    @classmethod
    def from_points(cls, tree: CodebookTree, gains: GainModel, points, ids=None) -> "FlowPopulation":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        beam = np.array([associate(tree, p) for p in pts], dtype=np.int64)
        rates = gains.rates()
        return cls(beam, rates[beam], pts, None if ids is None else tuple(ids))


# codebook files ----------------------------------------------------------

class _LocatedDict(dict):
    line = None


def _located_decoder(text):
    """JSON decoder that records the source line of every object."""
    dec = json.JSONDecoder()

    def parse_object(s_and_end, strict, scan_once, object_hook, object_pairs_hook, memo=None):
        s, end = s_and_end
        line = s.count("\n", 0, end) + 1
        obj, end = json.decoder.JSONObject(s_and_end, strict, scan_once, None, None, memo)
        out = _LocatedDict(obj)
        out.line = line
        return out, end

    dec.parse_object = parse_object
    dec.scan_once = json.scanner.py_make_scanner(dec)
    return dec


def parse_codebook(text: str) -> tuple[CodebookTree, GainModel]:
    """Parse a codebook document.

    Expected shape::

        {"nodes": [{"id": 1, "parent": null, "box": [x0, x1, y0, y1], "gain": g}, ...],
         "noise_power": 1e-12, "bandwidth": 1e6}

    Raises
    ------
    ConfigError
        With the line of the offending node when the document is malformed
        or violates the hierarchy properties.
    """
    try:
        doc = _located_decoder(text).decode(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno) from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object", 1)
    unknown = set(doc) - {"nodes", "noise_power", "bandwidth"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", doc.line)
    nodes = doc.get("nodes")
    if not isinstance(nodes, list) or not nodes:
        raise ConfigError("'nodes' must be a non-empty list", doc.line)

    parent, regions, gain, where = {}, {}, {}, {}
    for item in nodes:
        line = getattr(item, "line", None)
        if not isinstance(item, dict):
            raise ConfigError("node entries must be objects", doc.line)
        extra = set(item) - {"id", "parent", "box", "gain"}
        if extra:
            raise ConfigError(f"unknown node keys {sorted(extra)}", line)
        if "id" not in item or "box" not in item or "gain" not in item:
            raise ConfigError("node needs 'id', 'box' and 'gain'", line)
        k = item["id"]
        if k in parent:
            raise ConfigError(f"duplicate node id {k!r}", line)
        box = item["box"]
        if not (isinstance(box, list) and len(box) == 4):
            raise ConfigError(f"node {k!r}: box must be [x0, x1, y0, y1]", line)
        try:
            regions[k] = Region(*map(float, box))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"node {k!r}: {exc}", line) from None
        g = item["gain"]
        if not isinstance(g, (int, float)) or g < 0:
            raise ConfigError(f"node {k!r}: gain must be a nonnegative number", line)
        parent[k] = item.get("parent")
        gain[k] = float(g)
        where[k] = line

    try:
        tree = CodebookTree.from_parent_map(parent, regions)
    except InvalidTree as exc:
        raise ConfigError(str(exc), doc.line) from None
    try:
        gm = GainModel(np.array([gain[k] for k in tree.labels]),
                       float(doc.get("noise_power", 1.0)), float(doc.get("bandwidth", 1.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), doc.line) from None

    rep = validate_tree(tree, gm)
    if not rep.passed:
        # localize to the first node named in a failure message
        for name in rep.failed():
            msg = rep.checks[name]["failures"][0]
            for tok in msg.replace(",", " ").split():
                k = next((k for k in tree.labels if str(k) == tok), None)
                if k is not None:
                    raise ConfigError(f"{name}: {msg}", where[k])
            raise ConfigError(f"{name}: {msg}", doc.line)
    return tree, gm


def load_codebook(path) -> tuple[CodebookTree, GainModel]:
    return parse_codebook(Path(path).read_text())


def dump_codebook(tree: CodebookTree, gains: GainModel) -> str:
    if tree.regions is None:
        raise ValueError("tree has no regions")
    nodes = []
    for v in range(tree.n):
        p = tree.parent[v]
        nodes.append({"id": tree.labels[v], "parent": None if p < 0 else tree.labels[p],
                      "box": tree.regions[v].as_list(), "gain": float(gains.gain[v])})
    doc = {"nodes": nodes, "noise_power": gains.noise_power, "bandwidth": gains.bandwidth}
    lines = ["{", '  "nodes": [']
    lines.append(",\n".join("    " + json.dumps(nd) for nd in nodes))
    lines.append("  ],")
    lines.append(f'  "noise_power": {json.dumps(doc["noise_power"])},')
    lines.append(f'  "bandwidth": {json.dumps(doc["bandwidth"])}')
    lines.append("}")
    return "\n".join(lines) + "\n"
