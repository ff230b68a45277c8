"""Forests of paired rooted ternary trees indexing the Duhamel expansion.

A graph is an ordered list of 2k plane trees; trees 2j and 2j+1 form the
j-th root pair (ket and bra side).  Every vertex has a father edge and three
ordered son edges, exactly one of which is marked (the continuation of the
particle line).  Leaves are paired by following marked edges upwards: a leaf
reached from an unmarked son edge of v pairs with the leaf below the other
unmarked son of v, and a leaf reached from a root pairs with the leaf below
the partner root.

Text encoding: a leaf is ".", a vertex "(s0,s1,s2)" with "*" before the
marked son, trees are joined by "|", followed by ";roots=..." and
";leaves=..." pairing maps (leaves numbered in depth-first order).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import NamedTuple, Optional


class GraphLimitError(ValueError):
    pass


class InvariantError(ValueError):
    def __init__(self, names):
        self.names = list(names)
        super().__init__("invariant(s) violated: " + ", ".join(self.names))


class Vertex(NamedTuple):
    sons: tuple  # three entries, each a Vertex or None (leaf)
    marks: tuple = (True, False, False)


Tree = Optional[Vertex]


class Edge(NamedTuple):
    index: int
    tree: int
    parent: int | None  # vertex id, None for a root edge
    slot: int | None
    child: int | None  # vertex id, None for a leaf edge
    tau: int


def _encode_tree(t: Tree) -> str:
    if t is None:
        return "."
    return "(" + ",".join(("*" if mk else "") + _encode_tree(s) for s, mk in zip(t.sons, t.marks)) + ")"


@dataclass(frozen=True)
class FeynmanGraph:
    trees: tuple

    @property
    def k(self) -> int:
        return len(self.trees) // 2

    @cached_property
    def _flat(self):
        """Edges and vertices in depth-first order; vertex ids count from 0 across the forest."""
        edges, parents, vertex_tree = [], [], []

        def walk(t, tree, parent, slot):
            eid = len(edges)
            tau = 1 if tree % 2 == 0 else -1
            if t is None:
                edges.append(Edge(eid, tree, parent, slot, None, tau))
                return
            vid = len(parents)
            parents.append(parent)
            vertex_tree.append((tree, t))
            edges.append(Edge(eid, tree, parent, slot, vid, tau))
            for i, s in enumerate(t.sons):
                walk(s, tree, vid, i)

        for j, t in enumerate(self.trees):
            walk(t, j, None, None)
        return edges, parents, vertex_tree

    @property
    def edges(self) -> list[Edge]:
        return self._flat[0]

    @property
    def m(self) -> int:
        return len(self._flat[1])

    @property
    def roots(self) -> list[Edge]:
        return [e for e in self.edges if e.parent is None]

    @property
    def leaves(self) -> list[Edge]:
        return [e for e in self.edges if e.child is None]

    @property
    def vertex_parents(self) -> list[int | None]:
        return list(self._flat[1])

    @property
    def root_pairing(self) -> list[tuple[int, int]]:
        return [(2 * j, 2 * j + 1) for j in range(self.k)]

    def _marks(self) -> list[tuple]:
        return [t.marks for _, t in self._flat[2]]

    def _leaf_keys(self) -> list[tuple]:
        """Pairing key of each leaf: ("v", vertex) or ("r", root pair)."""
        edges = self.edges
        marks = self._marks()
        by_child = {e.child: e for e in edges if e.child is not None}
        keys = []
        for leaf in self.leaves:
            e = leaf
            while e.parent is not None and marks[e.parent][e.slot]:
                e = by_child[e.parent]
            keys.append(("r", e.tree // 2) if e.parent is None else ("v", e.parent))
        return keys

    @property
    def leaf_pairing(self) -> list[tuple[int, int]]:
        """Pairs of leaf positions (depth-first numbering); raises if the rule is not a matching."""
        groups: dict = {}
        for i, key in enumerate(self._leaf_keys()):
            groups.setdefault(key, []).append(i)
        if any(len(v) != 2 for v in groups.values()):
            raise InvariantError(["leaf_pairing"])
        return sorted(tuple(v) for v in groups.values())

    def encode(self) -> str:
        body = "|".join(_encode_tree(t) for t in self.trees)
        roots = ",".join(f"{a}-{b}" for a, b in self.root_pairing)
        try:
            leaves = ",".join(f"{a}-{b}" for a, b in self.leaf_pairing)
        except InvariantError:
            leaves = "!"
        return f"{body};roots={roots};leaves={leaves}"

    def __str__(self) -> str:
        return self.encode()


def _parse_tree(s: str, i: int):
    if s[i] == ".":
        return None, i + 1
    if s[i] != "(":
        raise ValueError(f"unexpected {s[i]!r} at {i}")
    i += 1
    sons, marks = [], []
    for n in range(3):
        mk = s[i] == "*"
        if mk:
            i += 1
        t, i = _parse_tree(s, i)
        sons.append(t)
        marks.append(mk)
        if s[i] != ("," if n < 2 else ")"):
            raise ValueError(f"malformed vertex at {i}")
        i += 1
    return Vertex(tuple(sons), tuple(marks)), i


def decode(text: str) -> FeynmanGraph:
    """Inverse of FeynmanGraph.encode; the stored pairing maps are checked against the rule."""
    parts = text.split(";")
    trees = []
    for chunk in parts[0].split("|"):
        t, end = _parse_tree(chunk, 0)
        if end != len(chunk):
            raise ValueError("trailing characters in tree encoding")
        trees.append(t)
    g = FeynmanGraph(tuple(trees))
    if g.encode() != text:
        raise ValueError("pairing maps in the encoding do not match the graph")
    return g


def canonical(g: FeynmanGraph) -> str:
    return g.encode()


def _attach(t: Tree, target: int, counter: list) -> Tree:
    """Replace the leaf with depth-first leaf index ``target`` by a fresh vertex."""
    if t is None:
        hit = counter[0] == target
        counter[0] += 1
        return Vertex((None, None, None)) if hit else None
    return Vertex(tuple(_attach(s, target, counter) for s in t.sons), t.marks)


def _leaf_count(t: Tree) -> int:
    return 1 if t is None else sum(_leaf_count(s) for s in t.sons)


MAX_SIZE = 8


@lru_cache(maxsize=64)
def _enumerate(k: int, m: int) -> tuple:
    if m == 0:
        return (FeynmanGraph((None,) * (2 * k)),)
    seen = {}
    for g in _enumerate(k, m - 1):
        for j, t in enumerate(g.trees):
            for leaf in range(_leaf_count(t)):
                new = list(g.trees)
                new[j] = _attach(t, leaf, [0])
                h = FeynmanGraph(tuple(new))
                seen.setdefault(h.encode(), h)
    return tuple(seen[key] for key in sorted(seen))


def enumerate_graphs(k: int, m: int) -> list[FeynmanGraph]:
    """All graphs with 2k trees and m vertices, built by sequential attachment and deduplicated."""
    if k < 1 or m < 0:
        raise ValueError("need k >= 1 and m >= 0")
    if k + m > MAX_SIZE:
        raise GraphLimitError(f"k + m = {k + m} exceeds the desk-scale limit {MAX_SIZE}")
    return list(_enumerate(k, m))


def fuss_catalan_count(k: int, m: int) -> int:
    """Closed-form number of forests of 2k plane ternary trees with m internal vertices."""
    r = 2 * k
    return r * math.comb(3 * m + r, m) // (3 * m + r)


@dataclass
class PairingReport:
    ok: bool
    failures: list

    def raise_if_failed(self):
        if not self.ok:
            raise InvariantError(self.failures)


def validate_pairing(g: FeynmanGraph) -> PairingReport:
    failures = []
    if any(sum(mk) != 1 for mk in g._marks()):
        failures.append("marked_son")
    k, m = g.k, g.m
    counts_ok = (len(g.edges) == 2 * k + 3 * m and len(g.roots) == 2 * k
                 and len(g.leaves) == 2 * k + 2 * m)
    if not counts_ok:
        failures.append("edge_counts")
    if len(g.trees) % 2 or sorted(sum(g.root_pairing, ())) != list(range(len(g.trees))):
        failures.append("root_pairing")
    try:
        pairs = g.leaf_pairing
        if sorted(sum(pairs, ())) != list(range(len(g.leaves))):
            failures.append("leaf_pairing")
    except InvariantError:
        failures.append("leaf_pairing")
    if not _is_strict_order(g.vertex_parents):
        failures.append("partial_order")
    return PairingReport(not failures, failures)


def _is_strict_order(parents: list) -> bool:
    """v < v' iff v lies on the path from v' to the roots: acyclic father chains suffice."""
    n = len(parents)
    for v in range(n):
        seen, p = 0, parents[v]
        while p is not None:
            if p == v or seen > n:
                return False
            p = parents[p]
            seen += 1
    return True


def move_mark(g: FeynmanGraph, source: int, target: int) -> FeynmanGraph:
    """Fault injection: move vertex ``source``'s mark onto an unmarked son of vertex ``target``."""
    vt = [t for _, t in g._flat[2]]

    def rebuild(t):
        if t is None:
            return None
        vid = order[id(t)]
        marks = list(t.marks)
        if vid == source:
            marks = [False, False, False]
        if vid == target:
            marks[marks.index(False)] = True
        return Vertex(tuple(rebuild(s) for s in t.sons), tuple(marks))

    order = {id(t): i for i, t in enumerate(vt)}
    return FeynmanGraph(tuple(rebuild(t) for t in g.trees))


def _frac(x: Fraction):
    return int(x) if x.denominator == 1 else x


def power_counting(k: int, m: int, leaf_decay=Fraction(5, 2), observable_decay=None) -> dict:
    """Exponent budget of kappa: volume, leaf decay, propagators (2 per edge) and observable."""
    leaf_decay = Fraction(leaf_decay)
    obs = Fraction(6 * k if observable_decay is None else observable_decay)
    volume = Fraction(10 * k + 10 * m)
    leaf = -leaf_decay * (2 * k + 2 * m)
    prop = -Fraction(2) * (2 * k + 3 * m)
    total = volume + leaf + prop - obs
    return {"volume": _frac(volume), "leaf": _frac(leaf), "propagator": _frac(prop),
            "observable": _frac(-obs), "total": _frac(total)}


def amplitude_bound(k: int, m: int, t: float, count: int | None = None) -> dict:
    """Exponent record of |K_Lambda,t| <= C^(k+m) t^(m/4); no numeric C is claimed."""
    if t < 0:
        raise ValueError("t must be non-negative")
    bound = 2 ** (4 * m + k)
    source = "given"
    if count is None:
        if k + m <= MAX_SIZE:
            count, source = len(enumerate_graphs(k, m)), "enumerated"
        else:
            count, source = bound, "bound"
    return {"k": k, "m": m, "t": t, "constant_exponent": k + m, "t_exponent": m / 4,
            "graph_count": count, "count_source": source, "graph_bound": bound,
            "aggregate": f"{count} * C^{k + m} * t^{m / 4}"}


def counts_table(k_max: int, m_max: int) -> list[dict]:
    rows = []
    for k in range(1, k_max + 1):
        for m in range(0, m_max + 1):
            n = len(enumerate_graphs(k, m))
            rows.append({"k": k, "m": m, "count": n, "bound": 2 ** (4 * m + k),
                         "xi_summands": math.factorial(m + k) // math.factorial(k)})
    return rows
