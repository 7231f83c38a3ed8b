"""Causal DAGs, d-separation and graphical checks of the dismissible
component conditions.

Graph text format, one statement per line::

    # comment
    expand K=2          # A_Y -> Y_j, A_D -> D_j, D_j -> Y_j, Y_j -> Y_j+1,
                        # D_j -> D_j+1, Y_j -> D_j+1 for j = 1..K
    A !> A_Y            # deterministic edge
    U_YD -> Y*          # '*' expands to every indexed node of a family
    X                   # isolated node

Indexed families are written ``Y1, Y2, ...``, ``D1, ...`` and ``C1, ...``.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable

from .errors import CycleDetected, MissingComponentNodes, NodeOverlap, ParseError, UnknownNode

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*\*?"
_EDGE = re.compile(rf"^\s*({_IDENT})\s*(->|!>)\s*({_IDENT})\s*$")
_NODE = re.compile(rf"^\s*({_IDENT})\s*$")
_EXPAND = re.compile(r"^\s*expand\s+K\s*=\s*(\d+)\s*$")
_INDEXED = re.compile(r"^([A-Za-z_]+?)_?(\d+)$")
_MEASURED = re.compile(r"^L(\d+|_\w+)?$")


@dataclass(frozen=True)
class Dag:
    nodes: tuple[str, ...] = ()
    edges: frozenset[tuple[str, str]] = frozenset()
    deterministic_edges: frozenset[tuple[str, str]] = frozenset()
    _parents: dict = field(default=None, repr=False, compare=False)
    _children: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        par = {n: set() for n in self.nodes}
        ch = {n: set() for n in self.nodes}
        for u, v in self.edges:
            if u not in par or v not in par:
                raise UnknownNode(f"edge {u} -> {v} references an undeclared node")
            if u == v:
                raise CycleDetected(f"self-loop on {u}")
            par[v].add(u)
            ch[u].add(v)
        object.__setattr__(self, "_parents", par)
        object.__setattr__(self, "_children", ch)
        cycle = _find_cycle(self.nodes, ch)
        if cycle:
            raise CycleDetected("cycle: " + " -> ".join(cycle))

    def parents(self, n: str) -> set[str]:
        return self._parents[n]

    def children(self, n: str) -> set[str]:
        return self._children[n]

    def ancestors(self, nodes: Iterable[str]) -> set[str]:
        seen: set[str] = set()
        stack = list(nodes)
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(self._parents[n])
        return seen

    def descendants(self, n: str) -> set[str]:
        seen: set[str] = set()
        stack = [n]
        while stack:
            m = stack.pop()
            if m in seen:
                continue
            seen.add(m)
            stack.extend(self._children[m])
        return seen

    def without_edges(self, drop: Iterable[tuple[str, str]]) -> "Dag":
        drop = set(drop)
        return Dag(self.nodes, self.edges - drop, self.deterministic_edges - drop)

    def without_nodes(self, drop: Iterable[str]) -> "Dag":
        drop = set(drop)
        return Dag(
            tuple(n for n in self.nodes if n not in drop),
            frozenset(e for e in self.edges if not drop & set(e)),
            frozenset(e for e in self.deterministic_edges if not drop & set(e)),
        )

    def four_arm(self) -> "Dag":
        """Cut deterministic edges and all edges into censoring nodes, making
        the components exogenous and censoring an intervened-on constant."""
        into_c = {(u, v) for u, v in self.edges if _family(v) == "C"}
        return self.without_edges(set(self.deterministic_edges) | into_c)

    def to_text(self) -> str:
        lines = []
        linked = {n for e in self.edges for n in e}
        lines += [n for n in self.nodes if n not in linked]
        for u, v in sorted(self.edges):
            op = "!>" if (u, v) in self.deterministic_edges else "->"
            lines.append(f"{u} {op} {v}")
        return "\n".join(lines) + ("\n" if lines else "")


def _find_cycle(nodes, children) -> list[str] | None:
    color = dict.fromkeys(nodes, 0)
    parent: dict[str, str] = {}
    for root in nodes:
        if color[root]:
            continue
        stack = [(root, iter(sorted(children[root])))]
        color[root] = 1
        while stack:
            n, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[n] = 2
                stack.pop()
                continue
            if color[nxt] == 1:
                cyc = [nxt, n]
                while cyc[-1] != nxt:
                    cyc.append(parent[cyc[-1]])
                return cyc[::-1]
            if color[nxt] == 0:
                color[nxt] = 1
                parent[nxt] = n
                stack.append((nxt, iter(sorted(children[nxt]))))
    return None


def _family(node: str) -> str | None:
    m = _INDEXED.match(node)
    return m.group(1) if m else None


def _index(node: str) -> int | None:
    m = _INDEXED.match(node)
    return int(m.group(2)) if m else None


def expand_edges(K: int) -> list[tuple[str, str]]:
    """Edges of the standard two-component event history over ``K`` intervals."""
    e = []
    for j in range(1, K + 1):
        e += [("A_Y", f"Y{j}"), ("A_D", f"D{j}"), (f"D{j}", f"Y{j}")]
        if j < K:
            e += [(f"Y{j}", f"Y{j + 1}"), (f"D{j}", f"D{j + 1}"), (f"Y{j}", f"D{j + 1}")]
    return e


def parse_graph(text: str) -> Dag:
    """Parse the graph text format into a validated :class:`Dag`."""
    nodes: dict[str, None] = {}
    edges: dict[tuple[str, str], bool] = {}
    pending: list[tuple[str, str, bool, int, int]] = []

    def add_node(n):
        nodes.setdefault(n, None)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        m = _EXPAND.match(line)
        if m:
            K = int(m.group(1))
            if K < 1:
                raise ParseError("expand needs K >= 1", line=lineno, column=line.index("=") + 2)
            for j in range(1, K + 1):
                for n in ("A_Y", "A_D", f"D{j}", f"Y{j}"):
                    add_node(n)
            for u, v in expand_edges(K):
                edges.setdefault((u, v), False)
            continue
        m = _EDGE.match(line)
        if m:
            u, op, v = m.groups()
            pending.append((u, v, op == "!>", lineno, m.start(1) + 1))
            for n in (u, v):
                if not n.endswith("*"):
                    add_node(n)
            continue
        m = _NODE.match(line)
        if m and not m.group(1).endswith("*"):
            add_node(m.group(1))
            continue
        col = _error_column(line)
        raise ParseError(f"cannot parse {raw.strip()!r}; expected 'a -> b', 'a !> b', 'expand K=n' or a node",
                         line=lineno, column=col)

    def resolve(name, lineno, col):
        if not name.endswith("*"):
            return [name]
        fam = name[:-1].rstrip("_")
        hits = sorted((n for n in nodes if _family(n) == fam), key=lambda n: _index(n))
        if not hits:
            raise UnknownNode(f"line {lineno}, column {col}: family {name!r} matches no indexed node")
        return hits

    for u, v, det, lineno, col in pending:
        for uu in resolve(u, lineno, col):
            for vv in resolve(v, lineno, col):
                if uu == vv:
                    raise CycleDetected(f"line {lineno}: self-loop on {uu}")
                edges[(uu, vv)] = edges.get((uu, vv), False) or det
    return Dag(
        tuple(nodes),
        frozenset(edges),
        frozenset(e for e, d in edges.items() if d),
    )


def _error_column(line: str) -> int:
    stripped = line.lstrip()
    lead = len(line) - len(stripped)
    m = re.match(rf"{_IDENT}\s*", stripped)
    return lead + (m.end() if m else 0) + 1


def load_fixture(name: str) -> Dag:
    """Load a shipped graph from ``sepeff/graphs/<name>.cg``."""
    path = resources.files("sepeff") / "graphs" / f"{name}.cg"
    if not path.is_file():
        raise UnknownNode(f"no graph fixture named {name!r}")
    return parse_graph(path.read_text(encoding="utf-8"))


def fixture_names() -> list[str]:
    root = resources.files("sepeff") / "graphs"
    return sorted(p.name[:-3] for p in root.iterdir() if p.name.endswith(".cg"))


# d-separation --------------------------------------------------------------

def _check_sets(g: Dag, x, y, z):
    x, y, z = set(x), set(y), set(z)
    for s in (x, y, z):
        missing = s - set(g.nodes)
        if missing:
            raise UnknownNode(f"nodes not in graph: {sorted(missing)}")
    if x & y or x & z or y & z:
        raise NodeOverlap("query sets must be disjoint")
    return x, y, z


def reachable(g: Dag, x: Iterable[str], z: Iterable[str]) -> set[str]:
    """Nodes connected to ``x`` by a path that is active given ``z``.

    Bayes-ball traversal over (node, direction) states: ``up`` means the
    node was entered from a child, ``down`` from a parent.
    """
    z = set(z)
    anc_z = g.ancestors(z)
    queue = deque((n, "up") for n in x)
    visited: set[tuple[str, str]] = set()
    out: set[str] = set()
    while queue:
        n, d = queue.popleft()
        if (n, d) in visited:
            continue
        visited.add((n, d))
        if n not in z:
            out.add(n)
        if d == "up" and n not in z:
            queue.extend((p, "up") for p in g.parents(n))
            queue.extend((c, "down") for c in g.children(n))
        elif d == "down":
            if n not in z:
                queue.extend((c, "down") for c in g.children(n))
            if n in anc_z:
                queue.extend((p, "up") for p in g.parents(n))
    return out


def d_separated(g: Dag, x: Iterable[str], y: Iterable[str], z: Iterable[str] = ()) -> bool:
    """Whether every path between ``x`` and ``y`` is blocked by ``z``."""
    x, y, z = _check_sets(g, x, y, z)
    return not (reachable(g, x, z) & y)


def _path_active(g: Dag, path: list[str], z: set[str], desc_cache: dict) -> bool:
    for i in range(1, len(path) - 1):
        a, b, c = path[i - 1], path[i], path[i + 1]
        collider = a in g.parents(b) and c in g.parents(b)
        if collider:
            if b not in desc_cache:
                desc_cache[b] = g.descendants(b)
            if not desc_cache[b] & z:
                return False
        elif b in z:
            return False
    return True


def open_path(g: Dag, x: Iterable[str], y: Iterable[str], z: Iterable[str] = ()) -> list[str] | None:
    """A shortest simple path between ``x`` and ``y`` that is active given
    ``z``, or ``None`` when the sets are d-separated."""
    x, y, z = _check_sets(g, x, y, z)
    if not reachable(g, x, z) & y:
        return None
    desc_cache: dict = {}
    nbrs = {n: sorted(g.parents(n) | g.children(n)) for n in g.nodes}
    anc_z = g.ancestors(z)
    # iterative deepening over simple paths keeps the witness short
    for depth in range(1, len(g.nodes)):
        for start in sorted(x):
            stack = [[start]]
            while stack:
                path = stack.pop()
                if len(path) - 1 == depth:
                    if path[-1] in y and _path_active(g, path, z, desc_cache):
                        return path
                    continue
                if path[-1] in y and len(path) > 1:
                    continue
                for nb in reversed(nbrs[path[-1]]):
                    if nb in path or nb in x:
                        continue
                    cand = path + [nb]
                    if len(cand) >= 3:
                        a, b = cand[-3], cand[-2]
                        coll = a in g.parents(b) and nb in g.parents(b)
                        if (coll and b not in anc_z) or (not coll and b in z):
                            continue
                    stack.append(cand)
    return None


def format_path(g: Dag, path: list[str]) -> str:
    out = path[0]
    for a, b in zip(path, path[1:]):
        out += f" -> {b}" if b in g.children(a) else f" <- {b}"
    return out


# dismissible component conditions -----------------------------------------

@dataclass(frozen=True)
class DccEntry:
    k: int
    delta1_holds: bool
    delta2_holds: bool
    delta1_witness: tuple[str, ...] = ()
    delta2_witness: tuple[str, ...] = ()


@dataclass(frozen=True)
class DccReport:
    """Per ``k = 0..K-1``: whether the event of interest in interval ``k+1``
    is independent of ``A_D`` (first condition) and whether the competing
    event in interval ``k+1`` is independent of ``A_Y`` (second condition),
    given the other component, the event history and measured covariates."""

    entries: tuple[DccEntry, ...]
    graph: Dag = field(repr=False)

    @property
    def delta1_holds(self) -> bool:
        return all(e.delta1_holds for e in self.entries)

    @property
    def delta2_holds(self) -> bool:
        return all(e.delta2_holds for e in self.entries)

    def to_table(self) -> str:
        g = self.graph
        rows = [f"{'k':>3}  {'delta1':<7} {'delta2':<7} witness"]
        for e in self.entries:
            w = []
            if e.delta1_witness:
                w.append("d1: " + format_path(g, list(e.delta1_witness)))
            if e.delta2_witness:
                w.append("d2: " + format_path(g, list(e.delta2_witness)))
            rows.append(
                f"{e.k:>3}  {'holds' if e.delta1_holds else 'FAILS':<7} "
                f"{'holds' if e.delta2_holds else 'FAILS':<7} {'; '.join(w)}"
            )
        return "\n".join(rows)


def measured_covariates(g: Dag) -> list[str]:
    return [n for n in g.nodes if _MEASURED.match(n)]


def check_dismissible(g: Dag, K: int | None = None) -> DccReport:
    """Check both conditions graphically on the four-arm version of ``g``.

    Event values are represented by conditioning on the event nodes
    themselves.
    """
    missing = [n for n in ("A_Y", "A_D") if n not in g.nodes]
    if K is None:
        idx = [_index(n) for n in g.nodes if _family(n) in ("Y", "D")]
        K = max(idx) if idx else 0
    missing += [f"{f}{j}" for j in range(1, K + 1) for f in ("Y", "D") if f"{f}{j}" not in g.nodes]
    if missing or K < 1:
        raise MissingComponentNodes(f"graph lacks required nodes: {missing or ['Y1', 'D1']}")
    h = g.four_arm()
    L = measured_covariates(h)
    entries = []
    for k in range(K):
        ys = [f"Y{j}" for j in range(1, k + 1)]
        ds = [f"D{j}" for j in range(1, k + 1)]
        z1 = {"A_Y", *ys, *ds, f"D{k + 1}", *L}
        z2 = {"A_D", *ys, *ds, *L}
        w1 = open_path(h, {"A_D"}, {f"Y{k + 1}"}, z1)
        w2 = open_path(h, {"A_Y"}, {f"D{k + 1}"}, z2)
        entries.append(DccEntry(k, w1 is None, w2 is None, tuple(w1 or ()), tuple(w2 or ())))
    return DccReport(tuple(entries), h)
