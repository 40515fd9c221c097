"""Mixed-graph algorithms: treks, t-separation, d-separation, canonical form.

Everything here works on :class:`~miivgraph.model.PathDiagram` values and is
pure.  Bidirected edges are eliminated up front by :func:`canonicalize`, which
replaces each one by an explicit common-cause node; all trek and separation
computations then run on plain DAGs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import networkx as nx

from .model import Edge, NodeKind, PathDiagram
from .params import ParamRef, coefficient_label

DEFAULT_TREK_CAP = 1_000_000


class GraphError(ValueError):
    pass


class TrekCapExceeded(GraphError):
    pass


@dataclass(frozen=True)
class Trek:
    """A collider-free path, stored as its node sequence plus the top position.

    ``nodes[:top_index + 1]`` reversed and ``nodes[top_index:]`` are both
    directed paths starting at the top.  A node may appear twice, once per
    side; that repetition is what makes the trek rule work.
    """

    nodes: tuple[str, ...]
    top_index: int

    @property
    def top(self) -> str:
        return self.nodes[self.top_index]

    @property
    def left(self) -> tuple[str, ...]:
        """Left side, from the top down to the source endpoint (top included)."""
        return tuple(reversed(self.nodes[: self.top_index + 1]))

    @property
    def right(self) -> tuple[str, ...]:
        return self.nodes[self.top_index:]

    @property
    def left_set(self) -> frozenset[str]:
        return frozenset(self.left)

    @property
    def right_set(self) -> frozenset[str]:
        return frozenset(self.right)

    @property
    def source(self) -> str:
        return self.nodes[0]

    @property
    def sink(self) -> str:
        return self.nodes[-1]


@dataclass(frozen=True)
class TSeparator:
    left: frozenset[str]
    right: frozenset[str]

    @property
    def size(self) -> int:
        return len(self.left) + len(self.right)

    def blocks(self, trek: Trek) -> bool:
        return bool(self.left & trek.left_set) or bool(self.right & trek.right_set)


@dataclass(frozen=True)
class MinTSeparator:
    size: int
    witness: TSeparator


def canonicalize(g: PathDiagram) -> PathDiagram:
    """Replace every bidirected edge by an explicit common-cause node.

    The new node gets two unit arrows to the former endpoints and carries the
    covariance parameter as its variance, so implied covariances are preserved.
    Diagrams without bidirected edges are returned unchanged.
    """
    if not g.bi_edges:
        return g
    add_nodes: dict[str, NodeKind] = {}
    add_edges: list[Edge] = []
    variances: dict[str, ParamRef] = {}
    taken = set(g.nodes)
    for b in g.bi_edges:
        name = f"cc_{b.a}_{b.b}"
        while name in taken:
            name += "_"
        taken.add(name)
        add_nodes[name] = NodeKind.ERROR
        add_edges.append(Edge(name, b.a, ParamRef(coefficient_label(name, b.a), fixed=1.0)))
        add_edges.append(Edge(name, b.b, ParamRef(coefficient_label(name, b.b), fixed=1.0)))
        variances[name] = b.param
    return g.evolve(
        add_nodes=add_nodes,
        add_edges=add_edges,
        drop_bi_edges=[b.pair for b in g.bi_edges],
        set_variances=variances,
    )


def canonical_assignment(g: PathDiagram, params: dict) -> dict:
    """Parameter values under which ``canonicalize(g)`` implies the same
    covariances as ``g``.

    Each covariance moves onto a common-cause node wholesale, so the endpoint
    error variances must shed that mass; without the adjustment the rewrite
    inflates every endpoint variance by its covariances.
    """
    out = dict(params)
    for b in g.bi_edges:
        val = b.param.value(params)
        for end in (b.a, b.b):
            vp = g.variance_param(end)
            if vp is not None:
                out[vp.label] = vp.value(out) - val
    return out


def ancestors(g: PathDiagram, nodes: str | Iterable[str]) -> set[str]:
    """Reflexive-transitive closure along reversed directed edges."""
    return _closure(g, nodes, g.parents)


def descendants(g: PathDiagram, nodes: str | Iterable[str]) -> set[str]:
    """Reflexive-transitive closure along directed edges."""
    return _closure(g, nodes, g.children)


def _closure(g: PathDiagram, nodes, step) -> set[str]:
    frontier = [nodes] if isinstance(nodes, str) else list(nodes)
    for v in frontier:
        if not g.has_node(v):
            raise GraphError(f"unknown node {v!r}")
    seen = set(frontier)
    while frontier:
        v = frontier.pop()
        for u in step(v):
            if u not in seen:
                seen.add(u)
                frontier.append(u)
    return seen


def has_trek(g: PathDiagram, a: str | Iterable[str], b: str | Iterable[str]) -> bool:
    """True iff some trek connects the two sets (shared ancestor, selves included)."""
    _require_canonical(g)
    return bool(ancestors(g, a) & ancestors(g, b))


def enumerate_treks(
    g: PathDiagram, a: str, b: str, cap: int = DEFAULT_TREK_CAP
) -> list[Trek]:
    """All treks from ``a`` to ``b`` in a canonical (DAG) diagram.

    The list is finite because each side is a simple directed path; it includes
    the trivial trek ``[a]`` when ``a == b``.  Enumeration is an oracle for
    tests and small searches, never part of the identification hot path.
    """
    _require_canonical(g)
    if not g.is_acyclic():
        raise GraphError("trek enumeration requires an acyclic diagram")
    tops = ancestors(g, a) & ancestors(g, b)
    down_to_a = _paths_down(g, a, tops)
    down_to_b = _paths_down(g, b, tops)
    out: list[Trek] = []
    for top in tops:
        for left in down_to_a.get(top, ()):  # path top -> ... -> a
            for right in down_to_b.get(top, ()):
                nodes = tuple(reversed(left)) + tuple(right[1:])
                out.append(Trek(nodes, len(left) - 1))
                if len(out) > cap:
                    raise TrekCapExceeded(f"more than {cap} treks between {a!r} and {b!r}")
    return out


def _paths_down(g: PathDiagram, target: str, sources: set[str]) -> dict[str, list[list[str]]]:
    """All directed paths from each source down to ``target``, memoized bottom-up."""
    memo: dict[str, list[list[str]]] = {target: [[target]]}

    def walk(v: str) -> list[list[str]]:
        if v in memo:
            return memo[v]
        paths = [[v] + p for c in g.children(v) for p in walk(c)]
        memo[v] = paths
        return paths

    return {s: walk(s) for s in sources}


def remove_coefficient_edges(g: PathDiagram, xs: Iterable[str], y: str) -> PathDiagram:
    """Drop exactly the arrows x -> y for x in ``xs``.

    Arrows into y from other parents stay: they keep witnessing correlation
    with the equation's composite error.
    """
    xs = list(xs)
    parents = set(g.parents(y))
    missing = [x for x in xs if x not in parents]
    if missing:
        raise GraphError(f"{missing} are not parents of {y!r}")
    return g.evolve(drop_edges=[(x, y) for x in xs])


def min_t_separator(g: PathDiagram, a: Iterable[str], b: Iterable[str]) -> MinTSeparator:
    """Smallest (L, R) blocking every trek between the two sets, via min vertex cut.

    The flow network holds two copies of the diagram: a left copy with reversed
    arrows (trek left sides walk up) and a right copy with forward arrows, a
    crossover arc at every node (any node can be a trek top), and unit node
    capacities.  Cutting a node in the left copy puts it in L, in the right
    copy in R.
    """
    _require_canonical(g)
    a = list(dict.fromkeys(a))
    b = list(dict.fromkeys(b))
    for v in a + b:
        if not g.has_node(v):
            raise GraphError(f"unknown node {v!r}")
    net = nx.DiGraph()
    inf = 2 * len(g.nodes) + 3
    for v in g.nodes:
        net.add_edge(("L", v, "in"), ("L", v, "out"), capacity=1)
        net.add_edge(("R", v, "in"), ("R", v, "out"), capacity=1)
        net.add_edge(("L", v, "out"), ("R", v, "in"), capacity=inf)
    for e in g.edges:
        net.add_edge(("L", e.dst, "out"), ("L", e.src, "in"), capacity=inf)
        net.add_edge(("R", e.src, "out"), ("R", e.dst, "in"), capacity=inf)
    for v in a:
        net.add_edge("S", ("L", v, "in"), capacity=inf)
    for v in b:
        net.add_edge(("R", v, "out"), "T", capacity=inf)
    if "S" not in net or "T" not in net:
        return MinTSeparator(0, TSeparator(frozenset(), frozenset()))
    cut_value, (s_side, _) = nx.minimum_cut(net, "S", "T")
    left = frozenset(
        v for v in g.nodes if ("L", v, "in") in s_side and ("L", v, "out") not in s_side
    )
    right = frozenset(
        v for v in g.nodes if ("R", v, "in") in s_side and ("R", v, "out") not in s_side
    )
    assert cut_value == len(left) + len(right), "cut crossed an uncuttable arc"
    return MinTSeparator(int(cut_value), TSeparator(left, right))


def d_separated(
    g: PathDiagram,
    a: Iterable[str],
    b: Iterable[str],
    w: Iterable[str] = (),
) -> bool:
    """Standard d-separation of A and B given W, by reachability over open walks.

    Bidirected edges are handled through the canonical common-cause rewrite.
    """
    a, b, w = set(a), set(b), set(w)
    if a & b or a & w or b & w:
        raise GraphError("d-separation query sets must be disjoint")
    g = canonicalize(g)
    for v in a | b | w:
        if not g.has_node(v):
            raise GraphError(f"unknown node {v!r}")
    an_w = ancestors(g, w) if w else set()

    # States are (node, how the walk entered it): via an incoming arrow
    # ("in", from a parent) or against an outgoing arrow ("out", from a child
    # or as a walk start).  Colliders stay open only inside ancestors of W.
    seen: set[tuple[str, str]] = set()
    frontier: list[tuple[str, str]] = [(v, "out") for v in a]
    while frontier:
        v, how = frontier.pop()
        if (v, how) in seen:
            continue
        seen.add((v, how))
        if v in b:
            return False
        if how == "out":
            if v in w:
                continue
            moves = [(p, "out") for p in g.parents(v)] + [(c, "in") for c in g.children(v)]
        else:
            moves = []
            if v not in w:
                moves.extend((c, "in") for c in g.children(v))
            if v in an_w:
                moves.extend((p, "out") for p in g.parents(v))
        frontier.extend(moves)
    return True


def d_separated_moral(
    g: PathDiagram,
    a: Iterable[str],
    b: Iterable[str],
    w: Iterable[str] = (),
) -> bool:
    """Independent d-separation implementation via the ancestral moral graph."""
    a, b, w = set(a), set(b), set(w)
    if a & b or a & w or b & w:
        raise GraphError("d-separation query sets must be disjoint")
    g = canonicalize(g)
    keep = ancestors(g, a | b | w) if (a | b | w) else set()
    adj: dict[str, set[str]] = {v: set() for v in keep}
    for e in g.edges:
        if e.src in keep and e.dst in keep:
            adj[e.src].add(e.dst)
            adj[e.dst].add(e.src)
    for v in keep:
        parents = [p for p in g.parents(v) if p in keep]
        for i, p in enumerate(parents):
            for q in parents[i + 1:]:
                adj[p].add(q)
                adj[q].add(p)
    frontier = [v for v in a if v not in w]
    reached = set(frontier)
    while frontier:
        v = frontier.pop()
        if v in b:
            return False
        for u in adj[v]:
            if u not in reached and u not in w:
                reached.add(u)
                frontier.append(u)
    return not (reached & b)


def to_dot(g: PathDiagram, include_errors: bool = False, name: str = "model") -> str:
    """Graphviz DOT rendering: latents as ellipses, observed as boxes."""
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    shown = [
        v for v in g.nodes if include_errors or g.kind(v) is not NodeKind.ERROR
    ]
    shown_set = set(shown)
    shapes = {NodeKind.LATENT: "ellipse", NodeKind.OBSERVED: "box", NodeKind.ERROR: "circle"}
    for v in shown:
        attrs = [f"shape={shapes[g.kind(v)]}"]
        if g.kind(v) is NodeKind.ERROR:
            attrs.append("style=dashed")
        lines.append(f'  "{v}" [{", ".join(attrs)}];')
    for e in g.edges:
        if e.src in shown_set and e.dst in shown_set:
            label = _fmt(e.param.fixed) if e.param.fixed is not None else e.param.label
            lines.append(f'  "{e.src}" -> "{e.dst}" [label="{label}"];')
    for b in g.bi_edges:
        if b.a in shown_set and b.b in shown_set:
            label = _fmt(b.param.fixed) if b.param.fixed is not None else b.param.label
            lines.append(f'  "{b.a}" -> "{b.b}" [dir=both, style=dashed, label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return f"{x:g}"


def _require_canonical(g: PathDiagram) -> None:
    if g.bi_edges:
        raise GraphError("operation requires a canonical diagram (no bidirected edges)")
