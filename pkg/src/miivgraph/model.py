"""RAM-form SEM data model: path diagrams, parameter bookkeeping, scaling indicators.

A model is a mixed graph over latent, observed and error nodes.  Every latent
or observed node owns exactly one error parent; bidirected arrows live between
error nodes and carry covariance parameters; error nodes carry variance
parameters.  All structures are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .params import (
    ParamAssignment,
    ParamRef,
    coefficient_label,
    covariance_label,
    variance_label,
)


class ModelError(ValueError):
    """Raised for structurally impossible requests (not for validation findings)."""


class NodeKind(Enum):
    LATENT = "latent"
    OBSERVED = "observed"
    ERROR = "error"


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    param: ParamRef


@dataclass(frozen=True)
class BiEdge:
    a: str
    b: str
    param: ParamRef

    @property
    def pair(self) -> frozenset[str]:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.subject}: {self.message}"


class PathDiagram:
    """Mixed graph with directed edges, bidirected edges and node variances.

    ``variances`` maps nodes that carry their own variance (error nodes and,
    in derived canonical graphs, explicit common-cause nodes) to a parameter.
    Construction rejects malformed input (unknown endpoints, self loops,
    duplicate arrows); semantic model rules are reported by :func:`validate`.
    """

    def __init__(
        self,
        kinds: Mapping[str, NodeKind],
        edges: Iterable[Edge] = (),
        bi_edges: Iterable[BiEdge] = (),
        variances: Mapping[str, ParamRef] | None = None,
    ):
        self._kinds = dict(kinds)
        self._edges = tuple(edges)
        self._bi_edges = tuple(bi_edges)
        self._variances = dict(variances or {})

        parents: dict[str, list[Edge]] = {v: [] for v in self._kinds}
        children: dict[str, list[Edge]] = {v: [] for v in self._kinds}
        seen: set[tuple[str, str]] = set()
        for e in self._edges:
            if e.src not in self._kinds or e.dst not in self._kinds:
                raise ModelError(f"edge {e.src}->{e.dst} references unknown node")
            if e.src == e.dst:
                raise ModelError(f"self loop on {e.src}")
            if (e.src, e.dst) in seen:
                raise ModelError(f"duplicate edge {e.src}->{e.dst}")
            seen.add((e.src, e.dst))
            parents[e.dst].append(e)
            children[e.src].append(e)
        bi_seen: set[frozenset[str]] = set()
        for b in self._bi_edges:
            if b.a not in self._kinds or b.b not in self._kinds:
                raise ModelError(f"bidirected edge {b.a}<->{b.b} references unknown node")
            if b.a == b.b:
                raise ModelError(f"bidirected self loop on {b.a}")
            if b.pair in bi_seen:
                raise ModelError(f"duplicate bidirected edge {b.a}<->{b.b}")
            bi_seen.add(b.pair)
        for v in self._variances:
            if v not in self._kinds:
                raise ModelError(f"variance on unknown node {v}")
        self._parents = {v: tuple(es) for v, es in parents.items()}
        self._children = {v: tuple(es) for v, es in children.items()}

    # -- structure access ---------------------------------------------------

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(self._kinds)

    @property
    def edges(self) -> tuple[Edge, ...]:
        return self._edges

    @property
    def bi_edges(self) -> tuple[BiEdge, ...]:
        return self._bi_edges

    @property
    def variances(self) -> dict[str, ParamRef]:
        return dict(self._variances)

    def kind(self, v: str) -> NodeKind:
        return self._kinds[v]

    def has_node(self, v: str) -> bool:
        return v in self._kinds

    def nodes_of_kind(self, kind: NodeKind) -> tuple[str, ...]:
        return tuple(v for v, k in self._kinds.items() if k is kind)

    def variance_param(self, v: str) -> ParamRef | None:
        return self._variances.get(v)

    def parent_edges(self, v: str) -> tuple[Edge, ...]:
        return self._parents[v]

    def child_edges(self, v: str) -> tuple[Edge, ...]:
        return self._children[v]

    def parents(self, v: str) -> tuple[str, ...]:
        return tuple(e.src for e in self._parents[v])

    def children(self, v: str) -> tuple[str, ...]:
        return tuple(e.dst for e in self._children[v])

    def nonerror_parents(self, v: str) -> tuple[str, ...]:
        return tuple(e.src for e in self._parents[v] if self.kind(e.src) is not NodeKind.ERROR)

    def error_parent(self, v: str) -> str | None:
        errs = [e.src for e in self._parents[v] if self.kind(e.src) is NodeKind.ERROR]
        return errs[0] if len(errs) == 1 else None

    def edge(self, src: str, dst: str) -> Edge | None:
        for e in self._children.get(src, ()):
            if e.dst == dst:
                return e
        return None

    def has_edge(self, src: str, dst: str) -> bool:
        return self.edge(src, dst) is not None

    def all_params(self) -> dict[str, ParamRef]:
        """Every parameter of the diagram keyed by label (labels must be unique)."""
        out: dict[str, ParamRef] = {}
        for p in self._iter_params():
            out.setdefault(p.label, p)
        return out

    def _iter_params(self):
        for v, p in self._variances.items():
            yield p
        for e in self._edges:
            yield e.param
        for b in self._bi_edges:
            yield b.param

    def directed_cycle(self) -> list[str] | None:
        """Some directed cycle as a node list, or None if the graph is acyclic."""
        state: dict[str, int] = {}
        stack: list[str] = []

        def visit(v: str) -> list[str] | None:
            state[v] = 1
            stack.append(v)
            for c in self.children(v):
                if state.get(c, 0) == 1:
                    return stack[stack.index(c):] + [c]
                if state.get(c, 0) == 0:
                    found = visit(c)
                    if found:
                        return found
            stack.pop()
            state[v] = 2
            return None

        for v in self._kinds:
            if state.get(v, 0) == 0:
                found = visit(v)
                if found:
                    return found
        return None

    def is_acyclic(self) -> bool:
        return self.directed_cycle() is None

    def evolve(
        self,
        add_nodes: Mapping[str, NodeKind] | None = None,
        drop_edges: Iterable[tuple[str, str]] = (),
        add_edges: Iterable[Edge] = (),
        drop_bi_edges: Iterable[frozenset[str]] = (),
        add_bi_edges: Iterable[BiEdge] = (),
        set_variances: Mapping[str, ParamRef] | None = None,
    ) -> "PathDiagram":
        """Return a copy with the requested surgery applied."""
        kinds = dict(self._kinds)
        kinds.update(add_nodes or {})
        dropped = set(drop_edges)
        edges = [e for e in self._edges if (e.src, e.dst) not in dropped]
        edges.extend(add_edges)
        bi_drop = set(drop_bi_edges)
        bi = [b for b in self._bi_edges if b.pair not in bi_drop]
        bi.extend(add_bi_edges)
        variances = dict(self._variances)
        variances.update(set_variances or {})
        return PathDiagram(kinds, edges, bi, variances)

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"PathDiagram({len(self._kinds)} nodes, {len(self._edges)} edges, "
            f"{len(self._bi_edges)} bidirected)"
        )


@dataclass(frozen=True)
class SemModel:
    """A path diagram plus the scaling-indicator choice for each latent."""

    diagram: PathDiagram
    scaling: Mapping[str, str] = field(default_factory=dict)

    def scaling_indicator(self, latent: str) -> str:
        try:
            return self.scaling[latent]
        except KeyError:
            raise ModelError(f"latent {latent!r} has no scaling indicator") from None

    @property
    def observed(self) -> tuple[str, ...]:
        return self.diagram.nodes_of_kind(NodeKind.OBSERVED)

    @property
    def latents(self) -> tuple[str, ...]:
        return self.diagram.nodes_of_kind(NodeKind.LATENT)


@dataclass(frozen=True)
class EquationSpec:
    """One structural equation: a dependent, its covariates, and the sought ones.

    ``targets`` lists the covariates whose coefficients are to be identified;
    it defaults to every covariate with a free coefficient.
    """

    dependent: str
    covariates: tuple[str, ...]
    targets: frozenset[str]

    def __post_init__(self):
        if not self.covariates:
            raise ModelError(f"equation for {self.dependent!r} has no covariates")
        if not self.targets <= set(self.covariates):
            raise ModelError("targets must be a subset of the covariates")


ERROR_PREFIX_OBSERVED = "eps_"
ERROR_PREFIX_LATENT = "zeta_"


def error_name(name: str, kind: NodeKind) -> str:
    prefix = ERROR_PREFIX_LATENT if kind is NodeKind.LATENT else ERROR_PREFIX_OBSERVED
    return prefix + name


def build_model(
    latents: Sequence[str],
    observed: Sequence[str],
    edges: Sequence[tuple[str, str, ParamRef | None]],
    covariances: Sequence[tuple[str, str, ParamRef | None]] = (),
    scaling: Mapping[str, str] | None = None,
    variance_overrides: Mapping[str, ParamRef] | None = None,
) -> SemModel:
    """Assemble a SemModel from structural-level pieces.

    Error nodes, unit error arrows, default variance parameters and default
    parameter labels are generated here.  ``edges`` and ``covariances`` name
    structural (non-error) variables; ``scaling`` defaults to the first
    observed child of each latent whose coefficient is fixed to 1.
    """
    kinds: dict[str, NodeKind] = {}
    for name in latents:
        kinds[name] = NodeKind.LATENT
    for name in observed:
        if name in kinds:
            raise ModelError(f"node {name!r} declared both latent and observed")
        kinds[name] = NodeKind.OBSERVED

    all_edges: list[Edge] = []
    variances: dict[str, ParamRef] = {}
    overrides = dict(variance_overrides or {})
    # one error parent per structural node, carrying the variance parameter
    for name, kind in list(kinds.items()):
        err = error_name(name, kind)
        kinds[err] = NodeKind.ERROR
        all_edges.append(Edge(err, name, ParamRef(coefficient_label(err, name), fixed=1.0)))
        variances[err] = overrides.pop(name, ParamRef(variance_label(name)))
    if overrides:
        raise ModelError(f"variance overrides for unknown nodes: {sorted(overrides)}")

    for src, dst, param in edges:
        if src not in kinds or dst not in kinds:
            raise ModelError(f"edge {src}->{dst} references undeclared node")
        all_edges.append(Edge(src, dst, param or ParamRef(coefficient_label(src, dst))))

    bi: list[BiEdge] = []
    for a, b, param in covariances:
        ea = error_name(a, kinds[a]) if kinds[a] is not NodeKind.ERROR else a
        eb = error_name(b, kinds[b]) if kinds[b] is not NodeKind.ERROR else b
        # the pair is unordered; normalize the auto label so it never depends
        # on declaration direction
        bi.append(BiEdge(ea, eb, param or ParamRef(covariance_label(*sorted((a, b))))))

    diagram = PathDiagram(kinds, all_edges, bi, variances)
    if scaling is None:
        scaling = _default_scaling(diagram)
    return SemModel(diagram, dict(scaling))


def _default_scaling(diagram: PathDiagram) -> dict[str, str]:
    scaling: dict[str, str] = {}
    for latent in diagram.nodes_of_kind(NodeKind.LATENT):
        for e in diagram.child_edges(latent):
            if diagram.kind(e.dst) is NodeKind.OBSERVED and e.param.fixed == 1.0:
                scaling[latent] = e.dst
                break
    return scaling


def validate(model: SemModel) -> list[Violation]:
    """Check every model invariant; an empty list means the model is well formed."""
    g = model.diagram
    out: list[Violation] = []

    cycle = g.directed_cycle()
    if cycle:
        out.append(Violation("cycle", "->".join(cycle), "directed cycle in the path diagram"))

    for v in g.nodes:
        kind = g.kind(v)
        if kind is NodeKind.ERROR:
            if g.parents(v):
                out.append(Violation("error-parent", v, "error node has parents"))
            if len(g.children(v)) != 1:
                out.append(Violation("error-children", v, "error node must have exactly one child"))
            if g.variance_param(v) is None:
                out.append(Violation("error-variance", v, "error node lacks a variance parameter"))
        else:
            errs = [p for p in g.parents(v) if g.kind(p) is NodeKind.ERROR]
            if len(errs) != 1:
                out.append(Violation("missing-error", v, "node must have exactly one error parent"))

    for b in g.bi_edges:
        if g.kind(b.a) is not NodeKind.ERROR or g.kind(b.b) is not NodeKind.ERROR:
            out.append(
                Violation("bidirected-nonerror", f"{b.a}<->{b.b}", "bidirected edge off error nodes")
            )

    seen_scaling: dict[str, str] = {}
    for latent in g.nodes_of_kind(NodeKind.LATENT):
        ind = model.scaling.get(latent)
        if ind is None:
            out.append(Violation("missing-scaling", latent, "latent has no scaling indicator"))
            continue
        edge = g.edge(latent, ind)
        if not g.has_node(ind) or g.kind(ind) is not NodeKind.OBSERVED or edge is None:
            out.append(Violation("bad-scaling", latent, f"scaling indicator {ind!r} is not an observed child"))
            continue
        if edge.param.fixed != 1.0:
            out.append(Violation("scaling-not-unit", latent, f"loading of scaling indicator {ind!r} is not fixed to 1"))
        if ind in seen_scaling:
            out.append(Violation("shared-scaling", ind, f"scaling indicator shared by {seen_scaling[ind]} and {latent}"))
        seen_scaling[ind] = latent
        latent_parents = [p for p in g.nonerror_parents(ind) if g.kind(p) is NodeKind.LATENT]
        if len(latent_parents) > 1:
            out.append(
                Violation("scaling-multiparent", ind, "scaling indicator has more than one latent parent")
            )

    labels: dict[str, int] = {}
    for p in list(g.variances.values()) + [e.param for e in g.edges] + [b.param for b in g.bi_edges]:
        labels[p.label] = labels.get(p.label, 0) + 1
        if p.fixed is not None and not _finite(p.fixed):
            out.append(Violation("nonfinite-fixed", p.label, "fixed value is not finite"))
    for label, n in labels.items():
        if n > 1:
            out.append(Violation("duplicate-label", label, "parameter label used on several arrows"))
    for v, p in g.variances.items():
        if p.fixed is not None and p.fixed <= 0:
            out.append(Violation("nonpositive-variance", v, "fixed variance must be positive"))

    return out


def _finite(x: float) -> bool:
    return x == x and x not in (float("inf"), float("-inf"))


def equation_of(model: SemModel, v: str) -> EquationSpec:
    """The structural equation of ``v``: its non-error parents, in diagram order."""
    g = model.diagram
    if not g.has_node(v):
        raise ModelError(f"unknown node {v!r}")
    if g.kind(v) is NodeKind.ERROR:
        raise ModelError(f"{v!r} is an error node and has no structural equation")
    covariates = g.nonerror_parents(v)
    if not covariates:
        raise ModelError(f"{v!r} has no structural equation (no covariates)")
    targets = frozenset(c for c in covariates if g.edge(c, v).param.is_free)
    return EquationSpec(v, covariates, targets)


def rescale_latent(model: SemModel, params: ParamAssignment, latent: str, alpha: float) -> ParamAssignment:
    """Move the scale of ``latent`` by ``alpha`` without touching the implied
    covariances among the remaining variables.

    Incoming coefficients are multiplied by 1/alpha, outgoing by alpha, the
    covariances of the latent's error by 1/alpha and its variance by 1/alpha^2.
    """
    if alpha == 0:
        raise ModelError("rescaling factor must be nonzero")
    g = model.diagram
    if g.kind(latent) is not NodeKind.LATENT:
        raise ModelError(f"{latent!r} is not a latent variable")
    out = dict(params)

    def scale(label: str, factor: float):
        out[label] = out[label] * factor

    for e in g.parent_edges(latent):
        if g.kind(e.src) is not NodeKind.ERROR:
            scale(e.param.label, 1.0 / alpha)
    for e in g.child_edges(latent):
        scale(e.param.label, alpha)
    err = g.error_parent(latent)
    if err is not None:
        for b in g.bi_edges:
            if err in b.pair:
                scale(b.param.label, 1.0 / alpha)
        scale(g.variance_param(err).label, 1.0 / alpha**2)
    return out


# -- JSON interchange -------------------------------------------------------


def model_to_json(model: SemModel) -> dict:
    """Serialize to the interchange schema (nodes, edges, scaling, params)."""
    g = model.diagram
    nodes = [
        {"name": v, "kind": g.kind(v).value}
        for v in g.nodes
        if g.kind(v) is not NodeKind.ERROR
    ]
    edges = []
    for e in g.edges:
        if g.kind(e.src) is NodeKind.ERROR:
            continue
        edges.append({"type": "directed", "from": e.src, "to": e.dst, "param": e.param.label})
    owner = {error_name(v, g.kind(v)): v for v in g.nodes if g.kind(v) is not NodeKind.ERROR}
    for b in g.bi_edges:
        edges.append(
            {"type": "bidirected", "from": owner.get(b.a, b.a), "to": owner.get(b.b, b.b), "param": b.param.label}
        )
    params: dict[str, dict] = {}
    for label, p in _structural_params(model).items():
        entry: dict = {"status": "fixed" if p.fixed is not None else "free"}
        if p.fixed is not None:
            entry["value"] = p.fixed
        params[label] = entry
    variances = {}
    for v in g.nodes:
        if g.kind(v) is NodeKind.ERROR:
            continue
        err = g.error_parent(v)
        p = g.variance_param(err) if err else None
        if p is not None:
            variances[v] = p.label
    return {
        "nodes": nodes,
        "edges": edges,
        "scaling": dict(model.scaling),
        "params": params,
        "variances": variances,
    }


def _structural_params(model: SemModel) -> dict[str, ParamRef]:
    g = model.diagram
    out: dict[str, ParamRef] = {}
    for e in g.edges:
        if g.kind(e.src) is not NodeKind.ERROR:
            out[e.param.label] = e.param
    for b in g.bi_edges:
        out[b.param.label] = b.param
    for p in g.variances.values():
        out[p.label] = p
    return out


def model_from_json(data: dict) -> SemModel:
    latents = [n["name"] for n in data["nodes"] if n["kind"] == "latent"]
    observed = [n["name"] for n in data["nodes"] if n["kind"] == "observed"]
    params = data.get("params", {})

    def ref(label: str) -> ParamRef:
        entry = params.get(label, {"status": "free"})
        fixed = entry.get("value") if entry.get("status") == "fixed" else None
        return ParamRef(label, fixed)

    edges = []
    covs = []
    for e in data["edges"]:
        if e.get("type", "directed") == "directed":
            edges.append((e["from"], e["to"], ref(e["param"])))
        else:
            covs.append((e["from"], e["to"], ref(e["param"])))
    variance_overrides = {
        node: ref(label) for node, label in data.get("variances", {}).items()
    }
    return build_model(
        latents,
        observed,
        edges,
        covs,
        scaling=data.get("scaling") or None,
        variance_overrides=variance_overrides,
    )
