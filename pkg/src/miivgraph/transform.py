"""Latent-to-observed rewrite of a single structural equation.

Each latent covariate under test is replaced by its scaling indicator minus
that indicator's error and co-parent contributions; a latent dependent is
rehomed onto its own scaling indicator.  The result is a regression between
observed variables, the surgically adjusted diagram, the composite error
membership, and a provenance map tying every regression coefficient back to
the original parameters (which is where aliasing becomes visible).

The rewrite is strictly per-equation: transforming several equations of the
same diagram in sequence produces a non-equivalent model, so each outcome is
derived from the original diagram.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import Edge, EquationSpec, NodeKind, PathDiagram, SemModel
from .params import ParamAssignment, ParamExpr, ParamRef, coefficient_label

MAX_SUBSTITUTION_DEPTH = 32


class TransformError(ValueError):
    pass


@dataclass(frozen=True)
class TransformOutcome:
    """Transformed diagram plus the observable regression it encodes."""

    diagram: PathDiagram
    dependent: str
    regressors: tuple[str, ...]
    regressor_coefficients: dict[str, ParamExpr]
    composite_error: dict[str, ParamExpr]
    substituted: tuple[str, ...]
    kept_latents: tuple[str, ...]
    derived_params: dict[str, ParamExpr] = field(default_factory=dict)

    @property
    def provenance(self) -> dict[tuple[str, str], ParamExpr]:
        """Regression-edge provenance: (regressor, dependent) -> coefficient."""
        return {(r, self.dependent): expr for r, expr in self.regressor_coefficients.items()}

    @property
    def aliased(self) -> dict[str, ParamExpr]:
        """Regressors whose coefficient is a sum of several original parameters."""
        return {r: e for r, e in self.regressor_coefficients.items() if e.is_aliased_sum}

    def derived_assignment(self, params: ParamAssignment) -> ParamAssignment:
        """Parameter values for the transformed diagram, given original values."""
        out = dict(params)
        for label, expr in self.derived_params.items():
            out[label] = expr.evaluate(params)
        return out


def l2o(model: SemModel, eq: EquationSpec, max_depth: int = MAX_SUBSTITUTION_DEPTH) -> TransformOutcome:
    """Rewrite ``eq`` over observed variables via scaling-indicator substitution.

    Latent covariates listed in ``eq.targets`` are substituted; latent
    covariates outside the targets stay in place and join the composite error
    (the partial rewrite).  Substituting a latent whose scaling indicator has
    further latent parents recurses through their scaling indicators, bounded
    by ``max_depth``.
    """
    g = model.diagram
    dep = eq.dependent
    if not g.has_node(dep) or g.kind(dep) is NodeKind.ERROR:
        raise TransformError(f"dependent {dep!r} must be a latent or observed node")
    parent_set = set(g.nonerror_parents(dep))
    unknown = [c for c in eq.covariates if c not in parent_set]
    if unknown:
        raise TransformError(f"covariates {unknown} are not parents of {dep!r}")
    if not eq.targets:
        raise TransformError(f"equation for {dep!r} has no target coefficients to estimate")

    regressors: dict[str, ParamExpr] = {}
    composite: dict[str, ParamExpr] = {}
    state = _State(model, regressors, composite, max_depth)
    target_node = model.scaling_indicator(dep) if g.kind(dep) is NodeKind.LATENT else dep
    state.target_node = target_node
    state.dependent = dep

    if g.kind(dep) is NodeKind.LATENT:
        _accum(composite, g.error_parent(dep), ParamExpr.one())
        _accum(composite, g.error_parent(target_node), ParamExpr.one())
        # co-parents of the dependent's scaling indicator enter the regression
        # with their own coefficients (positively: the indicator equation is
        # solved for the indicator itself)
        for e in g.parent_edges(target_node):
            if e.src == dep or g.kind(e.src) is NodeKind.ERROR:
                continue
            state.add_term(e.src, ParamExpr.of(e.param), depth=0)
    else:
        _accum(composite, g.error_parent(dep), ParamExpr.one())

    substituted: list[str] = []
    kept: list[str] = []
    for x in eq.covariates:
        beta = ParamExpr.of(g.edge(x, dep).param)
        if g.kind(x) is NodeKind.LATENT and x not in eq.targets:
            _accum(composite, x, beta)
            kept.append(x)
        elif g.kind(x) is NodeKind.LATENT:
            substituted.append(x)
            state.substitute(x, beta, depth=0)
        else:
            state.add_term(x, beta, depth=0)
    # parents of the dependent outside the requested covariate list behave
    # like untransformed terms: they stay with the equation error
    for p in g.nonerror_parents(dep):
        if p not in eq.covariates:
            _accum(composite, p, ParamExpr.of(g.edge(p, dep).param))
            if g.kind(p) is NodeKind.LATENT:
                kept.append(p)

    regressors = {r: e for r, e in regressors.items() if e}
    composite = {m: e for m, e in composite.items() if e}
    if not regressors:
        raise TransformError(f"rewrite of {dep!r} left no observable regressors")

    diagram, derived = _surgery(model, dep, target_node, eq, regressors, composite, kept)
    return TransformOutcome(
        diagram=diagram,
        dependent=target_node,
        regressors=tuple(regressors),
        regressor_coefficients=regressors,
        composite_error=composite,
        substituted=tuple(substituted),
        kept_latents=tuple(dict.fromkeys(kept)),
        derived_params=derived,
    )


def partial_l2o(
    model: SemModel,
    eq: EquationSpec,
    keep_as_error: frozenset[str] | set[str],
    max_depth: int = MAX_SUBSTITUTION_DEPTH,
) -> TransformOutcome:
    """The partial rewrite: ``keep_as_error`` latents stay untransformed.

    Keeping a latent means its term is treated as part of the equation error;
    the targets therefore may not overlap the kept set.
    """
    keep = set(keep_as_error)
    g = model.diagram
    latent_covs = {c for c in eq.covariates if g.kind(c) is NodeKind.LATENT}
    if not keep <= latent_covs:
        raise TransformError("keep_as_error must be a subset of the latent covariates")
    if keep & eq.targets:
        raise TransformError("kept latents cannot be targets")
    return l2o(model, eq, max_depth=max_depth)


class _State:
    """Accumulates regression terms while expanding scaling-indicator equations."""

    def __init__(self, model: SemModel, regressors, composite, max_depth: int):
        self.model = model
        self.regressors = regressors
        self.composite = composite
        self.max_depth = max_depth
        self.target_node: str | None = None
        self.dependent: str | None = None

    def add_term(self, node: str, weight: ParamExpr, depth: int):
        g = self.model.diagram
        if g.kind(node) is NodeKind.LATENT:
            self.substitute(node, weight, depth)
        else:
            if node in (self.target_node, self.dependent):
                raise TransformError(
                    f"substitution feeds {node!r} back into its own equation; "
                    "this equation cannot be rewritten over observed variables"
                )
            _accum(self.regressors, node, weight)

    def substitute(self, latent: str, weight: ParamExpr, depth: int):
        if depth >= self.max_depth:
            raise TransformError(
                f"scaling-indicator substitution exceeded depth {self.max_depth}"
            )
        g = self.model.diagram
        s = self.model.scaling_indicator(latent)
        self.add_term(s, weight, depth + 1)
        _accum(self.composite, g.error_parent(s), -weight)
        for e in g.parent_edges(s):
            if e.src == latent or g.kind(e.src) is NodeKind.ERROR:
                continue
            self.add_term(e.src, -(weight * ParamExpr.of(e.param)), depth + 1)


def _accum(acc: dict[str, ParamExpr], node: str, expr: ParamExpr):
    acc[node] = acc[node] + expr if node in acc else expr


def _surgery(
    model: SemModel,
    dep: str,
    target: str,
    eq: EquationSpec,
    regressors: dict[str, ParamExpr],
    composite: dict[str, ParamExpr],
    kept: list[str],
) -> tuple[PathDiagram, dict[str, ParamExpr]]:
    """Apply the rewrite to the diagram; only arrows at the transformed
    equation (and its scaling indicator, for latent dependents) change."""
    g = model.diagram
    derived: dict[str, ParamExpr] = {}
    drops: list[tuple[str, str]] = []
    adds: list[Edge] = []
    taken_labels = set(g.all_params())

    def fresh_ref(src: str, dst: str, expr: ParamExpr) -> ParamRef:
        label = coefficient_label(src, dst)
        while label in taken_labels or label in derived:
            label += "'"
        if len(expr.terms) == 1 and expr.terms[0] == (1, ()):
            return ParamRef(label, fixed=1.0)
        derived[label] = expr
        return ParamRef(label)

    if g.kind(dep) is NodeKind.LATENT:
        # the dependent's equation moves onto its scaling indicator wholesale
        drops.extend((p, dep) for p in g.nonerror_parents(dep))
        drops.append((dep, target))
    else:
        drops.extend((x, dep) for x in eq.covariates if g.kind(x) is NodeKind.LATENT and x in eq.targets)

    for r, expr in regressors.items():
        existing = g.edge(r, target)
        if existing is not None and (existing.src, existing.dst) not in drops:
            if expr.single_label == existing.param.label:
                continue  # untouched original arrow
            drops.append((r, target))
        adds.append(Edge(r, target, fresh_ref(r, target, expr)))

    own_error = g.error_parent(target)
    for m, expr in composite.items():
        if m == own_error:
            continue
        kind = g.kind(m)
        existing = g.edge(m, target)
        if kind is not NodeKind.ERROR:
            # kept latents / unlisted parents: for a latent dependent their
            # arrows rehome onto the scaling indicator, otherwise they stay put
            if g.kind(dep) is NodeKind.LATENT:
                if existing is not None and (m, target) not in drops:
                    drops.append((m, target))
                adds.append(Edge(m, target, fresh_ref(m, target, expr)))
            continue
        if existing is not None and (m, target) not in drops:
            drops.append((m, target))
        adds.append(Edge(m, target, fresh_ref(m, target, expr)))

    return g.evolve(drop_edges=drops, add_edges=adds), derived
