"""Equation-wise identifiability: instrumental sets, conditional instruments,
partial fallbacks, and aliasing-aware reporting.

Three interchangeable checkers are provided: the permutation-free graphical
criterion (treks plus t-separation, the production path), a brute-force
permutation/trek-system oracle, and a numeric rank check on the implied
covariance.  Reports only ever contain choices that re-verify.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .graph import (
    canonicalize,
    descendants,
    d_separated,
    enumerate_treks,
    has_trek,
    min_t_separator,
    remove_coefficient_edges,
)
from .model import EquationSpec, NodeKind, PathDiagram, SemModel, equation_of
from .numeric import correlation_block, implied_covariance, numeric_rank, _phi_positive_definite
from .params import ParamAssignment, ParamExpr
from .transform import TransformError, TransformOutcome, l2o


class IdentifyError(ValueError):
    pass


@dataclass(frozen=True)
class IdentifyConfig:
    max_choices: int = 16
    max_partial_subsets: int = 12
    max_conditioning: int = 2
    max_scan: int = 4096
    oracle_bound: int = 12


class IdStatus(Enum):
    FULLY_IDENTIFIED = "fully_identified"
    PARTIALLY_IDENTIFIED = "partially_identified"
    UNDERIDENTIFIED = "underidentified"
    IDENTIFIED_BUT_ALIASED = "identified_but_aliased"


@dataclass(frozen=True)
class InstrumentChoice:
    """A verified way to estimate (part of) one equation."""

    strategy: str  # "full" | "partial" | "conditional"
    instruments: tuple[str, ...]
    conditioning: tuple[str, ...]
    dependent: str  # transformed (observed) dependent
    regressors: tuple[str, ...]
    for_targets: frozenset[str]  # original parameter labels pinned down
    estimands: Mapping[str, ParamExpr]  # regressor -> original-parameter expression
    equation: str  # original dependent
    targets_used: frozenset[str]  # covariates substituted/estimated in this attempt
    kept: tuple[str, ...] = ()


@dataclass(frozen=True)
class EquationRecord:
    dependent: str
    covariates: tuple[str, ...]
    target_params: tuple[str, ...]
    status: IdStatus
    identified: frozenset[str]
    estimable: tuple[str, ...]  # rendered combinations, aliased sums included
    choices: tuple[InstrumentChoice, ...]
    regression: tuple[str, tuple[str, ...]] | None
    provenance: Mapping[str, str] = field(default_factory=dict)
    note: str = ""


@dataclass(frozen=True)
class IdentificationReport:
    records: tuple[EquationRecord, ...]

    def record_for(self, dependent: str) -> EquationRecord:
        for r in self.records:
            if r.dependent == dependent:
                return r
        raise KeyError(dependent)

    def to_json(self) -> dict:
        return {
            "equations": [
                {
                    "dependent": r.dependent,
                    "covariates": list(r.covariates),
                    "targets": list(r.target_params),
                    "status": r.status.value,
                    "identified": sorted(r.identified),
                    "estimable_combinations": list(r.estimable),
                    "regression": (
                        {"dependent": r.regression[0], "regressors": list(r.regression[1])}
                        if r.regression
                        else None
                    ),
                    "provenance": dict(r.provenance),
                    "note": r.note,
                    "choices": [
                        {
                            "strategy": c.strategy,
                            "instruments": list(c.instruments),
                            "conditioning": list(c.conditioning),
                            "regression": {
                                "dependent": c.dependent,
                                "regressors": list(c.regressors),
                            },
                            "for_targets": sorted(c.for_targets),
                            "kept_as_error": list(c.kept),
                        }
                        for c in r.choices
                    ],
                }
                for r in self.records
            ]
        }

    def to_text(self) -> str:
        lines: list[str] = []
        for r in self.records:
            lines.append(f"equation {r.dependent} ~ {' + '.join(r.covariates)}")
            lines.append(f"  status: {r.status.value}")
            if r.identified:
                lines.append(f"  identified: {', '.join(sorted(r.identified))}")
            if r.estimable:
                lines.append(f"  estimable combinations: {', '.join(r.estimable)}")
            for c in r.choices:
                cond = f" | {{{', '.join(c.conditioning)}}}" if c.conditioning else ""
                kept = f" (kept as error: {', '.join(c.kept)})" if c.kept else ""
                lines.append(
                    f"  [{c.strategy}] {c.dependent} ~ {' + '.join(c.regressors)}"
                    f"  instruments: {', '.join(c.instruments)}{cond}{kept}"
                )
            if r.note:
                lines.append(f"  note: {r.note}")
        return "\n".join(lines) + "\n"


# -- criteria ----------------------------------------------------------------


def verify_instrumental_set(
    g: PathDiagram, instruments: Iterable[str], xs: Iterable[str], y: str
) -> bool:
    """Permutation-free instrumental set criterion.

    True iff (1) no treks connect the instruments to ``y`` once the arrows
    X -> y are removed, and (2) no t-separator of the instruments and X is
    smaller than |X|.
    """
    instruments = list(dict.fromkeys(instruments))
    xs = list(dict.fromkeys(xs))
    if len(instruments) != len(xs) or not xs:
        raise IdentifyError("need exactly one instrument per regressor under test")
    gc = canonicalize(g)
    if not gc.is_acyclic():
        raise IdentifyError("criterion requires an acyclic diagram")
    removed = remove_coefficient_edges(gc, xs, y)
    if has_trek(removed, instruments, [y]):
        return False
    return min_t_separator(gc, instruments, xs).size >= len(xs)


def verify_instrumental_set_permutation_oracle(
    g: PathDiagram,
    instruments: Iterable[str],
    xs: Iterable[str],
    y: str,
    oracle_bound: int = 12,
    trek_cap: int = 200_000,
) -> bool:
    """Brute-force instrumental set check: search orderings and trek systems.

    Some ordering of instruments and regressors must admit treks pi_1..pi_k
    (pi_j from instrument j to regressor j) with, for every i < j: (a) the
    j-th instrument off trek pi_i, and (b) every intersection of pi_i and
    pi_j lying strictly on the left side of pi_i and strictly on the right
    side of pi_j (tops and twice-visited nodes are same-sided and never
    qualify).  Exponential; only for small graphs.
    """
    instruments = list(dict.fromkeys(instruments))
    xs = list(dict.fromkeys(xs))
    if len(instruments) != len(xs) or not xs:
        raise IdentifyError("need exactly one instrument per regressor under test")
    gc = canonicalize(g)
    structural = [v for v in gc.nodes if gc.kind(v) is not NodeKind.ERROR]
    if len(structural) > oracle_bound:
        raise IdentifyError(f"graph exceeds the oracle bound of {oracle_bound} nodes")
    removed = remove_coefficient_edges(gc, xs, y)
    if has_trek(removed, instruments, [y]):
        return False

    treks: dict[tuple[str, str], list] = {}
    for i in instruments:
        for x in xs:
            treks[(i, x)] = enumerate_treks(gc, i, x, cap=trek_cap)

    k = len(xs)
    for perm_i in itertools.permutations(instruments):
        for perm_x in itertools.permutations(xs):
            if _trek_system_exists(perm_i, perm_x, treks, k):
                return True
    return False


def _trek_system_exists(perm_i, perm_x, treks, k) -> bool:
    chosen: list = []

    def compatible(trek) -> bool:
        j = len(chosen)
        for prev in chosen:
            if perm_i[j] in prev.nodes:
                return False
            for v in set(prev.nodes) & set(trek.nodes):
                strictly_left_prev = v in prev.left_set and v not in prev.right_set
                strictly_right_new = v in trek.right_set and v not in trek.left_set
                if not (strictly_left_prev and strictly_right_new):
                    return False
        return True

    def backtrack(j: int) -> bool:
        if j == k:
            return True
        for trek in treks[(perm_i[j], perm_x[j])]:
            if compatible(trek):
                chosen.append(trek)
                if backtrack(j + 1):
                    return True
                chosen.pop()
        return False

    return backtrack(0)


def verify_algebraic_instrumental_set(
    model: SemModel,
    params: ParamAssignment,
    instruments: Sequence[str],
    xs: Sequence[str],
    y: str,
    composite_error: Mapping[str, ParamExpr] | Iterable[str],
    tol_rel: float = 1e-8,
) -> bool:
    """Numeric instrumental set check on the model-implied covariance.

    Conditions: the instruments are uncorrelated with every member of the
    composite error (at tolerance, on the correlation scale), Sigma[I, X] has
    rank |X|, and Sigma[I] has rank |I|.  Computed from the original model's
    implied covariance with generic parameter values.
    """
    members = list(composite_error.keys() if isinstance(composite_error, Mapping) else composite_error)
    if not _phi_positive_definite(model.diagram, params):
        raise IdentifyError("parameter values are non-generic: Phi is rank deficient")
    sigma = implied_covariance(model, params)
    instruments = list(instruments)
    for i in instruments:
        var_i = sigma.entry(i, i)
        for m in members:
            scale = (var_i * sigma.entry(m, m)) ** 0.5
            if abs(sigma.entry(i, m)) > tol_rel * max(scale, 1e-300):
                return False
    # rank checks on the correlation scale, with an absolute floor so that
    # structurally-zero blocks rank 0 instead of letting roundoff set the scale
    if numeric_rank(correlation_block(sigma, instruments, list(xs)), tol_rel, scale=1.0) != len(xs):
        return False
    if numeric_rank(correlation_block(sigma, instruments, instruments), tol_rel, scale=1.0) != len(instruments):
        return False
    return True


def verify_conditional_iv(
    g: PathDiagram, z: str, w: Iterable[str], x: str, y: str
) -> bool:
    """Single conditional instrument z for the arrow x -> y given W.

    Requires W free of descendants of y, z d-separated from y given W once
    x -> y is removed, and z d-connected to x given W.
    """
    w = set(w)
    gc = canonicalize(g)
    for v in [z, x, y, *w]:
        if not gc.has_node(v):
            raise IdentifyError(f"unknown node {v!r}")
    if z in w or z in (x, y):
        raise IdentifyError("instrument must be distinct from x, y and the conditioning set")
    if x not in gc.parents(y):
        raise IdentifyError(f"{x!r} is not a parent of {y!r}")
    if gc.kind(z) is not NodeKind.OBSERVED or any(gc.kind(v) is not NodeKind.OBSERVED for v in w):
        raise IdentifyError("instrument and conditioning set must be observed")
    if w & descendants(gc, y):
        return False
    if not d_separated(remove_coefficient_edges(gc, [x], y), {z}, {y}, w):
        return False
    if x in w:
        return False
    return not d_separated(gc, {z}, {x}, w)


# -- search ------------------------------------------------------------------


def find_instruments(
    model: SemModel, eq: EquationSpec, config: IdentifyConfig = IdentifyConfig()
) -> list[InstrumentChoice]:
    """All minimal instrument sets for the rewritten equation, up to a cap."""
    outcome = l2o(model, eq)
    return _search_instruments(model, eq, outcome, "full", config)


def _search_instruments(
    model: SemModel,
    eq: EquationSpec,
    outcome: TransformOutcome,
    strategy: str,
    config: IdentifyConfig,
) -> list[InstrumentChoice]:
    gc = canonicalize(outcome.diagram)
    xs = list(outcome.regressors)
    y = outcome.dependent
    k = len(xs)
    removed = remove_coefficient_edges(gc, xs, y)
    candidates = [
        z
        for z in model.observed
        if z != y and not has_trek(removed, [z], [y])
    ]
    candidates.sort(key=lambda z: (_distance_to(gc, z, xs), z))
    choices: list[InstrumentChoice] = []
    scanned = 0
    for combo in itertools.combinations(candidates, k):
        scanned += 1
        if scanned > config.max_scan or len(choices) >= config.max_choices:
            break
        if min_t_separator(gc, combo, xs).size >= k:
            choices.append(_make_choice(strategy, combo, (), eq, outcome))
    return choices


def _distance_to(g: PathDiagram, z: str, xs: Sequence[str]) -> int:
    if z in xs:
        return 0
    adj: dict[str, set[str]] = {v: set() for v in g.nodes}
    for e in g.edges:
        adj[e.src].add(e.dst)
        adj[e.dst].add(e.src)
    frontier = list(xs)
    dist = {x: 0 for x in xs}
    while frontier:
        nxt: list[str] = []
        for v in frontier:
            for u in adj[v]:
                if u not in dist:
                    dist[u] = dist[v] + 1
                    nxt.append(u)
        frontier = nxt
    return dist.get(z, len(g.nodes) + 1)


def _make_choice(
    strategy: str,
    instruments: Sequence[str],
    conditioning: Sequence[str],
    eq: EquationSpec,
    outcome: TransformOutcome,
    restrict_to: str | None = None,
) -> InstrumentChoice:
    estimands = dict(outcome.regressor_coefficients)
    if restrict_to is not None:
        estimands = {restrict_to: estimands[restrict_to]}
    for_targets = frozenset(
        expr.single_label for expr in estimands.values() if expr.single_label
    )
    return InstrumentChoice(
        strategy=strategy,
        instruments=tuple(instruments),
        conditioning=tuple(conditioning),
        dependent=outcome.dependent,
        regressors=tuple(outcome.regressors) if restrict_to is None else (restrict_to,),
        for_targets=for_targets,
        estimands=estimands,
        equation=eq.dependent,
        targets_used=frozenset(eq.targets),
        kept=tuple(outcome.kept_latents),
    )


def identify_equation(
    model: SemModel, eq: EquationSpec, config: IdentifyConfig = IdentifyConfig()
) -> EquationRecord:
    """Run the identification ladder for one equation.

    Whole-equation instrumental sets first; failing that, partial rewrites
    over target subsets (smallest kept sets first); failing that, per-arrow
    conditional instruments.  Aliased coefficients downgrade the verdict to
    identified-but-aliased with the estimable combinations listed.
    """
    g = model.diagram
    target_labels: dict[str, str] = {}
    for c in eq.covariates:
        if c in eq.targets:
            target_labels[c] = g.edge(c, eq.dependent).param.label
    all_targets = frozenset(target_labels.values())

    note = ""
    full_outcome: TransformOutcome | None = None
    try:
        full_outcome = l2o(model, eq)
    except TransformError as err:
        note = str(err)

    identified: dict[str, InstrumentChoice] = {}
    estimable: list[str] = []
    choices: list[InstrumentChoice] = []
    aliased_full = False

    if full_outcome is not None:
        full_choices = _search_instruments(model, eq, full_outcome, "full", config)
        if full_choices:
            choices.extend(full_choices)
            for expr in full_outcome.regressor_coefficients.values():
                label = expr.single_label
                if label:
                    identified.setdefault(label, full_choices[0])
                elif expr.is_aliased_sum:
                    aliased_full = True
            if aliased_full:
                # every regression coefficient is estimable, but some only as sums
                estimable = [e.render() for e in full_outcome.regressor_coefficients.values()]

    if not choices:
        choices.extend(_partial_ladder(model, eq, config, identified, estimable))
        if set(all_targets) - set(identified):
            choices.extend(
                _conditional_ladder(model, eq, config, identified, estimable, target_labels)
            )

    identified_targets = frozenset(lbl for lbl in identified if lbl in all_targets)
    if aliased_full:
        status = IdStatus.IDENTIFIED_BUT_ALIASED
    elif identified_targets == all_targets and all_targets:
        status = IdStatus.FULLY_IDENTIFIED
    elif identified_targets:
        status = IdStatus.PARTIALLY_IDENTIFIED
    else:
        status = IdStatus.UNDERIDENTIFIED

    regression = None
    provenance: dict[str, str] = {}
    if full_outcome is not None:
        regression = (full_outcome.dependent, tuple(full_outcome.regressors))
        provenance = {r: e.render() for r, e in full_outcome.regressor_coefficients.items()}

    return EquationRecord(
        dependent=eq.dependent,
        covariates=tuple(eq.covariates),
        target_params=tuple(target_labels[c] for c in eq.covariates if c in target_labels),
        status=status,
        identified=identified_targets,
        estimable=tuple(dict.fromkeys(estimable)),
        choices=tuple(choices),
        regression=regression,
        provenance=provenance,
        note=note,
    )


def _partial_ladder(model, eq, config, identified, estimable) -> list[InstrumentChoice]:
    g = model.diagram
    latent_targets = [c for c in eq.covariates if c in eq.targets and g.kind(c) is NodeKind.LATENT]
    out: list[InstrumentChoice] = []
    tried = 0
    for size in range(1, len(latent_targets) + 1):
        for keep in itertools.combinations(latent_targets, size):
            new_targets = eq.targets - set(keep)
            if not new_targets:
                continue
            if tried >= config.max_partial_subsets:
                return out
            tried += 1
            sub_eq = EquationSpec(eq.dependent, eq.covariates, frozenset(new_targets))
            try:
                outcome = l2o(model, sub_eq)
            except TransformError:
                continue
            found = _search_instruments(model, sub_eq, outcome, "partial", config)
            if not found:
                continue
            out.extend(found)
            for expr in outcome.regressor_coefficients.values():
                if expr.is_aliased_sum and expr.render() not in estimable:
                    estimable.append(expr.render())
                label = expr.single_label
                if label:
                    identified.setdefault(label, found[0])
    return out


def _conditional_ladder(model, eq, config, identified, estimable, target_labels) -> list[InstrumentChoice]:
    g = model.diagram
    out: list[InstrumentChoice] = []
    for cov in eq.covariates:
        label = target_labels.get(cov)
        if label is None or label in identified:
            continue
        sub_eq = EquationSpec(eq.dependent, eq.covariates, frozenset({cov}))
        try:
            outcome = l2o(model, sub_eq)
        except TransformError:
            continue
        x = model.scaling_indicator(cov) if g.kind(cov) is NodeKind.LATENT else cov
        if x not in outcome.regressors:
            continue
        y = outcome.dependent
        gc = canonicalize(outcome.diagram)
        pool = sorted(
            z
            for z in model.observed
            if z not in (x, y) and z not in descendants(gc, y)
        )
        found = _first_conditional(gc, pool, x, y, config)
        if found is None:
            continue
        z, w = found
        choice = _make_choice("conditional", (z,), w, sub_eq, outcome, restrict_to=x)
        out.append(choice)
        expr = outcome.regressor_coefficients[x]
        if expr.is_aliased_sum and expr.render() not in estimable:
            estimable.append(expr.render())
        if expr.single_label:
            identified.setdefault(expr.single_label, choice)
    return out


def _first_conditional(gc, pool, x, y, config):
    for z in pool:
        others = [v for v in pool if v not in (z, x)]
        for size in range(0, config.max_conditioning + 1):
            for w in itertools.combinations(others, size):
                if verify_conditional_iv(gc, z, w, x, y):
                    return z, w
    return None


def identify_model(
    model: SemModel, config: IdentifyConfig = IdentifyConfig()
) -> IdentificationReport:
    """One record per structural equation that has free coefficients to identify."""
    records: list[EquationRecord] = []
    g = model.diagram
    for v in g.nodes:
        if g.kind(v) is NodeKind.ERROR or not g.nonerror_parents(v):
            continue
        eq = equation_of(model, v)
        if not eq.targets:
            continue
        records.append(identify_equation(model, eq, config))
    return IdentificationReport(tuple(records))
