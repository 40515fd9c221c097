"""lavaan-style model language.

One statement per line: ``L =~ i1 + i2`` declares a latent with indicators
(the first loading fixed to 1 designates the scaling indicator), ``a ~ b + c``
declares regression arrows, ``a ~~ b`` an error covariance and ``a ~~ a`` an
error variance.  ``2*x`` fixes a coefficient, ``lbl*x`` names it.  Comments
start with ``#``.  Statement order only matters for the scaling-indicator
default (first fixed-to-1 indicator) and for covariate order in reports.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .model import (
    ERROR_PREFIX_LATENT,
    ERROR_PREFIX_OBSERVED,
    NodeKind,
    ParamRef,
    SemModel,
    build_model,
    coefficient_label,
    covariance_label,
    validate,
    variance_label,
)

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")
_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int
    column: int
    message: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


class ParseError(ValueError):
    def __init__(self, diagnostics: list[ParseDiagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class _Term:
    prefix: str | None
    name: str
    line: int
    column: int


@dataclass(frozen=True)
class _Statement:
    op: str
    lhs: str
    terms: tuple[_Term, ...]
    line: int
    column: int


def parse_model(text: str) -> SemModel:
    """Parse model text; raises :class:`ParseError` carrying all diagnostics."""
    diags: list[ParseDiagnostic] = []
    statements = _scan(text, diags)
    if diags:
        raise ParseError(diags)

    latents: list[str] = []
    for st in statements:
        if st.op == "=~" and st.lhs not in latents:
            latents.append(st.lhs)

    names: dict[str, None] = {}
    for st in statements:
        names.setdefault(st.lhs, None)
        for t in st.terms:
            names.setdefault(t.name, None)
    observed = [n for n in names if n not in latents]

    edges: list[tuple[str, str, ParamRef | None]] = []
    seen_edges: dict[tuple[str, str], tuple[int, int]] = {}
    covariances: list[tuple[str, str, ParamRef | None]] = []
    seen_cov: set[frozenset[str]] = set()
    variance_overrides: dict[str, ParamRef] = {}
    labels_used: dict[str, tuple[int, int]] = {}
    indicators: dict[str, list[tuple[_Term, ParamRef]]] = {l: [] for l in latents}

    def check_label(label: str, t: _Term):
        if label in labels_used:
            diags.append(ParseDiagnostic(t.line, t.column, f"parameter label {label!r} already used"))
        labels_used[label] = (t.line, t.column)

    def make_ref(t: _Term, src: str, dst: str, first_indicator: bool = False) -> ParamRef:
        if t.prefix is None:
            if first_indicator:
                return ParamRef(coefficient_label(src, dst), fixed=1.0)
            return ParamRef(coefficient_label(src, dst))
        if _NUMBER.match(t.prefix):
            return ParamRef(coefficient_label(src, dst), fixed=float(t.prefix))
        ref = ParamRef(t.prefix)
        check_label(t.prefix, t)
        return ref

    def add_edge(src: str, dst: str, ref: ParamRef, t: _Term):
        if (src, dst) in seen_edges:
            diags.append(ParseDiagnostic(t.line, t.column, f"duplicate arrow {src} -> {dst}"))
            return
        seen_edges[(src, dst)] = (t.line, t.column)
        edges.append((src, dst, ref))

    for st in statements:
        if st.op == "=~":
            for t in st.terms:
                first = not indicators[st.lhs]
                ref = make_ref(t, st.lhs, t.name, first_indicator=first)
                indicators[st.lhs].append((t, ref))
                add_edge(st.lhs, t.name, ref, t)
        elif st.op == "~":
            for t in st.terms:
                add_edge(t.name, st.lhs, make_ref(t, t.name, st.lhs), t)
        else:  # ~~
            for t in st.terms:
                if t.name == st.lhs:
                    if st.lhs in variance_overrides:
                        diags.append(ParseDiagnostic(t.line, t.column, f"duplicate variance statement for {st.lhs!r}"))
                        continue
                    label = variance_label(st.lhs)
                    if t.prefix is None:
                        ref = ParamRef(label)
                    elif _NUMBER.match(t.prefix):
                        ref = ParamRef(label, fixed=float(t.prefix))
                    else:
                        ref = ParamRef(t.prefix)
                        check_label(t.prefix, t)
                    variance_overrides[st.lhs] = ref
                else:
                    pair = frozenset((st.lhs, t.name))
                    if pair in seen_cov:
                        diags.append(ParseDiagnostic(t.line, t.column, f"duplicate covariance {st.lhs} ~~ {t.name}"))
                        continue
                    seen_cov.add(pair)
                    label = covariance_label(*sorted((st.lhs, t.name)))
                    if t.prefix is None:
                        ref = ParamRef(label)
                    elif _NUMBER.match(t.prefix):
                        ref = ParamRef(label, fixed=float(t.prefix))
                    else:
                        ref = ParamRef(t.prefix)
                        check_label(t.prefix, t)
                    covariances.append((st.lhs, t.name, ref))

    scaling: dict[str, str] = {}
    for latent in latents:
        chosen = None
        for t, ref in indicators[latent]:
            if ref.fixed == 1.0 and t.name not in latents:
                chosen = t.name
                break
        if chosen is None:
            st_line = next(st.line for st in statements if st.op == "=~" and st.lhs == latent)
            diags.append(
                ParseDiagnostic(st_line, 1, f"latent {latent!r} has no scaling indicator fixed to 1")
            )
        else:
            scaling[latent] = chosen

    if diags:
        raise ParseError(diags)

    model = build_model(latents, observed, edges, covariances, scaling, variance_overrides)
    for violation in validate(model):
        diags.append(ParseDiagnostic(1, 1, str(violation)))
    if diags:
        raise ParseError(diags)
    return model


def _scan(text: str, diags: list[ParseDiagnostic]) -> list[_Statement]:
    statements: list[_Statement] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        for chunk in line.split(";"):
            if not chunk.strip():
                continue
            st = _scan_statement(chunk, raw, lineno, diags)
            if st is not None:
                statements.append(st)
    return statements


def _scan_statement(chunk: str, raw: str, lineno: int, diags: list[ParseDiagnostic]) -> _Statement | None:
    op = None
    for candidate in ("=~", "~~", "~"):
        if candidate in chunk:
            op = candidate
            break
    if op is None:
        diags.append(ParseDiagnostic(lineno, _col(raw, chunk), "expected one of the operators =~, ~, ~~"))
        return None
    lhs_text, rhs_text = chunk.split(op, 1)
    lhs = lhs_text.strip()
    if not _valid_name(lhs, lineno, _col(raw, lhs_text), diags):
        return None
    terms: list[_Term] = []
    for part in rhs_text.split("+"):
        body = part.strip()
        col = _col(raw, part)
        if not body:
            diags.append(ParseDiagnostic(lineno, col, "empty term"))
            continue
        prefix: str | None = None
        name = body
        if "*" in body:
            prefix, name = (s.strip() for s in body.split("*", 1))
            if not prefix or (not _NUMBER.match(prefix) and not _NAME.match(prefix)):
                diags.append(ParseDiagnostic(lineno, col, f"bad coefficient prefix {prefix!r}"))
                continue
        if not _valid_name(name, lineno, col, diags):
            continue
        terms.append(_Term(prefix, name, lineno, col))
    if not terms:
        diags.append(ParseDiagnostic(lineno, _col(raw, rhs_text), "statement has no right-hand side"))
        return None
    return _Statement(op, lhs, tuple(terms), lineno, _col(raw, chunk))


def _col(raw: str, fragment: str) -> int:
    stripped = fragment.strip()
    if not stripped:
        return 1
    pos = raw.find(stripped)
    return pos + 1 if pos >= 0 else 1


def _valid_name(name: str, line: int, col: int, diags: list[ParseDiagnostic]) -> bool:
    if not _NAME.match(name):
        diags.append(ParseDiagnostic(line, col, f"invalid variable name {name!r}"))
        return False
    if name.startswith(ERROR_PREFIX_OBSERVED) or name.startswith(ERROR_PREFIX_LATENT):
        diags.append(
            ParseDiagnostic(line, col, f"{name!r}: names starting with eps_/zeta_ are reserved for error terms")
        )
        return False
    return True


def emit_model(model: SemModel) -> str:
    """Render a model back to the textual language.

    Round trip: parsing the output yields a model with the same nodes, arrows,
    fixings and scaling map.  Covariate order inside statements is normalized.
    """
    problems = validate(model)
    if problems:
        raise ValueError("cannot emit an invalid model: " + "; ".join(map(str, problems)))
    g = model.diagram
    lines: list[str] = []
    for latent in sorted(model.scaling):
        lines.append(f"{latent} =~ {model.scaling[latent]}")

    by_dst: dict[str, list] = {}
    for e in g.edges:
        if g.kind(e.src) is NodeKind.ERROR:
            continue
        if model.scaling.get(e.src) == e.dst and e.param.fixed == 1.0:
            continue  # already on the =~ line
        by_dst.setdefault(e.dst, []).append(e)
    for dst in sorted(by_dst):
        terms = [_term_text(e.src, e.dst, e.param) for e in sorted(by_dst[dst], key=lambda e: e.src)]
        lines.append(f"{dst} ~ {' + '.join(terms)}")

    owner = {}
    for v in g.nodes:
        if g.kind(v) is not NodeKind.ERROR:
            err = g.error_parent(v)
            if err:
                owner[err] = v
    for b in sorted(g.bi_edges, key=lambda b: tuple(sorted((b.a, b.b)))):
        a, c = sorted((owner.get(b.a, b.a), owner.get(b.b, b.b)))
        default = {covariance_label(a, c), covariance_label(c, a)}
        if b.param.fixed is not None:
            lines.append(f"{a} ~~ {_fmt(b.param.fixed)}*{c}")
        elif b.param.label not in default:
            lines.append(f"{a} ~~ {b.param.label}*{c}")
        else:
            lines.append(f"{a} ~~ {c}")

    for v in g.nodes:
        if g.kind(v) is NodeKind.ERROR:
            continue
        err = g.error_parent(v)
        p = g.variance_param(err) if err else None
        if p is None:
            continue
        if p.fixed is not None:
            lines.append(f"{v} ~~ {_fmt(p.fixed)}*{v}")
        elif p.label != variance_label(v):
            lines.append(f"{v} ~~ {p.label}*{v}")

    return "\n".join(lines) + ("\n" if lines else "")


def _term_text(src: str, dst: str, param: ParamRef) -> str:
    if param.fixed is not None:
        return f"{_fmt(param.fixed)}*{src}"
    if param.label != coefficient_label(src, dst):
        return f"{param.label}*{src}"
    return src


def _fmt(x: float) -> str:
    return f"{x:g}"
