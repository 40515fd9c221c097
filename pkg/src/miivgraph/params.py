"""Parameter references and small symbolic coefficient expressions.

Every arrow of a path diagram carries a :class:`ParamRef` (free or fixed).
The latent-to-observed rewrite produces coefficients that are polynomials in
the original parameters (products along indicator chains, sums on aliased
edges); :class:`ParamExpr` represents those exactly so that provenance can be
reported and evaluated numerically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

ParamAssignment = dict[str, float]


@dataclass(frozen=True)
class ParamRef:
    """A named model parameter, either free or fixed to a constant."""

    label: str
    fixed: float | None = None

    @property
    def is_free(self) -> bool:
        return self.fixed is None

    def value(self, params: Mapping[str, float]) -> float:
        """Value under an assignment; assignments may override fixed values
        (rescaling does exactly that)."""
        if self.label in params:
            return params[self.label]
        if self.fixed is not None:
            return self.fixed
        raise KeyError(f"no value assigned to free parameter {self.label!r}")


def coefficient_label(src: str, dst: str) -> str:
    return f"b_{src}_{dst}"


def variance_label(owner: str) -> str:
    return f"phi_{owner}"


def covariance_label(a: str, b: str) -> str:
    return f"phi_{a}_{b}"


# A term is (integer coefficient, tuple of parameter labels multiplied together).
# The empty factor tuple is the constant 1, so ``((1, ()),)`` is the unit
# coefficient carried by plain error arrows.
Term = tuple[int, tuple[str, ...]]


@dataclass(frozen=True)
class ParamExpr:
    """Sum of signed products of original parameter labels."""

    terms: tuple[Term, ...] = ()

    @staticmethod
    def zero() -> "ParamExpr":
        return ParamExpr(())

    @staticmethod
    def one() -> "ParamExpr":
        return ParamExpr(((1, ()),))

    @staticmethod
    def var(label: str) -> "ParamExpr":
        return ParamExpr(((1, (label,)),))

    @staticmethod
    def of(param: ParamRef) -> "ParamExpr":
        """Expression holding a single edge parameter.

        Fixed parameters keep their label rather than collapsing to a
        constant, so provenance stays readable; evaluation resolves them
        through the assignment, which always carries fixed values too.
        """
        return ParamExpr.var(param.label)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __neg__(self) -> "ParamExpr":
        return ParamExpr(tuple((-c, f) for c, f in self.terms))

    def __add__(self, other: "ParamExpr") -> "ParamExpr":
        return _combine(list(self.terms) + list(other.terms))

    def __mul__(self, other: "ParamExpr") -> "ParamExpr":
        out: list[Term] = []
        for c1, f1 in self.terms:
            for c2, f2 in other.terms:
                out.append((c1 * c2, tuple(sorted(f1 + f2))))
        return _combine(out)

    def evaluate(self, params: Mapping[str, float]) -> float:
        total = 0.0
        for coef, factors in self.terms:
            prod = float(coef)
            for label in factors:
                prod *= params[label]
            total += prod
        return total

    @property
    def single_label(self) -> str | None:
        """The original parameter this expression equals, if it is exactly one."""
        if len(self.terms) == 1:
            coef, factors = self.terms[0]
            if coef == 1 and len(factors) == 1:
                return factors[0]
        return None

    @property
    def is_aliased_sum(self) -> bool:
        """True when the coefficient is a sum of several original parameters."""
        return len(self.terms) > 1 and all(len(f) == 1 for _, f in self.terms)

    def labels(self) -> set[str]:
        return {lbl for _, factors in self.terms for lbl in factors}

    def render(self) -> str:
        if not self.terms:
            return "0"
        parts: list[str] = []
        for coef, factors in sorted(self.terms, key=lambda t: (len(t[1]), t[1])):
            body = "*".join(factors) if factors else "1"
            if abs(coef) != 1:
                body = f"{abs(coef)}*{body}"
            if not parts:
                parts.append(body if coef > 0 else f"-{body}")
            else:
                parts.append(f"+{body}" if coef > 0 else f"-{body}")
        return "".join(parts)

    def __str__(self) -> str:  # pragma: no cover - convenience
        return self.render()


def _combine(terms: Iterable[Term]) -> ParamExpr:
    acc: dict[tuple[str, ...], int] = {}
    order: list[tuple[str, ...]] = []
    for coef, factors in terms:
        if factors not in acc:
            acc[factors] = 0
            order.append(factors)
        acc[factors] += coef
    return ParamExpr(tuple((acc[f], f) for f in order if acc[f] != 0))
