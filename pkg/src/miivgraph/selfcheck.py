"""Cross-validation suites: every graphical decision against an independent
algebraic or brute-force counterpart.

These back the ``selfcheck`` CLI command at desk scale and the acceptance
tests at full scale.  All suites are deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .generators import random_canonical_admg, random_sem_model
from .graph import canonicalize, d_separated, d_separated_moral, min_t_separator
from .identify import (
    verify_algebraic_instrumental_set,
    verify_instrumental_set,
    verify_instrumental_set_permutation_oracle,
)
from .model import NodeKind, equation_of, rescale_latent
from .numeric import correlation_block, implied_covariance, numeric_rank, sample_generic_params
from .transform import TransformError, l2o


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def check_covariance_oracle(trials: int = 25, seed: int = 0, rtol: float = 1e-10) -> CheckResult:
    """Matrix-formula implied covariance equals the trek-rule sum entrywise."""
    bad = 0
    checked = 0
    from .numeric import trek_rule_covariance

    for t in range(trials):
        model = random_sem_model(seed + t, max_latents=2, max_indicators=3)
        params = sample_generic_params(model, seed + 1000 + t)
        gc = canonicalize(model.diagram)
        sigma = implied_covariance(gc, params)
        names = [v for v in gc.nodes if gc.kind(v) is not NodeKind.ERROR]
        for i, a in enumerate(names):
            for b in names[i:]:
                expect = trek_rule_covariance(gc, params, a, b)
                got = sigma.entry(a, b)
                checked += 1
                if abs(got - expect) > rtol * max(1.0, abs(expect)):
                    bad += 1
    return CheckResult(
        "covariance-oracle", bad == 0, f"{checked} entries on {trials} models, {bad} mismatches"
    )


def check_rescale_invariance(trials: int = 25, seed: int = 100, rtol: float = 1e-9) -> CheckResult:
    """Rescaling a latent leaves the covariance of every other variable alone."""
    bad = 0
    rng = np.random.default_rng(seed)
    for t in range(trials):
        model = random_sem_model(seed + t)
        params = sample_generic_params(model, seed + 2000 + t)
        latent = model.latents[int(rng.integers(0, len(model.latents)))]
        alpha = float(rng.uniform(0.1, 3.0)) * (1.0 if rng.random() < 0.5 else -1.0)
        scaled = rescale_latent(model, params, latent, alpha)
        keep = [
            v
            for v in model.diagram.nodes
            if model.diagram.kind(v) is not NodeKind.ERROR and v != latent
        ]
        before = implied_covariance(model, params).sub(keep, keep)
        after = implied_covariance(model, scaled).sub(keep, keep)
        scale = np.max(np.abs(before)) or 1.0
        if np.max(np.abs(before - after)) > rtol * scale:
            bad += 1
    return CheckResult("rescale-invariance", bad == 0, f"{trials} (model, alpha) pairs, {bad} failures")


def check_rank_bound(
    trials: int = 25, seed: int = 200, tol: float = 1e-8, min_equal_fraction: float = 0.99
) -> CheckResult:
    """Covariance submatrix rank never exceeds the minimal t-separator size and
    generically attains it."""
    rng = np.random.default_rng(seed)
    total = 0
    equal = 0
    violations = 0
    for t in range(trials):
        g = canonicalize(random_canonical_admg(seed + t))
        params = sample_generic_params(g, seed + 3000 + t)
        sigma = implied_covariance(g, params)
        structural = [v for v in g.nodes if g.kind(v) is not NodeKind.ERROR]
        for _ in range(4):
            ka = int(rng.integers(1, 3))
            kb = int(rng.integers(1, 3))
            if len(structural) < max(ka, kb):
                continue
            a = [str(x) for x in rng.choice(structural, size=ka, replace=False)]
            b = [str(x) for x in rng.choice(structural, size=kb, replace=False)]
            ts = min_t_separator(g, a, b).size
            rk = numeric_rank(correlation_block(sigma, a, b), tol, scale=1.0)
            total += 1
            if rk > ts:
                violations += 1
            elif rk == ts:
                equal += 1
    ok = violations == 0 and equal >= min_equal_fraction * total
    return CheckResult(
        "trek-rank-bound",
        ok,
        f"{total} queries: {violations} bound violations, {equal} tight ({total - equal} slack)",
    )


def sample_instrument_queries(g, seed: int, per_graph: int = 6):
    """Deterministic (I, X, y) queries for a canonical diagram: a mix of random
    sets and candidate-based sets that are likely to satisfy the criterion."""
    from .graph import has_trek, remove_coefficient_edges

    rng = np.random.default_rng(seed)
    structural = [v for v in g.nodes if g.kind(v) is not NodeKind.ERROR]
    ys = [y for y in structural if any(p in structural for p in g.parents(y))]
    queries = []
    for y in ys[:3]:
        parents = [p for p in g.parents(y) if p in structural]
        pool = [v for v in structural if v != y]
        for k in range(1, min(3, len(parents)) + 1):
            if len(pool) < k:
                continue
            xs = [str(v) for v in rng.choice(parents, size=k, replace=False)]
            i_rand = [str(v) for v in rng.choice(pool, size=k, replace=False)]
            queries.append((i_rand, xs, y))
            removed = remove_coefficient_edges(g, xs, y)
            candidates = [z for z in pool if not has_trek(removed, [z], [y])]
            if len(candidates) >= k:
                queries.append((candidates[:k], xs, y))
            if len(queries) >= per_graph:
                return queries
    return queries


def check_instrumental_set_equivalence(
    graphs: int = 25, seed: int = 300, per_graph: int = 6, oracle_bound: int = 12
) -> CheckResult:
    """Permutation-free criterion agrees with the permutation/trek-system oracle."""
    total = 0
    disagreements = 0
    for t in range(graphs):
        g = canonicalize(random_canonical_admg(seed + t, max_nodes=8, p_edge=0.3))
        for instruments, xs, y in sample_instrument_queries(g, seed + 5000 + t, per_graph):
            fast = verify_instrumental_set(g, instruments, xs, y)
            slow = verify_instrumental_set_permutation_oracle(
                g, instruments, xs, y, oracle_bound=oracle_bound
            )
            total += 1
            if fast is not slow:
                disagreements += 1
    return CheckResult(
        "instrumental-set-equivalence",
        disagreements == 0 and total > 0,
        f"{total} queries on {graphs} graphs, {disagreements} disagreements",
    )


def check_algebraic_equivalence(
    models: int = 25, seed: int = 400, tol: float = 1e-8
) -> CheckResult:
    """Graphical instrumental verdict after the rewrite equals the numeric
    rank-based verdict at generic parameters."""
    total = 0
    disagreements = 0
    rng = np.random.default_rng(seed)
    for t in range(models):
        model = random_sem_model(seed + t)
        params = sample_generic_params(model, seed + 7000 + t)
        g = model.diagram
        deps = [
            v
            for v in g.nodes
            if g.kind(v) is not NodeKind.ERROR and g.nonerror_parents(v)
        ]
        for dep in deps[:2]:
            eq = equation_of(model, dep)
            if not eq.targets:
                continue
            try:
                outcome = l2o(model, eq)
            except TransformError:
                continue
            gc = canonicalize(outcome.diagram)
            xs = list(outcome.regressors)
            y = outcome.dependent
            pool = [z for z in model.observed if z != y]
            if len(pool) < len(xs):
                continue
            for _ in range(3):
                instruments = [str(v) for v in rng.choice(pool, size=len(xs), replace=False)]
                graphical = verify_instrumental_set(gc, instruments, xs, y)
                algebraic = verify_algebraic_instrumental_set(
                    model, params, instruments, xs, y, outcome.composite_error, tol
                )
                total += 1
                if graphical is not algebraic:
                    disagreements += 1
    return CheckResult(
        "graphical-vs-algebraic",
        disagreements == 0 and total > 0,
        f"{total} queries on {models} models, {disagreements} disagreements",
    )


def check_dsep_agreement(trials: int = 40, seed: int = 500) -> CheckResult:
    """Walk-reachability d-separation agrees with the moral-graph version."""
    rng = np.random.default_rng(seed)
    total = 0
    disagreements = 0
    for t in range(trials):
        g = random_canonical_admg(seed + t)
        structural = [v for v in g.nodes if g.kind(v) is not NodeKind.ERROR]
        for _ in range(6):
            picks = rng.permutation(structural)
            if len(picks) < 3:
                continue
            a, b = str(picks[0]), str(picks[1])
            w = [str(v) for v in picks[2 : 2 + int(rng.integers(0, 3))]]
            total += 1
            if d_separated(g, {a}, {b}, w) is not d_separated_moral(g, {a}, {b}, w):
                disagreements += 1
    return CheckResult(
        "d-separation-agreement", disagreements == 0, f"{total} queries, {disagreements} disagreements"
    )


def run_all(trials: int = 25, seed: int = 0, oracle_bound: int = 12) -> list[CheckResult]:
    return [
        check_covariance_oracle(trials, seed),
        check_rescale_invariance(trials, seed + 11),
        check_rank_bound(trials, seed + 23),
        check_instrumental_set_equivalence(max(trials // 2, 5), seed + 37, oracle_bound=oracle_bound),
        check_algebraic_equivalence(max(trials // 2, 5), seed + 53),
        check_dsep_agreement(trials, seed + 71),
    ]
