"""Acceptance criteria, one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings.
"""

import time

import numpy as np
import pytest

from miivgraph import (
    IdStatus,
    NodeKind,
    canonicalize,
    emit_model,
    equation_of,
    identify_model,
    implied_covariance,
    min_t_separator,
    numeric_rank,
    parse_model,
    rescale_latent,
    sample_generic_params,
    simulate,
    trek_rule_covariance,
    tsls_estimate,
)
from miivgraph.generators import random_canonical_admg, random_sem_model
from miivgraph.identify import (
    verify_instrumental_set,
    verify_instrumental_set_permutation_oracle,
    verify_algebraic_instrumental_set,
)
from miivgraph.numeric import correlation_block
from miivgraph.selfcheck import sample_instrument_queries
from miivgraph.transform import TransformError, l2o

from conftest import ALIASED, CONDITIONAL_IV, PARTIAL_EQUATION, WHOLE_EQUATION


def report(criterion: str, detail: str):
    print(f"PASS {criterion}: {detail}")


def test_criterion_1_whole_equation_golden():
    """Equation y3 fully identified with instruments {y1, y5}, in under 1s."""
    start = time.perf_counter()
    model = parse_model(WHOLE_EQUATION)
    record = identify_model(model).record_for("y3")
    elapsed = time.perf_counter() - start
    assert record.status is IdStatus.FULLY_IDENTIFIED
    assert [c.instruments for c in record.choices] == [("y1", "y5")]
    assert record.identified == {"b_l1_y3", "b_l2_y3"}
    assert elapsed < 1.0
    report("criterion 1", f"y3 fully identified by (y1, y5) in {elapsed * 1e3:.0f} ms")


def test_criterion_2_partial_equation_golden():
    """Full equation underidentified; the partial rewrite identifies the second
    loading with instrument y5; the first stays unidentified."""
    model = parse_model(PARTIAL_EQUATION)
    record = identify_model(model).record_for("y3")
    assert record.status is IdStatus.PARTIALLY_IDENTIFIED
    assert all(c.strategy != "full" for c in record.choices)
    partial = [c for c in record.choices if c.strategy == "partial"]
    assert [(c.instruments, c.kept) for c in partial] == [(("y5",), ("l1",))]
    assert record.identified == {"b_l2_y3"}
    assert "b_l1_y3" not in record.identified
    report("criterion 2", "partial rewrite: b_l2_y3 via y5; b_l1_y3 unidentified")


def test_criterion_3_conditional_iv_golden():
    """No unconditioned strategy works; (y5 | {y6}) identifies the loading."""
    model = parse_model(CONDITIONAL_IV)
    record = identify_model(model).record_for("y3")
    assert all(c.strategy == "conditional" for c in record.choices)
    assert all(c.conditioning for c in record.choices)
    (choice,) = record.choices
    assert choice.instruments == ("y5",)
    assert choice.conditioning == ("y6",)
    assert record.identified == {"b_l2_y3"}
    report("criterion 3", "conditional instrument (y5 | {y6}) identifies b_l2_y3")


def test_criterion_4_aliased_equation_golden():
    """The y4 equation is identified but aliased; estimable set is exactly
    {la24, la14+la34}."""
    model = parse_model(ALIASED)
    record = identify_model(model).record_for("y4")
    assert record.status is IdStatus.IDENTIFIED_BUT_ALIASED
    assert set(record.estimable) == {"la24", "la14+la34"}
    report("criterion 4", "estimable set exactly {la24, la14+la34}")


def test_criterion_5_instrumental_set_criteria_agree():
    """Permutation oracle and permutation-free checker agree on 100% of
    queries over >= 1000 random canonical diagrams, in under 5 minutes."""
    start = time.perf_counter()
    graphs = 1000
    total = 0
    verdicts = {True: 0, False: 0}
    for t in range(graphs):
        g = canonicalize(random_canonical_admg(300 + t, max_nodes=8, p_edge=0.3))
        for instruments, xs, y in sample_instrument_queries(g, 5300 + t, per_graph=6):
            assert len(xs) <= 3
            fast = verify_instrumental_set(g, instruments, xs, y)
            slow = verify_instrumental_set_permutation_oracle(g, instruments, xs, y)
            assert fast == slow, (t, instruments, xs, y)
            verdicts[fast] += 1
            total += 1
    elapsed = time.perf_counter() - start
    assert total >= 4000
    assert verdicts[True] > 100 and verdicts[False] > 100  # both directions exercised
    assert elapsed < 300.0
    report(
        "criterion 5",
        f"{total} queries on {graphs} graphs agree ({verdicts[True]} accept / "
        f"{verdicts[False]} reject), {elapsed:.1f} s",
    )


def test_criterion_6_graphical_equals_algebraic():
    """Graphical verdict after the rewrite matches the numeric rank verdict on
    >= 200 random models with generic parameters."""
    rng = np.random.default_rng(400)
    models = 200
    total = 0
    verdicts = {True: 0, False: 0}
    for t in range(models):
        model = random_sem_model(400 + t)
        params = sample_generic_params(model, 7400 + t)
        g = model.diagram
        deps = [v for v in g.nodes if g.kind(v) is not NodeKind.ERROR and g.nonerror_parents(v)]
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
            pool = [z for z in model.observed if z != outcome.dependent]
            if len(pool) < len(xs):
                continue
            for _ in range(3):
                instruments = [str(v) for v in rng.choice(pool, size=len(xs), replace=False)]
                graphical = verify_instrumental_set(gc, instruments, xs, outcome.dependent)
                algebraic = verify_algebraic_instrumental_set(
                    model, params, instruments, xs, outcome.dependent,
                    outcome.composite_error, tol_rel=1e-8,
                )
                assert graphical == algebraic, (t, dep, instruments)
                verdicts[graphical] += 1
                total += 1
    assert total >= 400
    assert verdicts[True] > 20 and verdicts[False] > 20
    report(
        "criterion 6",
        f"{total} queries on {models} models agree at tol 1e-8 "
        f"({verdicts[True]} accept / {verdicts[False]} reject)",
    )


def test_criterion_7_rank_never_exceeds_separator_and_is_generically_tight():
    rng = np.random.default_rng(500)
    total = 0
    tight = 0
    for t in range(150):
        g = canonicalize(random_canonical_admg(500 + t))
        params = sample_generic_params(g, 8500 + t)
        sigma = implied_covariance(g, params)
        structural = [v for v in g.nodes if g.kind(v) is not NodeKind.ERROR]
        for _ in range(4):
            ka, kb = int(rng.integers(1, 3)), int(rng.integers(1, 3))
            if len(structural) < max(ka, kb):
                continue
            a = [str(v) for v in rng.choice(structural, size=ka, replace=False)]
            b = [str(v) for v in rng.choice(structural, size=kb, replace=False)]
            ts = min_t_separator(g, a, b).size
            rank = numeric_rank(correlation_block(sigma, a, b), 1e-8, scale=1.0)
            assert rank <= ts, (t, a, b)
            total += 1
            tight += rank == ts
    assert tight >= 0.99 * total
    report("criterion 7", f"{total} queries: 0 bound violations, {tight} tight")


def test_criterion_8_rescaling_invariance():
    rng = np.random.default_rng(600)
    for t in range(100):
        model = random_sem_model(600 + t)
        params = sample_generic_params(model, 9600 + t)
        latent = model.latents[int(rng.integers(len(model.latents)))]
        alpha = float(rng.uniform(0.1, 3.0)) * (-1.0 if rng.random() < 0.5 else 1.0)
        scaled = rescale_latent(model, params, latent, alpha)
        keep = [
            v
            for v in model.diagram.nodes
            if model.diagram.kind(v) is not NodeKind.ERROR and v != latent
        ]
        before = implied_covariance(model, params).sub(keep, keep)
        after = implied_covariance(model, scaled).sub(keep, keep)
        rel = np.abs(before - after).max() / max(np.abs(before).max(), 1e-12)
        assert rel < 1e-9, (t, latent, alpha)
    report("criterion 8", "covariances invariant to 1e-9 over 100 (model, alpha) pairs")


def test_criterion_9_covariance_oracle():
    entries = 0
    for t in range(200):
        model = random_sem_model(700 + t, max_latents=2, max_indicators=3, with_outcome=False)
        structural = [
            v for v in model.diagram.nodes if model.diagram.kind(v) is not NodeKind.ERROR
        ]
        assert len(structural) <= 10
        params = sample_generic_params(model, 10_700 + t)
        gc = canonicalize(model.diagram)
        sigma = implied_covariance(gc, params)
        names = list(gc.nodes)
        for i, a in enumerate(names):
            for b in names[i:]:
                expect = trek_rule_covariance(gc, params, a, b)
                got = sigma.entry(a, b)
                assert got == pytest.approx(expect, rel=1e-10, abs=1e-12), (t, a, b)
                entries += 1
    report("criterion 9", f"{entries} entries equal on 200 models at rel 1e-10")


def test_criterion_10_estimation_consistency():
    start = time.perf_counter()
    model = parse_model(WHOLE_EQUATION)
    params = sample_generic_params(model, 13)
    data = simulate(model, params, 50_000, seed=13)
    res = tsls_estimate(data, "y3", ["y2", "y4"], ["y1", "y5"])
    for reg, label in (("y2", "b_l1_y3"), ("y4", "b_l2_y3")):
        assert abs(res.coefficients[reg] - params[label]) < 3 * res.standard_errors[reg]
    first = time.perf_counter() - start
    assert first < 10.0

    start = time.perf_counter()
    cond_model = parse_model(CONDITIONAL_IV)
    cond_params = sample_generic_params(cond_model, 21)
    cond_data = simulate(cond_model, cond_params, 50_000, seed=21)
    good = tsls_estimate(cond_data, "y3", ["y4"], ["y5"], conditioning=["y6"])
    bad = tsls_estimate(cond_data, "y3", ["y4"], ["y5"])
    truth = cond_params["b_l2_y3"]
    assert abs(good.coefficients["y4"] - truth) < 3 * good.standard_errors["y4"]
    assert abs(bad.coefficients["y4"] - truth) > 5 * bad.standard_errors["y4"]
    second = time.perf_counter() - start
    assert second < 10.0
    report(
        "criterion 10",
        f"2SLS recovery in {first:.1f} s; conditional-vs-plain contrast in {second:.1f} s",
    )


def test_criterion_11_parser_round_trip():
    from conftest import structurally_equal

    failures = 0
    for seed in range(500):
        model = random_sem_model(seed)
        again = parse_model(emit_model(model))
        if not structurally_equal(model, again):
            failures += 1
    assert failures == 0
    report("criterion 11", "500 random models round-trip with 0 failures")
