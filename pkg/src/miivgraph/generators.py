"""Seeded random diagrams and models for property tests and self checks."""

from __future__ import annotations

import numpy as np

from .model import (
    NodeKind,
    PathDiagram,
    SemModel,
    build_model,
    validate,
)
from .params import ParamRef, coefficient_label, covariance_label, variance_label
from .model import Edge, BiEdge


def random_canonical_admg(
    seed: int,
    max_nodes: int = 8,
    p_edge: float = 0.3,
    p_bidirected: float = 0.12,
) -> PathDiagram:
    """Random RAM-style diagram: structural DAG, explicit errors, a few
    bidirected pairs between the errors.  Canonicalize before trek work."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, max_nodes + 1))
    names = [f"v{i}" for i in range(1, n + 1)]
    kinds = {v: NodeKind.OBSERVED for v in names}
    edges: list[Edge] = []
    variances: dict[str, ParamRef] = {}
    for v in names:
        err = f"e_{v}"
        kinds[err] = NodeKind.ERROR
        edges.append(Edge(err, v, ParamRef(coefficient_label(err, v), fixed=1.0)))
        variances[err] = ParamRef(variance_label(v))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p_edge:
                src, dst = names[i], names[j]
                edges.append(Edge(src, dst, ParamRef(coefficient_label(src, dst))))
    bi: list[BiEdge] = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p_bidirected:
                a, b = f"e_{names[i]}", f"e_{names[j]}"
                bi.append(BiEdge(a, b, ParamRef(covariance_label(names[i], names[j]))))
    return PathDiagram(kinds, edges, bi, variances)


def random_sem_model(
    seed: int,
    max_latents: int = 3,
    max_indicators: int = 4,
    p_latent_edge: float = 0.5,
    p_covariance: float = 0.2,
    with_outcome: bool = True,
) -> SemModel:
    """Random valid measurement-plus-structure model.

    Latents form a DAG, each carries 2..max_indicators indicators (the first
    is the scaling indicator), plus optional exogenous observed covariates,
    cross-loadings on non-scaling indicators, an observed outcome regressed
    on latents, and a few error covariances.
    """
    rng = np.random.default_rng(seed)
    n_lat = int(rng.integers(1, max_latents + 1))
    latents = [f"l{i}" for i in range(1, n_lat + 1)]
    observed: list[str] = []
    edges: list[tuple[str, str, ParamRef | None]] = []
    scaling: dict[str, str] = {}

    for i in range(n_lat):
        for j in range(i + 1, n_lat):
            if rng.random() < p_latent_edge:
                edges.append((latents[i], latents[j], None))

    indicator_count = 0
    indicators_of: dict[str, list[str]] = {}
    for latent in latents:
        k = int(rng.integers(2, max_indicators + 1))
        names = []
        for _ in range(k):
            indicator_count += 1
            names.append(f"y{indicator_count}")
        observed.extend(names)
        indicators_of[latent] = names
        scaling[latent] = names[0]
        for pos, ind in enumerate(names):
            fixed = 1.0 if pos == 0 else None
            ref = ParamRef(coefficient_label(latent, ind), fixed=fixed)
            edges.append((latent, ind, ref))

    # cross-loadings never target scaling indicators
    for latent in latents:
        for other in latents:
            if other == latent:
                continue
            for ind in indicators_of[other][1:]:
                if rng.random() < 0.08:
                    edges.append((latent, ind, None))

    n_exo = int(rng.integers(0, 3))
    for i in range(1, n_exo + 1):
        x = f"x{i}"
        observed.append(x)
        wired = False
        for latent in latents:
            if rng.random() < 0.5:
                edges.append((x, latent, None))
                wired = True
        if rng.random() < 0.3:
            pool = [ind for latent in latents for ind in indicators_of[latent][1:]]
            if pool:
                target = pool[int(rng.integers(0, len(pool)))]
                edges.append((x, target, None))
                wired = True
        if not wired:
            edges.append((x, latents[0], None))

    if with_outcome and rng.random() < 0.7:
        w = "w1"
        observed.append(w)
        parents = [l for l in latents if rng.random() < 0.6] or [latents[-1]]
        for p in parents:
            edges.append((p, w, None))

    covariances: list[tuple[str, str, ParamRef | None]] = []
    seen: set[frozenset[str]] = set()
    all_obs_inds = [ind for latent in latents for ind in indicators_of[latent]]
    for _ in range(3):
        if rng.random() < p_covariance and len(all_obs_inds) >= 2:
            a, b = rng.choice(all_obs_inds, size=2, replace=False)
            if frozenset((a, b)) not in seen:
                seen.add(frozenset((a, b)))
                covariances.append((str(a), str(b), None))
    if n_lat >= 2 and rng.random() < 0.4:
        a, b = rng.choice(latents, size=2, replace=False)
        if frozenset((a, b)) not in seen:
            covariances.append((str(a), str(b), None))

    model = build_model(latents, observed, edges, covariances, scaling)
    assert validate(model) == [], f"generator produced an invalid model (seed {seed})"
    return model
