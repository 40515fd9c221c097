"""Numeric backbone: implied covariance, generic sampling, rank, simulation, 2SLS.

The implied covariance comes from the matrix identity for recursive linear
systems; the trek rule re-derives single entries from path enumeration and
serves as an independent oracle.  Two-stage least squares is written directly
against numpy so the first-stage rank contract stays explicit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .graph import enumerate_treks
from .model import NodeKind, PathDiagram, SemModel
from .params import ParamAssignment

DEFAULT_RANK_TOL = 1e-8


class NumericError(ValueError):
    pass


class EstimationError(NumericError):
    pass


@dataclass(frozen=True)
class CovMatrix:
    """Symmetric covariance matrix over an ordered variable index."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(self.names), len(self.names)):
            raise NumericError("covariance shape does not match the index")

    def index(self, name: str) -> int:
        return self.names.index(name)

    def sub(self, rows: Sequence[str], cols: Sequence[str]) -> np.ndarray:
        ri = [self.names.index(r) for r in rows]
        ci = [self.names.index(c) for c in cols]
        return self.values[np.ix_(ri, ci)]

    def entry(self, a: str, b: str) -> float:
        return float(self.values[self.names.index(a), self.names.index(b)])

    def restrict(self, names: Sequence[str]) -> "CovMatrix":
        return CovMatrix(tuple(names), self.sub(names, names))


def _diagram(model: SemModel | PathDiagram) -> PathDiagram:
    return model.diagram if isinstance(model, SemModel) else model


def _coefficient_matrix(g: PathDiagram, params: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray, list[str]]:
    names = list(g.nodes)
    idx = {v: i for i, v in enumerate(names)}
    n = len(names)
    B = np.zeros((n, n))
    for e in g.edges:
        B[idx[e.src], idx[e.dst]] = e.param.value(params)
    phi = np.zeros((n, n))
    for v, p in g.variances.items():
        phi[idx[v], idx[v]] = p.value(params)
    for b in g.bi_edges:
        val = b.param.value(params)
        phi[idx[b.a], idx[b.b]] = val
        phi[idx[b.b], idx[b.a]] = val
    return B, phi, names


def implied_covariance(model: SemModel | PathDiagram, params: ParamAssignment) -> CovMatrix:
    """Model-implied covariance over every node of the diagram.

    For the recursive system x = B'x + e this is (I-B)^-T Phi (I-B)^-1 with
    B[i, j] the coefficient on the arrow i -> j.  Works on canonical and
    non-canonical diagrams alike (bidirected parameters fill Phi directly).
    """
    g = _diagram(model)
    B, phi, names = _coefficient_matrix(g, params)
    n = len(names)
    try:
        A = np.linalg.solve(np.eye(n) - B, np.eye(n))
    except np.linalg.LinAlgError:  # pragma: no cover - impossible for acyclic B
        raise NumericError("I - B is singular; the diagram is not recursive")
    sigma = A.T @ phi @ A
    sigma = (sigma + sigma.T) / 2.0
    return CovMatrix(tuple(names), sigma)


def observed_covariance(model: SemModel, params: ParamAssignment) -> CovMatrix:
    full = implied_covariance(model, params)
    return full.restrict(model.observed)


def trek_rule_covariance(
    model: SemModel | PathDiagram,
    params: ParamAssignment,
    a: str,
    b: str,
    cap: int = 1_000_000,
) -> float:
    """Covariance entry as a sum over treks: top variance times arrow products.

    Requires a canonical diagram; an oracle for :func:`implied_covariance`.
    """
    g = _diagram(model)
    total = 0.0
    coef = {(e.src, e.dst): e.param.value(params) for e in g.edges}
    for trek in enumerate_treks(g, a, b, cap=cap):
        var_param = g.variance_param(trek.top)
        if var_param is None:
            continue
        weight = var_param.value(params)
        for side in (trek.left, trek.right):
            for u, v in zip(side, side[1:]):
                weight *= coef[(u, v)]
        total += weight
    return total


def sample_generic_params(model: SemModel | PathDiagram, seed: int) -> ParamAssignment:
    """Deterministic generic parameter draw.

    Free coefficients are uniform on +-[0.5, 2], variances on [0.5, 2];
    error covariances are drawn as correlations in +-[0.3, 0.7] scaled by the
    endpoint variances, shrunk (deterministically) until Phi is positive
    definite.  Fixed parameters keep their fixed values.
    """
    g = _diagram(model)
    rng = np.random.default_rng(seed)
    out: ParamAssignment = {}

    for v, p in g.variances.items():
        out[p.label] = p.fixed if p.fixed is not None else float(rng.uniform(0.5, 2.0))
    for e in g.edges:
        if e.param.fixed is not None:
            out[e.param.label] = e.param.fixed
        else:
            sign = 1.0 if rng.random() < 0.5 else -1.0
            out[e.param.label] = float(sign * rng.uniform(0.5, 2.0))
    rhos: dict[str, float] = {}
    for b in g.bi_edges:
        if b.param.fixed is not None:
            out[b.param.label] = b.param.fixed
        else:
            sign = 1.0 if rng.random() < 0.5 else -1.0
            rhos[b.param.label] = float(sign * rng.uniform(0.3, 0.7))

    for _ in range(60):
        for b in g.bi_edges:
            if b.param.label in rhos:
                va = g.variance_param(b.a)
                vb = g.variance_param(b.b)
                scale = np.sqrt(out[va.label] * out[vb.label]) if va and vb else 1.0
                out[b.param.label] = rhos[b.param.label] * scale
        if _phi_positive_definite(g, out):
            return out
        rhos = {k: v / 2.0 for k, v in rhos.items()}
    raise NumericError("could not make Phi positive definite")


def _phi_positive_definite(g: PathDiagram, params: Mapping[str, float]) -> bool:
    carriers = [v for v in g.nodes if g.variance_param(v) is not None]
    if not carriers:
        return True
    idx = {v: i for i, v in enumerate(carriers)}
    phi = np.zeros((len(carriers), len(carriers)))
    for v in carriers:
        phi[idx[v], idx[v]] = g.variance_param(v).value(params)
    for b in g.bi_edges:
        if b.a in idx and b.b in idx:
            val = b.param.value(params)
            phi[idx[b.a], idx[b.b]] = val
            phi[idx[b.b], idx[b.a]] = val
    try:
        np.linalg.cholesky(phi)
        return True
    except np.linalg.LinAlgError:
        return False


def numeric_rank(m: np.ndarray, tol_rel: float = DEFAULT_RANK_TOL, scale: float | None = None) -> int:
    """Count of singular values above ``tol_rel`` times the largest one.

    ``scale`` optionally floors the reference magnitude: a matrix whose
    largest singular value is roundoff noise relative to its context (e.g. a
    structurally zero covariance block) then correctly ranks 0 instead of
    letting the noise set the scale.
    """
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0
    if not np.all(np.isfinite(m)):
        raise NumericError("matrix has non-finite entries")
    svals = np.linalg.svd(m, compute_uv=False)
    top = svals.max(initial=0.0)
    if scale is not None:
        top = max(top, scale)
    if top == 0.0:
        return 0
    return int(np.sum(svals > tol_rel * top))


def correlation_block(sigma: "CovMatrix", rows: Sequence[str], cols: Sequence[str]) -> np.ndarray:
    """Covariance block rescaled to correlations (scale-free rank checks)."""
    block = sigma.sub(rows, cols)
    dr = np.sqrt([max(sigma.entry(r, r), 1e-300) for r in rows])
    dc = np.sqrt([max(sigma.entry(c, c), 1e-300) for c in cols])
    return block / np.outer(dr, dc)


def simulate(
    model: SemModel,
    params: ParamAssignment,
    n: int,
    seed: int,
    distribution: str = "gaussian",
) -> pd.DataFrame:
    """Draw ``n`` rows of the observed variables.

    Errors are jointly sampled with covariance Phi (Gaussian by default;
    ``distribution="uniform"`` uses scaled uniforms with the same covariance,
    exercising the estimator's distribution-free behaviour) and propagated
    through the structural equations in topological order.
    """
    if n < 2:
        raise NumericError("need at least two rows")
    g = model.diagram
    rng = np.random.default_rng(seed)
    carriers = [v for v in g.nodes if g.variance_param(v) is not None]
    idx = {v: i for i, v in enumerate(carriers)}
    phi = np.zeros((len(carriers), len(carriers)))
    for v in carriers:
        phi[idx[v], idx[v]] = g.variance_param(v).value(params)
    for b in g.bi_edges:
        val = b.param.value(params)
        phi[idx[b.a], idx[b.b]] = val
        phi[idx[b.b], idx[b.a]] = val
    try:
        chol = np.linalg.cholesky(phi)
    except np.linalg.LinAlgError:
        raise NumericError("Phi is not positive definite at these parameter values")
    if distribution == "gaussian":
        raw = rng.standard_normal((n, len(carriers)))
    elif distribution == "uniform":
        raw = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(n, len(carriers)))
    else:
        raise NumericError(f"unknown error distribution {distribution!r}")
    noise = raw @ chol.T

    values: dict[str, np.ndarray] = {v: noise[:, idx[v]] for v in carriers}
    for v in _topological(g):
        if v in values:
            continue
        col = np.zeros(n)
        for e in g.parent_edges(v):
            col += e.param.value(params) * values[e.src]
        values[v] = col
    cols = [v for v in g.nodes if g.kind(v) is NodeKind.OBSERVED]
    return pd.DataFrame({v: values[v] for v in cols})


def _topological(g: PathDiagram) -> list[str]:
    indeg = {v: len(g.parents(v)) for v in g.nodes}
    ready = [v for v in g.nodes if indeg[v] == 0]
    order: list[str] = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for c in g.children(v):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    if len(order) != len(g.nodes):
        raise NumericError("diagram has a directed cycle")
    return order


@dataclass(frozen=True)
class TslsResult:
    """Two-stage least squares estimates with conventional standard errors."""

    coefficients: dict[str, float]
    standard_errors: dict[str, float]
    n: int
    instruments: tuple[str, ...]
    conditioning: tuple[str, ...]
    intercept: float


def tsls_estimate(
    data: pd.DataFrame,
    dependent: str,
    regressors: Sequence[str],
    instruments: Sequence[str],
    conditioning: Sequence[str] = (),
    tol_rel: float = DEFAULT_RANK_TOL,
) -> TslsResult:
    """Standard 2SLS of ``dependent`` on ``regressors``.

    The first stage projects the regressors on instruments plus conditioning
    variables; the second stage regresses the outcome on the projections plus
    the conditioning variables.  Conditioning variables therefore enter both
    stages, which is what a conditional instrument requires.
    """
    regressors = list(regressors)
    instruments = list(instruments)
    conditioning = list(conditioning)
    if len(instruments) < len(regressors):
        raise EstimationError("need at least as many instruments as regressors")
    needed = [dependent, *regressors, *instruments, *conditioning]
    missing = [c for c in needed if c not in data.columns]
    if missing:
        raise EstimationError(f"dataset is missing columns: {missing}")
    n = len(data)
    if n < len(regressors) + len(conditioning) + 2:
        raise EstimationError("not enough rows to estimate")

    y = data[dependent].to_numpy(dtype=float)
    const = np.ones((n, 1))
    X = data[regressors].to_numpy(dtype=float) if regressors else np.empty((n, 0))
    C = data[conditioning].to_numpy(dtype=float) if conditioning else np.empty((n, 0))
    Z = np.column_stack([data[instruments].to_numpy(dtype=float), C, const])
    Xfull = np.column_stack([X, C, const])

    if numeric_rank(Z, tol_rel) < Z.shape[1]:
        raise EstimationError("first-stage design is singular (weak or collinear instruments)")
    coef_first, *_ = np.linalg.lstsq(Z, Xfull, rcond=None)
    Xhat = Z @ coef_first
    gram = Xhat.T @ Xhat
    if numeric_rank(gram, tol_rel) < gram.shape[0]:
        raise EstimationError("projected regressors are rank deficient (invalid instrument set)")
    beta = np.linalg.solve(gram, Xhat.T @ y)

    resid = y - Xfull @ beta
    dof = max(n - Xfull.shape[1], 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(gram)
    ses = np.sqrt(np.diag(cov))

    return TslsResult(
        coefficients={r: float(beta[i]) for i, r in enumerate(regressors)},
        standard_errors={r: float(ses[i]) for i, r in enumerate(regressors)},
        n=n,
        instruments=tuple(instruments),
        conditioning=tuple(conditioning),
        intercept=float(beta[-1]),
    )


def read_dataset(path) -> pd.DataFrame:
    """CSV with a header row; missing values are rejected."""
    data = pd.read_csv(path)
    if data.isna().any().any():
        raise NumericError("dataset contains missing values")
    non_numeric = [c for c in data.columns if not np.issubdtype(data[c].dtype, np.number)]
    if non_numeric:
        raise NumericError(f"non-numeric columns: {non_numeric}")
    return data
