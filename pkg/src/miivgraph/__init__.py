"""Identification and 2SLS estimation of path coefficients in latent-variable
structural equation models, via graphical latent-to-observed rewriting and
instrumental-set criteria."""

from .model import (
    EquationSpec,
    ModelError,
    NodeKind,
    PathDiagram,
    SemModel,
    Violation,
    build_model,
    equation_of,
    model_from_json,
    model_to_json,
    rescale_latent,
    validate,
)
from .params import ParamAssignment, ParamExpr, ParamRef
from .parser import ParseDiagnostic, ParseError, emit_model, parse_model
from .graph import (
    GraphError,
    Trek,
    TSeparator,
    ancestors,
    canonicalize,
    d_separated,
    descendants,
    enumerate_treks,
    has_trek,
    min_t_separator,
    remove_coefficient_edges,
    to_dot,
)
from .transform import TransformError, TransformOutcome, l2o, partial_l2o
from .identify import (
    IdentificationReport,
    IdentifyConfig,
    IdStatus,
    InstrumentChoice,
    find_instruments,
    identify_equation,
    identify_model,
    verify_algebraic_instrumental_set,
    verify_conditional_iv,
    verify_instrumental_set,
    verify_instrumental_set_permutation_oracle,
)
from .numeric import (
    CovMatrix,
    EstimationError,
    NumericError,
    TslsResult,
    implied_covariance,
    numeric_rank,
    observed_covariance,
    read_dataset,
    sample_generic_params,
    simulate,
    trek_rule_covariance,
    tsls_estimate,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
