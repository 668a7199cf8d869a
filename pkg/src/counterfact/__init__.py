"""Counterfactual, interventional and conditional queries over structural models."""

from .boolean import (
    AbductionResult,
    CounterfactualVerdict,
    Verdict,
    World,
    abduce,
    counterfactual_bool,
    forward_eval,
    intervene_bool,
)
from .dsl import DslError, ModelDocument, parse_model, parse_query, serialize
from .gaussian import (
    DisturbancePosterior,
    GaussianMoments,
    abduct_disturbances,
    condition,
    condition_moments,
    counterfactual,
    intervene,
    prior_moments,
)
from .model import (
    BooleanScm,
    ContradictoryEvidenceError,
    LinearScm,
    ModelError,
    Query,
    SingularSystemError,
    Tolerances,
    UnknownVariableError,
    ValidationReport,
    partition,
    prune,
    validate_linear,
)

__version__ = "0.1.0"
