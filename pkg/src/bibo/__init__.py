"""Bilevel Bayesian optimization: nested GP-driven search with per-level acquisitions."""

from bibo.bilevel import (
    StudyConfig,
    StudyFailure,
    StudyMode,
    StudyResult,
    improvement_rate,
    run_study,
)
from bibo.objective import (
    EvaluationFailed,
    ObjectiveKind,
    ObjectiveSpec,
    ProtocolError,
    make_objective,
)
from bibo.space import Config, Level, ParamKind, ParamSpec, SearchSpace, Value

__version__ = "0.1.0"

__all__ = [
    "Config",
    "EvaluationFailed",
    "Level",
    "ObjectiveKind",
    "ObjectiveSpec",
    "ParamKind",
    "ParamSpec",
    "ProtocolError",
    "SearchSpace",
    "StudyConfig",
    "StudyFailure",
    "StudyMode",
    "StudyResult",
    "Value",
    "improvement_rate",
    "make_objective",
    "run_study",
    "__version__",
]
