"""Exact D- and I-optimal response-surface designs found by particle swarm search."""

from ._accel import backend_name
from .criteria import (
    CriterionKind,
    CriterionValue,
    MomentMatrix,
    d_score,
    iv_score,
    moment_matrix,
    relative_efficiency,
    spv,
)
from .model import FactorSpace, SecondOrderModel, build_model_matrix, expand_point, information_matrix, num_params
from .pso import PsoConfig, RunResult, Topology, TopologyKind, run

__version__ = "0.1.0"

__all__ = [
    "CriterionKind",
    "CriterionValue",
    "FactorSpace",
    "MomentMatrix",
    "PsoConfig",
    "RunResult",
    "SecondOrderModel",
    "Topology",
    "TopologyKind",
    "backend_name",
    "build_model_matrix",
    "d_score",
    "expand_point",
    "information_matrix",
    "iv_score",
    "moment_matrix",
    "num_params",
    "relative_efficiency",
    "run",
    "spv",
]
