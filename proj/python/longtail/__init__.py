"""Long-tail sequential recommendation with deconfounded gradient aggregation
and per-group plugin networks.

The heavy lifting lives in the C++ core; this package re-exports the bound
operations.
"""

from ._core import (
    GroupAssignment,
    TrunkParams,
    aggregate,
    assign_groups,
    auc,
    backward,
    bce_loss,
    build_model,
    effective_weight,
    generate_synthetic,
    hitrate_at_k,
    ndcg_at_k,
    predict,
    run_experiment,
    sigmoid,
    sigmoid_vec,
    verify,
)

__all__ = [
    "GroupAssignment",
    "TrunkParams",
    "aggregate",
    "assign_groups",
    "auc",
    "backward",
    "bce_loss",
    "build_model",
    "effective_weight",
    "generate_synthetic",
    "hitrate_at_k",
    "ndcg_at_k",
    "predict",
    "run_experiment",
    "sigmoid",
    "sigmoid_vec",
    "verify",
]
