"""Python bindings for the geometer C++ core."""

from ._core import (
    GeometerError,
    Graph,
    Model,
    SessionStream,
    build_session_stream,
    cosine_sim,
    distillation_loss,
    evaluate,
    load_checkpoint,
    load_graph,
    nearest_prototype,
    pretrain,
    proximity_loss,
    run_session,
    save_graph,
    separability_loss,
    softened_logits,
    softmax_rows,
    squared_euclidean,
    synthetic_graph,
    uniformity_loss,
)

__all__ = [
    "GeometerError",
    "Graph",
    "Model",
    "SessionStream",
    "build_session_stream",
    "cosine_sim",
    "distillation_loss",
    "evaluate",
    "load_checkpoint",
    "load_graph",
    "nearest_prototype",
    "pretrain",
    "proximity_loss",
    "run_session",
    "save_graph",
    "separability_loss",
    "softened_logits",
    "softmax_rows",
    "squared_euclidean",
    "synthetic_graph",
    "uniformity_loss",
]
