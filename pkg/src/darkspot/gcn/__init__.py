"""Graph node classifier: generalized aggregation, residual blocks, and a
hand-rolled reverse-mode gradient path."""

from .model import (
    EPS,
    GcnLayer,
    GcnModel,
    GraphSample,
    ModelError,
    build_model,
    concat_samples,
    forward,
    graph_conv,
    load_checkpoint,
    message,
    powermean_agg,
    predict,
    resplus_block,
    save_checkpoint,
    softmax_agg,
)
from .train import (
    AdamState,
    TrainConfig,
    TrainError,
    TrainResult,
    adam_step,
    apply_params,
    class_weights_from,
    cross_entropy,
    loss_and_gradients,
    node_confusion,
    node_metrics,
    train,
)

__all__ = [
    "EPS",
    "AdamState",
    "GcnLayer",
    "GcnModel",
    "GraphSample",
    "ModelError",
    "TrainConfig",
    "TrainError",
    "TrainResult",
    "adam_step",
    "apply_params",
    "build_model",
    "class_weights_from",
    "concat_samples",
    "cross_entropy",
    "forward",
    "graph_conv",
    "load_checkpoint",
    "loss_and_gradients",
    "message",
    "node_confusion",
    "node_metrics",
    "powermean_agg",
    "predict",
    "resplus_block",
    "save_checkpoint",
    "softmax_agg",
    "train",
]
