"""Dense-tensor autodiff, layers, optimizer and checkpoint IO."""

from .tensor import (
    Tensor,
    as_tensor,
    concat,
    cross_entropy,
    cross_entropy_rows,
    embedding_lookup,
    squared_error,
)
from .layers import (
    ACTIVATION,
    Params,
    ShapeError,
    attention_forward,
    attention_init,
    block_forward,
    block_init,
    embedding,
    embedding_init,
    layer_norm,
    layer_norm_init,
    linear,
    linear_init,
    mlp_forward,
    mlp_init,
    timestep_features,
)
from .optim import AdamState, adam_step
from .gradcheck import grad_check
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "ACTIVATION", "AdamState", "CheckpointError", "Params", "ShapeError",
    "Tensor", "adam_step", "as_tensor", "attention_forward", "attention_init",
    "block_forward", "block_init", "concat", "cross_entropy",
    "cross_entropy_rows", "embedding", "embedding_init", "embedding_lookup",
    "grad_check", "layer_norm", "layer_norm_init", "linear", "linear_init",
    "load_checkpoint", "mlp_forward", "mlp_init", "save_checkpoint",
    "squared_error", "timestep_features",
]
