"""Minimal dense-tensor autodiff engine for the receiver network."""

from .checkpoint import load_tensors, save_tensors
from .functional import (ENCODER_PARAM_NAMES, bce_with_logits, encoder_layer, feed_forward,
                         init_encoder_layer, layer_norm, linear, mhsa, relu, sigmoid,
                         softmax_rows, xavier_uniform)
from .gradcheck import GradCheckReport, grad_check
from .optim import OptimizerState, adam_step, cosine_lr
from .tensor import Tensor, as_tensor, matmul, parameter

__all__ = [
    "Tensor", "as_tensor", "matmul", "parameter",
    "linear", "relu", "layer_norm", "softmax_rows", "mhsa", "feed_forward", "encoder_layer",
    "bce_with_logits", "sigmoid", "init_encoder_layer", "xavier_uniform", "ENCODER_PARAM_NAMES",
    "OptimizerState", "adam_step", "cosine_lr",
    "GradCheckReport", "grad_check",
    "save_tensors", "load_tensors",
]
