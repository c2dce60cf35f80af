from . import tensor as ops
from .gru import GruParams, bigru_encode, bigru_encode_batch, gru_cell, gru_encode_batch, gru_run, gru_sequence
from .module import Module, parameter
from .optim import Adam, AdamConfig
from .tensor import DimensionError, NumericError, Tensor, backward

__all__ = [
    "Adam", "AdamConfig", "DimensionError", "GruParams", "Module", "NumericError", "Tensor",
    "backward", "bigru_encode", "bigru_encode_batch", "gru_cell", "gru_encode_batch", "gru_run", "gru_sequence",
    "ops", "parameter",
]
