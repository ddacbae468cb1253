"""Numpy autodiff engine: tensors, layers, optimizer, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import (check_gradients, check_gradients_sampled,
                        max_relative_error)
from .layers import (BatchNorm2d, Conv2d, Dropout, Module, Parameter, ReLU,
                     Sequential, SubSpectralNorm, Swish)
from .optim import SGD, lr_at_epoch
from .tensor import (Tensor, batch_norm, conv2d, dropout, relu, softmax,
                     softmax_cross_entropy, swish)

__all__ = [
    "Tensor", "Parameter", "Module", "Conv2d", "BatchNorm2d",
    "SubSpectralNorm", "ReLU", "Swish", "Dropout", "Sequential",
    "SGD", "lr_at_epoch", "softmax", "softmax_cross_entropy",
    "conv2d", "batch_norm", "relu", "swish", "dropout",
    "save_checkpoint", "load_checkpoint", "check_gradients",
    "check_gradients_sampled", "max_relative_error",
]
