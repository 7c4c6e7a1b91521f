"""Minimal numpy tensor library with reverse-mode autodiff."""

from . import functional, ops
from .functional import ConfigurationError, ShapeError
from .module import BatchNorm2d, Conv2d, ConvTranspose2d, Module, Parameter
from .optim import Adam, initialize
from .rng import RngStreams
from .tensor import Tensor, build_tape, is_grad_enabled, no_grad

__all__ = [
    "Adam",
    "BatchNorm2d",
    "ConfigurationError",
    "Conv2d",
    "ConvTranspose2d",
    "Module",
    "Parameter",
    "RngStreams",
    "ShapeError",
    "Tensor",
    "build_tape",
    "functional",
    "initialize",
    "is_grad_enabled",
    "no_grad",
    "ops",
]
