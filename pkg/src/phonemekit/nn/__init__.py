"""Numpy feed-forward network engine used by the phoneme CNN."""

from .gradcheck import GradCheckResult, gradient_check, gradient_check_layer, relative_error
from .io import load_model, save_model
from .layers import Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D, apply_max_norm, relu, softmax
from .losses import cross_entropy, to_onehot
from .model import ForwardCache, Model, StaleCacheError
from .optim import OPTIMIZERS, SGD, AdaDelta, Adam, Optimizer, make_optimizer, optimizer_step
from .train import History, TrainConfig, fit

__all__ = [
    "AdaDelta", "Adam", "Conv2D", "Dense", "Dropout", "Flatten", "ForwardCache", "GradCheckResult",
    "History", "Layer", "MaxPool2D", "Model", "OPTIMIZERS", "Optimizer", "SGD", "StaleCacheError",
    "TrainConfig", "apply_max_norm", "cross_entropy", "fit", "gradient_check", "gradient_check_layer",
    "load_model", "make_optimizer", "optimizer_step", "relative_error", "relu", "save_model", "softmax",
    "to_onehot",
]
