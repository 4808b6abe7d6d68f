"""Sequential model: shape validation, forward/backward, prediction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import CompositionError, ParameterError, PhonemeKitError
from .layers import Dense, Layer
from .losses import check_onehot
from .optim import Optimizer, make_optimizer


class StaleCacheError(PhonemeKitError):
    """backward() was given a cache from an earlier parameter state or an inference pass."""


@dataclass
class ForwardCache:
    output: np.ndarray
    layer_caches: list
    training: bool
    version: int


class Model:
    def __init__(self, layers: Sequence[Layer], input_shape, class_labels: Optional[Sequence[str]] = None):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.class_labels = list(class_labels) if class_labels is not None else None
        self.loss = "categorical_crossentropy"
        self.optimizer: Optional[Optimizer] = None
        self.metrics = ("accuracy",)
        self.meta: dict = {}
        self._version = 0
        self._built = False

    def build(self, seed: int = 0) -> "Model":
        """Initialise weights and check that consecutive shapes compose."""
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.build(shape, rng)
            except CompositionError as exc:
                raise CompositionError(f"layer {i} ({layer!r}): {exc}") from None
            if any(d < 1 for d in shape):
                raise CompositionError(f"layer {i} ({layer!r}) collapses the shape to {shape}")
        self._built = True
        self._version += 1
        return self

    def compile(self, optimizer="adadelta", loss="categorical_crossentropy", metrics=("accuracy",), **hyper):
        if loss != "categorical_crossentropy":
            raise ParameterError(f"unsupported loss {loss!r}")
        self.optimizer = optimizer if isinstance(optimizer, Optimizer) else make_optimizer(optimizer, **hyper)
        self.loss = loss
        self.metrics = tuple(metrics)
        return self

    @property
    def output_shape(self):
        return self.layers[-1].output_shape

    @property
    def num_classes(self) -> int:
        return self.output_shape[0]

    def parameters(self) -> list:
        return [layer.params[name] for layer in self.layers for name in layer.params]

    def named_parameters(self):
        for i, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                yield f"{i}:{layer.kind}.{name}", p

    def count_params(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def apply_constraints(self):
        for layer in self.layers:
            layer.constrain()
        self._version += 1

    def mark_updated(self):
        """Invalidate outstanding forward caches after an external weight change."""
        self._version += 1

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if not self._built:
            raise CompositionError("model has not been built")
        if x.ndim != len(self.input_shape) + 1 or x.shape[1:] != self.input_shape:
            raise CompositionError(f"batch shape {x.shape[1:]} does not match model input {self.input_shape}")
        return x

    def forward(self, x, training=False, rng=None) -> ForwardCache:
        x = self._check_input(x)
        if training and rng is None:
            raise ParameterError("training-mode forward needs an rng for dropout")
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, training, rng)
            caches.append(cache)
        return ForwardCache(x, caches, training, self._version)

    def backward(self, cache: ForwardCache, onehot, input_grad=False):
        """Gradients of mean cross-entropy for every parameter, in
        :meth:`parameters` order. With ``input_grad`` also returns dL/dx."""
        if not cache.training:
            raise StaleCacheError("backward needs a training-mode forward cache")
        if cache.version != self._version:
            raise StaleCacheError("forward cache predates the current parameters")
        y = check_onehot(onehot)
        last = self.layers[-1]
        if not (isinstance(last, Dense) and last.activation == "softmax"):
            raise CompositionError("cross-entropy backward expects a final softmax Dense layer")
        n = y.shape[0]
        dz = (cache.output - y) / n
        per_layer = [None] * len(self.layers)
        dx, per_layer[-1] = last.backward_from_logits(dz, cache.layer_caches[-1], True)
        for i in range(len(self.layers) - 2, -1, -1):
            need = input_grad or i > 0
            dx, per_layer[i] = self.layers[i].backward(dx, cache.layer_caches[i], need)
        grads = [g[name] for layer, g in zip(self.layers, per_layer) for name in layer.params]
        return (grads, dx) if input_grad else grads

    def predict(self, x, batch_size: int = 64) -> np.ndarray:
        """Class probabilities with dropout inactive; consumes no randomness."""
        x = self._check_input(x)
        out = [self.forward(x[s:s + batch_size], training=False).output
               for s in range(0, x.shape[0], batch_size)]
        if not out:
            return np.zeros((0,) + self.output_shape)
        return np.concatenate(out, axis=0)

    def summary(self) -> str:
        lines = []
        shape = self.input_shape
        lines.append(f"input {shape}")
        for i, layer in enumerate(self.layers):
            n = sum(p.size for p in layer.params.values())
            lines.append(f"{i:2d} {layer!r:<70} -> {layer.output_shape}  params={n}")
        lines.append(f"total params {self.count_params()}")
        return "\n".join(lines)
