"""Layer kinds of the phoneme CNN, NHWC layout, float64 throughout.

Every layer exposes ``build(input_shape, rng) -> output_shape``,
``forward(x, training, rng) -> (y, cache)`` and
``backward(dy, cache, need_dx) -> (dx, grads)``; shapes exclude the batch
axis.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import CompositionError, ParameterError

ACTIVATIONS = ("relu", "softmax", "linear")
_IM2COL_MAX_CHANNELS = 8


def relu(x):
    return np.maximum(x, 0.0)


def softmax(logits):
    """Row-wise softmax, shifted by the row max for stability."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def apply_max_norm(weights, bound: float) -> np.ndarray:
    """Rescale every column whose L2 norm exceeds ``bound`` down to ``bound``."""
    if bound <= 0:
        raise ParameterError("max-norm bound must be positive")
    w = np.asarray(weights, dtype=np.float64)
    norms = np.sqrt((w * w).sum(axis=0))
    scale = np.where(norms > bound, bound / np.where(norms > 0, norms, 1.0), 1.0)
    return w * scale


def _same_padding(size, k, stride):
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, total // 2, total - total // 2


class Layer:
    kind = "layer"

    def __init__(self):
        self.params = {}
        self.input_shape = None
        self.output_shape = None

    def build(self, input_shape, rng):
        self.input_shape = tuple(input_shape)
        self.output_shape = self.input_shape
        return self.output_shape

    def forward(self, x, training, rng):
        raise NotImplementedError

    def backward(self, dy, cache, need_dx=True):
        raise NotImplementedError

    def config(self) -> dict:
        return {"kind": self.kind}

    def kink_margin(self, cache) -> float:
        """Distance of the cached forward pass from a non-differentiable point."""
        return math.inf

    def constrain(self):
        pass

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.config().items() if k != "kind")
        return f"{type(self).__name__}({args})"


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, n_filters, kernel_size=(3, 3), strides=(1, 1), activation="relu", padding="same"):
        super().__init__()
        if padding != "same":
            raise ParameterError("only 'same' padding is supported")
        if activation not in ("relu", "linear"):
            raise ParameterError(f"unsupported conv activation {activation!r}")
        self.n_filters = int(n_filters)
        self.kernel_size = tuple(int(k) for k in kernel_size)
        self.strides = tuple(int(s) for s in strides)
        if self.n_filters < 1 or min(self.kernel_size + self.strides) < 1:
            raise ParameterError("filters, kernel size and strides must be >= 1")
        self.activation = activation
        self.padding = padding

    def build(self, input_shape, rng):
        if len(input_shape) != 3:
            raise CompositionError(f"conv2d expects (H, W, C) input, got {tuple(input_shape)}")
        h, w, c = input_shape
        kh, kw = self.kernel_size
        oh, *self._pad_h = _same_padding(h, kh, self.strides[0])
        ow, *self._pad_w = _same_padding(w, kw, self.strides[1])
        fan_in = kh * kw * c
        limit = math.sqrt(6.0 / fan_in)  # He-uniform
        self.params = {
            "W": rng.uniform(-limit, limit, size=(kh, kw, c, self.n_filters)),
            "b": np.zeros(self.n_filters),
        }
        self.input_shape = tuple(input_shape)
        self.output_shape = (oh, ow, self.n_filters)
        return self.output_shape

    def _slices(self, i, j):
        oh, ow, _ = self.output_shape
        sh, sw = self.strides
        return (slice(None), slice(i, i + sh * (oh - 1) + 1, sh), slice(j, j + sw * (ow - 1) + 1, sw))

    def forward(self, x, training, rng):
        W, b = self.params["W"], self.params["b"]
        xp = np.pad(x, ((0, 0), tuple(self._pad_h), tuple(self._pad_w), (0, 0)))
        n = x.shape[0]
        z = np.empty((n,) + self.output_shape)
        z[...] = b
        kh, kw = self.kernel_size
        if x.shape[-1] < _IM2COL_MAX_CHANNELS:
            # few input channels: one GEMM over gathered patches beats kh*kw thin ones
            oh, ow = self.output_shape[:2]
            sh, sw = self.strides
            patches = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, : sh * (oh - 1) + 1: sh, : sw * (ow - 1) + 1: sw]
            cols = patches.transpose(0, 1, 2, 4, 5, 3).reshape(-1, W[..., 0].size)
            z += (cols @ W.reshape(-1, self.n_filters)).reshape(z.shape)
        else:
            for i in range(kh):
                for j in range(kw):
                    z += xp[self._slices(i, j)] @ W[i, j]
        y = relu(z) if self.activation == "relu" else z
        return y, (xp, z)

    def backward(self, dy, cache, need_dx=True):
        xp, z = cache
        W = self.params["W"]
        dz = dy * (z > 0) if self.activation == "relu" else dy
        n = dz.shape[0]
        c = xp.shape[-1]
        dz2 = dz.reshape(-1, self.n_filters)
        dW = np.empty_like(W)
        dxp = np.zeros_like(xp) if need_dx else None
        kh, kw = self.kernel_size
        for i in range(kh):
            for j in range(kw):
                sl = self._slices(i, j)
                cols = np.ascontiguousarray(xp[sl]).reshape(-1, c)
                dW[i, j] = cols.T @ dz2
                if need_dx:
                    dxp[sl] += (dz2 @ W[i, j].T).reshape(n, *self.output_shape[:2], c)
        dx = None
        if need_dx:
            h, w, _ = self.input_shape
            dx = dxp[:, self._pad_h[0]:self._pad_h[0] + h, self._pad_w[0]:self._pad_w[0] + w]
        return dx, {"W": dW, "b": dz2.sum(axis=0)}

    def kink_margin(self, cache):
        return float(np.abs(cache[1]).min()) if self.activation == "relu" else math.inf

    def config(self):
        return {"kind": self.kind, "n_filters": self.n_filters, "kernel_size": list(self.kernel_size),
                "strides": list(self.strides), "activation": self.activation, "padding": self.padding}


class MaxPool2D(Layer):
    """Non-overlapping max pooling in ceil mode: partial edge windows are
    padded with -inf, so each output dim is ``ceil(in / pool)``."""

    kind = "maxpool2d"

    def __init__(self, pool_size=(3, 3)):
        super().__init__()
        self.pool_size = tuple(int(p) for p in pool_size)
        if min(self.pool_size) < 1:
            raise ParameterError("pool size must be >= 1")

    def build(self, input_shape, rng):
        if len(input_shape) != 3:
            raise CompositionError(f"maxpool2d expects (H, W, C) input, got {tuple(input_shape)}")
        h, w, c = input_shape
        ph, pw = self.pool_size
        self.input_shape = tuple(input_shape)
        self.output_shape = (math.ceil(h / ph), math.ceil(w / pw), c)
        return self.output_shape

    def _windows(self, x):
        n = x.shape[0]
        h, w, c = self.input_shape
        oh, ow, _ = self.output_shape
        ph, pw = self.pool_size
        xp = np.pad(x, ((0, 0), (0, oh * ph - h), (0, ow * pw - w), (0, 0)), constant_values=-np.inf)
        return xp.reshape(n, oh, ph, ow, pw, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, oh, ow, c, ph * pw)

    def forward(self, x, training, rng):
        win = self._windows(x)
        idx = win.argmax(axis=-1)
        y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return y, (idx, x)

    def backward(self, dy, cache, need_dx=True):
        idx = cache[0]
        n = dy.shape[0]
        h, w, c = self.input_shape
        oh, ow, _ = self.output_shape
        ph, pw = self.pool_size
        dwin = np.zeros((n, oh, ow, c, ph * pw))
        np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
        dx = dwin.reshape(n, oh, ow, c, ph, pw).transpose(0, 1, 4, 2, 5, 3).reshape(n, oh * ph, ow * pw, c)
        return dx[:, :h, :w], {}

    def kink_margin(self, cache):
        win = self._windows(cache[1])
        if win.shape[-1] < 2:
            return math.inf
        top2 = np.sort(win, axis=-1)[..., -2:]
        gap = top2[..., 1] - top2[..., 0]
        # ties among relu-dead zeros carry zero gradient either way
        ok = np.isfinite(gap) & ~((top2[..., 1] == 0) & (top2[..., 0] == 0))
        return float(gap[ok].min()) if ok.any() else math.inf

    def config(self):
        return {"kind": self.kind, "pool_size": list(self.pool_size)}


class Dropout(Layer):
    """Inverted dropout; identity outside training."""

    kind = "dropout"

    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ParameterError("dropout rate must lie in [0, 1)")
        self.rate = float(rate)

    def forward(self, x, training, rng):
        if not training or self.rate == 0.0:
            return x, None
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * mask, mask

    def backward(self, dy, cache, need_dx=True):
        return (dy if cache is None else dy * cache), {}

    def config(self):
        return {"kind": self.kind, "rate": self.rate}


class Flatten(Layer):
    kind = "flatten"

    def build(self, input_shape, rng):
        self.input_shape = tuple(input_shape)
        self.output_shape = (int(np.prod(input_shape)),)
        return self.output_shape

    def forward(self, x, training, rng):
        return x.reshape(x.shape[0], -1), None

    def backward(self, dy, cache, need_dx=True):
        return dy.reshape((dy.shape[0],) + self.input_shape), {}


class Dense(Layer):
    kind = "dense"

    def __init__(self, units, activation="relu", max_norm=None):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {activation!r}")
        self.units = int(units)
        if self.units < 1:
            raise ParameterError("dense layer needs at least one unit")
        if max_norm is not None and max_norm <= 0:
            raise ParameterError("max_norm must be positive")
        self.activation = activation
        self.max_norm = None if max_norm is None else float(max_norm)

    def build(self, input_shape, rng):
        if len(input_shape) != 1:
            raise CompositionError(f"dense expects flat input, got {tuple(input_shape)}")
        fan_in = input_shape[0]
        if self.activation == "relu":
            limit = math.sqrt(6.0 / fan_in)
        else:
            limit = math.sqrt(6.0 / (fan_in + self.units))  # Glorot-uniform
        self.params = {
            "W": rng.uniform(-limit, limit, size=(fan_in, self.units)),
            "b": np.zeros(self.units),
        }
        self.constrain()
        self.input_shape = tuple(input_shape)
        self.output_shape = (self.units,)
        return self.output_shape

    def forward(self, x, training, rng):
        z = x @ self.params["W"] + self.params["b"]
        if self.activation == "relu":
            y = relu(z)
        elif self.activation == "softmax":
            y = softmax(z)
        else:
            y = z
        return y, (x, z, y)

    def backward(self, dy, cache, need_dx=True):
        """Gradient from ``dy`` = dL/d(output); softmax uses its full Jacobian."""
        x, z, y = cache
        if self.activation == "relu":
            dz = dy * (z > 0)
        elif self.activation == "softmax":
            dz = y * (dy - (dy * y).sum(axis=1, keepdims=True))
        else:
            dz = dy
        return self.backward_from_logits(dz, cache, need_dx)

    def backward_from_logits(self, dz, cache, need_dx=True):
        x = cache[0]
        dx = dz @ self.params["W"].T if need_dx else None
        return dx, {"W": x.T @ dz, "b": dz.sum(axis=0)}

    def kink_margin(self, cache):
        return float(np.abs(cache[1]).min()) if self.activation == "relu" else math.inf

    def constrain(self):
        if self.max_norm is not None and "W" in self.params:
            self.params["W"][...] = apply_max_norm(self.params["W"], self.max_norm)

    def config(self):
        return {"kind": self.kind, "units": self.units, "activation": self.activation,
                "max_norm": self.max_norm}


LAYER_KINDS = {cls.kind: cls for cls in (Conv2D, MaxPool2D, Dropout, Flatten, Dense)}


def layer_from_config(cfg: dict) -> Layer:
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if kind not in LAYER_KINDS:
        raise ParameterError(f"unknown layer kind {kind!r}")
    return LAYER_KINDS[kind](**cfg)
