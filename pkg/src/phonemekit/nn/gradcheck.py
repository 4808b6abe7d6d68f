"""Central finite-difference verification of backpropagated gradients.

Relative error for a tensor is ``||a - n|| / (||a|| + ||n||)`` over the
checked entries (0 when both are zero). Dropout masks are frozen by
re-seeding the generator for every evaluation. ReLU kinks and pooling ties
are avoided by nudging the input until every pre-activation and every
pooling gap sits at least ``margin`` away from a non-differentiable point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .layers import Layer
from .losses import cross_entropy
from .model import Model


def relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    return 0.0 if denom == 0.0 else float(np.linalg.norm(a - n) / denom)


@dataclass
class GradCheckResult:
    errors: dict = field(default_factory=dict)
    nudges: int = 0
    margin: float = math.inf

    @property
    def max_rel_error(self) -> float:
        return max(self.errors.values(), default=0.0)


def _entries(size, max_entries, rng):
    if max_entries is None or size <= max_entries:
        return np.arange(size)
    return np.sort(rng.choice(size, size=max_entries, replace=False))


def _numeric(f, arr, idx, eps):
    flat = arr.reshape(-1)
    out = np.empty(idx.size)
    for k, i in enumerate(idx):
        old = flat[i]
        flat[i] = old + eps
        plus = f()
        flat[i] = old - eps
        minus = f()
        flat[i] = old
        out[k] = (plus - minus) / (2.0 * eps)
    return out


def _nudge_until_smooth(margin_of, x, margin, rng, max_nudges):
    nudges = 0
    m = margin_of(x)
    while m < margin and nudges < max_nudges:
        x = x + rng.normal(scale=10 * margin, size=x.shape)
        nudges += 1
        m = margin_of(x)
    return x, nudges, m


def gradient_check(model: Model, x, onehot, eps: float = 1e-5, seed: int = 0,
                   check_input: bool = False, max_entries: Optional[int] = None,
                   margin: Optional[float] = None, max_nudges: int = 20) -> GradCheckResult:
    """Compare :meth:`Model.backward` against central differences of the mean
    cross-entropy for every parameter tensor (and optionally the input)."""
    rng = np.random.default_rng(seed + 1)
    margin = 10 * eps if margin is None else margin
    x = np.array(x, dtype=np.float64)

    def model_margin(xx):
        c = model.forward(xx, training=True, rng=np.random.default_rng(seed))
        return min((l.kink_margin(lc) for l, lc in zip(model.layers, c.layer_caches)), default=math.inf)

    x, nudges, m = _nudge_until_smooth(model_margin, x, margin, rng, max_nudges)

    def loss():
        return cross_entropy(model.forward(x, training=True, rng=np.random.default_rng(seed)).output, onehot)

    cache = model.forward(x, training=True, rng=np.random.default_rng(seed))
    grads, dx = model.backward(cache, onehot, input_grad=True)
    result = GradCheckResult(nudges=nudges, margin=m)
    for (name, p), g in zip(model.named_parameters(), grads):
        idx = _entries(p.size, max_entries, rng)
        result.errors[name] = relative_error(g.reshape(-1)[idx], _numeric(loss, p, idx, eps))
    if check_input:
        idx = _entries(x.size, max_entries, rng)
        result.errors["input"] = relative_error(dx.reshape(-1)[idx], _numeric(loss, x, idx, eps))
    return result


def gradient_check_layer(layer: Layer, x, eps: float = 1e-5, seed: int = 0,
                         max_entries: Optional[int] = None, margin: Optional[float] = None,
                         max_nudges: int = 20) -> GradCheckResult:
    """Check one built layer in isolation under the scalar loss ``sum(y * R)``
    with a fixed random projection ``R``."""
    rng = np.random.default_rng(seed + 1)
    margin = 10 * eps if margin is None else margin
    x = np.array(x, dtype=np.float64)

    def fwd(xx):
        return layer.forward(xx, True, np.random.default_rng(seed))

    x, nudges, m = _nudge_until_smooth(lambda xx: layer.kink_margin(fwd(xx)[1]), x, margin, rng, max_nudges)
    y, cache = fwd(x)
    R = rng.standard_normal(y.shape)

    def loss():
        return float((fwd(x)[0] * R).sum())

    dx, grads = layer.backward(R, cache, True)
    result = GradCheckResult(nudges=nudges, margin=m)
    for name, p in layer.params.items():
        idx = _entries(p.size, max_entries, rng)
        result.errors[f"{layer.kind}.{name}"] = relative_error(grads[name].reshape(-1)[idx],
                                                               _numeric(loss, p, idx, eps))
    idx = _entries(x.size, max_entries, rng)
    result.errors["input"] = relative_error(dx.reshape(-1)[idx], _numeric(loss, x, idx, eps))
    return result
