"""SGD, Adam and AdaDelta with in-place parameter updates."""

from __future__ import annotations

import numpy as np

from ..errors import NumericFailureError, ParameterError


class Optimizer:
    kind = "optimizer"
    defaults: dict = {}

    def __init__(self, **hyper):
        unknown = set(hyper) - set(self.defaults)
        if unknown:
            raise ParameterError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        self.hyper = {**self.defaults, **{k: float(v) for k, v in hyper.items()}}
        self.slots: list[dict] = []
        self.iterations = 0

    def step(self, params, grads):
        """Update every array in ``params`` in place from the matching gradient."""
        if len(params) != len(grads):
            raise ParameterError("params and grads differ in length")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NumericFailureError(f"{self.kind}: non-finite gradient")
        if not self.slots:
            self.slots = [self._init_slot(p) for p in params]
        for p, g in zip(params, grads):
            if p.shape != g.shape:
                raise ParameterError(f"parameter {p.shape} and gradient {g.shape} differ in shape")
        self.iterations += 1
        for p, g, slot in zip(params, grads, self.slots):
            self._update(p, g, slot)

    def _init_slot(self, p) -> dict:
        return {}

    def _update(self, p, g, slot):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(f'{k}={v}' for k, v in self.hyper.items())})"


class SGD(Optimizer):
    kind = "sgd"
    defaults = {"lr": 0.01}

    def _update(self, p, g, slot):
        p -= self.hyper["lr"] * g


class Adam(Optimizer):
    kind = "adam"
    defaults = {"lr": 1e-3, "beta_1": 0.9, "beta_2": 0.999, "epsilon": 1e-8}

    def _init_slot(self, p):
        return {"m": np.zeros_like(p), "v": np.zeros_like(p)}

    def _update(self, p, g, slot):
        h = self.hyper
        t = self.iterations
        slot["m"] *= h["beta_1"]
        slot["m"] += (1 - h["beta_1"]) * g
        slot["v"] *= h["beta_2"]
        slot["v"] += (1 - h["beta_2"]) * g * g
        m_hat = slot["m"] / (1 - h["beta_1"] ** t)
        v_hat = slot["v"] / (1 - h["beta_2"] ** t)
        p -= h["lr"] * m_hat / (np.sqrt(v_hat) + h["epsilon"])


class AdaDelta(Optimizer):
    kind = "adadelta"
    defaults = {"lr": 1.0, "rho": 0.95, "epsilon": 1e-6}

    def _init_slot(self, p):
        return {"acc_grad": np.zeros_like(p), "acc_delta": np.zeros_like(p)}

    def _update(self, p, g, slot):
        h = self.hyper
        rho, eps = h["rho"], h["epsilon"]
        slot["acc_grad"] *= rho
        slot["acc_grad"] += (1 - rho) * g * g
        delta = np.sqrt(slot["acc_delta"] + eps) / np.sqrt(slot["acc_grad"] + eps) * g
        slot["acc_delta"] *= rho
        slot["acc_delta"] += (1 - rho) * delta * delta
        p -= h["lr"] * delta


OPTIMIZERS = {cls.kind: cls for cls in (SGD, Adam, AdaDelta)}


def make_optimizer(kind: str, **hyper) -> Optimizer:
    try:
        return OPTIMIZERS[kind](**hyper)
    except KeyError:
        raise ParameterError(f"unknown optimizer {kind!r}; choose from {sorted(OPTIMIZERS)}") from None


def optimizer_step(model, optimizer: Optimizer, grads) -> None:
    """One update followed by the model's max-norm projections."""
    optimizer.step(model.parameters(), grads)
    model.apply_constraints()
