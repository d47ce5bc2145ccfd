"""Optimizers and the per-epoch training loop."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from sentigen.model.network import PointerSeq2Seq
from sentigen.model.params import Parameters
from sentigen.model.vocab import TrainExample


class TrainingDiverged(RuntimeError):
    """Raised when a loss or parameter stops being finite."""


class GradientDescent:
    """Plain gradient descent on the accumulated (mean) gradients."""

    def __init__(self, params: Parameters, lr: float):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.params = params
        self.lr = lr

    def step(self) -> None:
        for p in self.params:
            p.value -= self.lr * p.grad


class Adam:
    """Adaptive-moment estimation with bias correction."""

    def __init__(self, params: Parameters, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {p.name: np.zeros_like(p.value) for p in params}
        self._v = {p.name: np.zeros_like(p.value) for p in params}

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p in self.params:
            m = self._m[p.name]
            v = self._v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad**2
            p.value -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def make_optimizer(name: str, params: Parameters, lr: float):
    if name == "sgd":
        return GradientDescent(params, lr)
    if name == "adam":
        return Adam(params, lr)
    raise ValueError(f"unknown optimizer {name!r}")


def train_epoch(
    model: PointerSeq2Seq,
    examples: Sequence[TrainExample],
    optimizer,
    batch_size: int,
    rng: np.random.Generator,
) -> float:
    """One pass over the examples in a fresh shuffled order; returns mean loss.

    Gradients are averaged within each batch; a non-finite loss aborts the
    epoch.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    order = rng.permutation(len(examples))
    losses = []
    for start in range(0, len(order), batch_size):
        batch = [examples[i] for i in order[start : start + batch_size]]
        model.params.zero_grads()
        for ex in batch:
            ctx = model.sequence_nll(ex.token_ids, ex.gold, train=True)
            if not math.isfinite(ctx.loss):
                raise TrainingDiverged(
                    f"non-finite loss {ctx.loss!r} on sentence {ex.sent_id!r}"
                )
            model.backward(ctx, scale=1.0 / len(batch))
            losses.append(ctx.loss)
        optimizer.step()
    return float(np.mean(losses)) if losses else 0.0
