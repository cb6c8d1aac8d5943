"""Adam + minibatch cross-entropy training for graph-backed models.

A trainable model exposes forward(x, train, rng) -> (logits, cache),
backward(dlogits, cache) -> (grads, _), param_arrays() and
grad_arrays(grads).  Inputs may be a single array or a dict of stream
arrays sharing the batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import softmax_cross_entropy
from .network import NonFiniteLossError


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    # optional step decay: lr * factor^(epoch // every)
    lr_decay_factor: float | None = None
    lr_decay_every: int = 5
    # restore the parameters of the best validation epoch at the end
    # (needs val data; ties keep the earliest epoch)
    keep_best: bool = False


class Adam:
    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def _take(x, idx):
    if isinstance(x, dict):
        return {k: v[idx] for k, v in x.items()}
    return x[idx]


def _n_rows(x):
    return next(iter(x.values())).shape[0] if isinstance(x, dict) else x.shape[0]


def predict_logits(model, x):
    logits, _ = model.forward(x, train=False)
    return logits


def accuracy(model, x, y):
    return float((predict_logits(model, x).argmax(axis=1) == y).mean())


def train(model, x, y, cfg: TrainConfig, val=None):
    """Returns a history dict with per-epoch train_loss/train_acc lists
    (plus val_acc when a (x_val, y_val) pair is given)."""
    y = np.asarray(y)
    rng = np.random.default_rng(cfg.seed)
    params = model.param_arrays()
    opt = Adam(params, lr=cfg.learning_rate)
    n = _n_rows(x)
    history = {"train_loss": [], "train_acc": [], "val_acc": []}
    best_va, best_params = -1.0, None
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate
        if cfg.lr_decay_factor is not None:
            lr *= cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)
        idx = rng.permutation(n)
        losses, hits = [], 0
        for start in range(0, n, cfg.batch_size):
            sel = idx[start:start + cfg.batch_size]
            xb, yb = _take(x, sel), y[sel]
            logits, cache = model.forward(xb, train=True, rng=rng)
            loss, dlogits = softmax_cross_entropy(logits, yb)
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite loss {loss!r} at epoch {epoch}, batch offset {start}")
            grads, _ = model.backward(dlogits, cache)
            opt.step(model.grad_arrays(grads), lr=lr)
            losses.append(loss * len(sel))
            hits += int((logits.argmax(axis=1) == yb).sum())
        history["train_loss"].append(float(np.sum(losses) / n))
        history["train_acc"].append(hits / n)
        if val is not None:
            va = accuracy(model, val[0], val[1])
            history["val_acc"].append(va)
            if cfg.keep_best and va > best_va:
                best_va = va
                best_params = [p.copy() for p in params]
    if cfg.keep_best and best_params is not None:
        for p, b in zip(params, best_params):
            p[...] = b
    return history
