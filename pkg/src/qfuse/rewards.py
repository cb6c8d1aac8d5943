"""Reward functions for the connection search.

Two evaluator families: a deterministic surrogate that scores an expanded
graph by which typed connections it contains (cheap, exactly
reproducible — used for tests and demos), and a training evaluator that
instantiates the expanded graph as a network, trains it briefly and
returns final-epoch validation accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import CONCATENATE, LayerGraph
from .nn.network import Network
from .nn.train import TrainConfig, train
from .seeding import derive_seed


class InstantiationError(Exception):
    """Expanded graph could not be built or trained."""


@dataclass(frozen=True)
class SurrogateSpec:
    """Score = base + bonus per target connection present - penalty per
    inserted connection that is not a target, clamped to [0, 1].

    Targets are (src, dst, ctype) triples matched against the graph's
    inserted-connection log, so the connection type matters.
    """

    base: float = 0.5
    bonus: float = 0.15
    penalty: float = 0.15
    targets: frozenset = field(default_factory=lambda: frozenset({
        (1, 3, CONCATENATE), (3, 5, CONCATENATE)}))


def surrogate_reward(graph: LayerGraph, spec: SurrogateSpec = SurrogateSpec()) -> float:
    inserted = {(s, d, c) for (s, d, c, _via) in graph.ncs_edges}
    hits = len(inserted & set(spec.targets))
    misses = len(inserted) - hits
    score = spec.base + spec.bonus * hits - spec.penalty * misses
    return float(min(1.0, max(0.0, score)))


def make_surrogate_evaluator(spec: SurrogateSpec = SurrogateSpec()):
    def evaluate(graph: LayerGraph, iteration: int) -> float:
        return surrogate_reward(graph, spec)
    return evaluate


def stratified_split(y: np.ndarray, fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Indices for a (1-fraction)/fraction train/held-out split with the
    same class mix on both sides (held-out count rounded per class)."""
    y = np.asarray(y)
    train_idx, held_idx = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        n_held = int(round(fraction * len(idx)))
        n_held = min(max(n_held, 1), len(idx) - 1) if len(idx) > 1 else 0
        held_idx.extend(idx[:n_held])
        train_idx.extend(idx[n_held:])
    return np.sort(np.array(train_idx, int)), np.sort(np.array(held_idx, int))


def make_train_evaluator(x: np.ndarray, y: np.ndarray, *,
                         eval_epochs: int = 10, batch_size: int = 32,
                         learning_rate: float = 0.001,
                         val_fraction: float = 0.1, base_seed: int = 0):
    """Evaluator that trains each candidate briefly from scratch.

    The train/validation split is fixed once here; each candidate gets a
    parameter seed derived from (base_seed, iteration) so re-running the
    search reproduces the same rewards.  Returns final-epoch validation
    accuracy.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    split_rng = np.random.default_rng(derive_seed(base_seed, "eval-split"))
    tr, va = stratified_split(y, val_fraction, split_rng)
    x_tr, y_tr, x_va, y_va = x[tr], y[tr], x[va], y[va]
    # scalar-standardize with training-split statistics: removes the
    # global offset that stalls training on entropy-like features while
    # keeping the relative magnitudes of entries intact
    mu = float(x_tr.mean())
    sd = float(x_tr.std())
    sd = sd if sd > 1e-9 else 1.0
    x_tr = (x_tr - mu) / sd
    x_va = (x_va - mu) / sd

    def evaluate(graph: LayerGraph, iteration: int) -> float:
        seed = derive_seed(base_seed, f"eval-iter-{iteration}")
        try:
            net = Network(graph, seed=seed)
            cfg = TrainConfig(learning_rate=learning_rate,
                              batch_size=batch_size, epochs=eval_epochs,
                              seed=seed)
            history = train(net, x_tr, y_tr, cfg, val=(x_va, y_va))
        except Exception as exc:  # noqa: BLE001 - surfaced with context
            raise InstantiationError(
                f"candidate at iteration {iteration} failed: {exc}") from exc
        return float(history["val_acc"][-1])

    return evaluate
