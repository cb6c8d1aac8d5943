"""Tabular Q-learning over candidate connections of a layer graph.

States are graph nodes, actions are candidate connections leaving the
current node.  An episode walks forward from the input node; one uniform
draw a_k per step decides both explore-vs-exploit (a_k > epsilon exploits
the argmax Q) and the connection type (Concatenate if a_k > 0.5, else
Residual).  The final connection's Q entry is updated toward the episode
reward; earlier entries back up through the usual Bellman rule with zero
intermediate reward.  A FIFO replay buffer re-applies stored episodes
with their stored rewards.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import (CONCATENATE, RESIDUAL, GraphError, LayerGraph,
                    apply_episode_connections, candidate_connections,
                    topo_order)
from .rewards import InstantiationError

Q_INIT = 0.5

# (epsilon, iterations) stages; past the last stage epsilon stays at its
# final value
DEFAULT_EPSILON_STAGES = (
    (1.0, 100), (0.9, 7), (0.8, 7), (0.7, 7), (0.6, 10), (0.5, 10),
    (0.4, 10), (0.3, 10), (0.2, 10), (0.1, 12),
)


class SearchError(Exception):
    pass


class SearchConfigError(SearchError, ValueError):
    """Bad constructor argument; ValueError so config loaders can wrap it."""


class EmptyCandidateSetError(SearchError):
    pass


class NoValidActionError(SearchError):
    pass


class RewardOutOfRangeError(SearchError):
    pass


class UnknownPairError(SearchError):
    pass


class SearchAbortedError(SearchError):
    """Evaluator failure mid-search; carries the partial iteration log."""

    def __init__(self, message: str, records: list[dict]):
        super().__init__(message)
        self.records = records


@dataclass(frozen=True)
class EpsilonSchedule:
    stages: tuple[tuple[float, int], ...] = DEFAULT_EPSILON_STAGES

    def __post_init__(self):
        if not self.stages:
            raise SearchConfigError("epsilon schedule needs at least one stage")
        for eps, count in self.stages:
            if not (0.0 <= eps <= 1.0) or count < 1:
                raise SearchConfigError(f"bad schedule stage ({eps}, {count})")

    def at(self, iteration: int) -> float:
        if iteration < 0:
            raise SearchError("iteration must be >= 0")
        seen = 0
        for eps, count in self.stages:
            seen += count
            if iteration < seen:
                return eps
        return self.stages[-1][0]

    @property
    def total(self) -> int:
        return sum(c for _, c in self.stages)


@dataclass
class Episode:
    """states = visited source nodes (S), targets = chosen connection
    targets (U), ctypes = chosen connection types (Y).  len(states) ==
    len(targets) + 1 unless the walk ended on the fusion node."""

    states: list[int]
    targets: list[int]
    ctypes: list[str]
    reward: float | None = None

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.states, self.targets))

    def connections(self) -> list[tuple[int, int, str]]:
        return [(s, t, c) for (s, t), c in zip(self.pairs(), self.ctypes)]


@dataclass(frozen=True)
class SearchConfig:
    iterations: int = 200
    k_max: int = 3
    alpha: float = 0.01
    gamma: float = 1.0
    schedule: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    replay_capacity: int = 50
    replay_samples: int = 4
    seed: int = 0
    # independent uniform draw for the connection type instead of reusing a_k
    decoupled_type_draw: bool = False

    def __post_init__(self):
        if self.iterations < 0 or self.k_max < 0:
            raise SearchConfigError("iterations and k_max must be >= 0")
        if not (0.0 < self.alpha <= 1.0):
            raise SearchConfigError("alpha must be in (0, 1]")
        if not (0.0 <= self.gamma <= 1.0):
            raise SearchConfigError("gamma must be in [0, 1]")
        if self.replay_capacity < 1 or self.replay_samples < 0:
            raise SearchConfigError("replay_capacity >= 1, replay_samples >= 0")


def init_qtable(graph: LayerGraph) -> dict[tuple[int, int], float]:
    """One entry per candidate connection, all at Q_INIT."""
    cands = candidate_connections(graph)
    if not cands:
        raise EmptyCandidateSetError("graph has no candidate connections")
    return {pair: Q_INIT for pair in cands}


def _targets_by_source(qtable) -> dict[int, list[int]]:
    by_src: dict[int, list[int]] = {}
    for (s, d) in qtable:
        by_src.setdefault(s, []).append(d)
    for s in by_src:
        by_src[s].sort()
    return by_src


def greedy_target(qtable, by_src, src):
    """Argmax_a Q(src, a), ties broken by the lowest target id."""
    best, best_q = None, -np.inf
    for d in by_src[src]:
        q = qtable[(src, d)]
        if q > best_q:
            best, best_q = d, q
    return best


def sample_episode(qtable, graph: LayerGraph, epsilon: float, k_max: int,
                   rng, decoupled_type_draw: bool = False) -> Episode:
    """Roll out one episode from the input node.

    Ends when the fusion node is chosen (it is not appended to states),
    when the current node has no candidate targets, or after k_max steps.
    """
    by_src = _targets_by_source(qtable)
    # the input node is the unique in-degree-0 node = first in topo order
    start = topo_order(graph)[0]
    states, targets, ctypes = [start], [], []
    for k in range(k_max):
        src = states[-1]
        options = by_src.get(src, [])
        if not options:
            if k == 0:
                raise NoValidActionError(f"node {src} has no candidate targets")
            break
        a = rng.random()
        type_draw = rng.random() if decoupled_type_draw else a
        if a > epsilon:
            choice = greedy_target(qtable, by_src, src)
        else:
            choice = options[rng.integers(len(options))]
        targets.append(choice)
        ctypes.append(CONCATENATE if type_draw > 0.5 else RESIDUAL)
        if choice == graph.fusion_index:
            break
        states.append(choice)
    return Episode(states, targets, ctypes)


def update_q(qtable, episode: Episode, alpha: float, gamma: float,
             by_src=None) -> None:
    """Apply the episode's updates in place, last connection first.

    Final pair: Q <- (1-alpha) Q + alpha * reward.  Earlier pairs:
    Q <- (1-alpha) Q + alpha * (0 + gamma * max_a Q(next_state, a)).
    """
    if episode.reward is None:
        raise RewardOutOfRangeError("episode has no reward")
    if not (0.0 <= episode.reward <= 1.0):
        raise RewardOutOfRangeError(f"reward {episode.reward} outside [0, 1]")
    pairs = episode.pairs()
    for pair in pairs:
        if pair not in qtable:
            raise UnknownPairError(f"pair {pair} not in the Q table")
    if by_src is None:
        by_src = _targets_by_source(qtable)
    for i in range(len(pairs) - 1, -1, -1):
        pair = pairs[i]
        if i == len(pairs) - 1:
            target = episode.reward
        else:
            nxt = episode.targets[i]
            best = max(qtable[(nxt, d)] for d in by_src[nxt])
            target = gamma * best  # intermediate reward is zero
        qtable[pair] = (1.0 - alpha) * qtable[pair] + alpha * target


class ReplayBuffer:
    """FIFO buffer of finished episodes; uniform sampling without
    replacement (all of them when fewer than requested), episodes
    replayed with their stored rewards."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.episodes: list[Episode] = []

    def __len__(self):
        return len(self.episodes)

    def record(self, episode: Episode) -> None:
        self.episodes.append(episode)
        if len(self.episodes) > self.capacity:
            self.episodes.pop(0)

    def sample(self, n: int, rng) -> list[Episode]:
        if not self.episodes or n <= 0:
            return []
        k = min(n, len(self.episodes))
        idx = rng.choice(len(self.episodes), size=k, replace=False)
        return [self.episodes[i] for i in idx]


@dataclass
class SearchResult:
    qtable: dict[tuple[int, int], float]
    best_episode: Episode | None
    best_graph: LayerGraph | None
    records: list[dict]


def run_search(graph: LayerGraph, evaluator, config: SearchConfig) -> SearchResult:
    """Run the connection search.

    ``evaluator(expanded_graph, iteration) -> float in [0, 1]``.  Returns
    the final Q table, the best episode ever sampled (ties keep the
    earliest), the corresponding expanded graph and one log record per
    iteration.  With 0 iterations the Q table is returned untouched.
    """
    qtable = init_qtable(graph)
    rng = np.random.default_rng(config.seed)
    buffer = ReplayBuffer(config.replay_capacity)
    records: list[dict] = []
    best: Episode | None = None
    best_graph = None
    for it in range(config.iterations):
        eps = config.schedule.at(it)
        t0 = time.perf_counter()
        episode = sample_episode(qtable, graph, eps, config.k_max, rng,
                                 config.decoupled_type_draw)
        try:
            expanded = apply_episode_connections(graph, episode.connections())
        except GraphError:
            # e.g. a widening Concat that breaks a downstream Add: the
            # candidate is unfit, not the search — score it 0 so the Q
            # table learns to avoid it
            expanded = None
        if expanded is None:
            reward = 0.0
        else:
            try:
                reward = float(evaluator(expanded, it))
            except InstantiationError:
                reward = 0.0  # candidate failed to build/train, same story
            except Exception as exc:
                raise SearchAbortedError(
                    f"evaluator failed at iteration {it}: {exc}", records) from exc
        if not (0.0 <= reward <= 1.0):
            raise RewardOutOfRangeError(
                f"evaluator returned {reward} outside [0, 1] at iteration {it}")
        episode.reward = reward
        if episode.targets:
            update_q(qtable, episode, config.alpha, config.gamma)
            buffer.record(episode)
            for rep in buffer.sample(config.replay_samples, rng):
                update_q(qtable, rep, config.alpha, config.gamma)
        if expanded is not None and (best is None or reward > (best.reward or -1.0)):
            best = episode
            best_graph = expanded
        records.append({
            "iteration": it,
            "epsilon": eps,
            "states": list(episode.states),
            "targets": list(episode.targets),
            "ctypes": list(episode.ctypes),
            "reward": reward,
            "wall_ms": (time.perf_counter() - t0) * 1000.0,
        })
    return SearchResult(qtable, best, best_graph, records)
