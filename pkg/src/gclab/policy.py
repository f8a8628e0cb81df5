"""Policy extraction from learned value tables.

Greedy extraction takes the argmax action; rejection sampling draws N
actions from an estimated behavior policy and keeps the one the value
table ranks highest. Ties always resolve to the lowest action index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import TrajectoryDataset
from .env import ConfigError, GraphEnv
from .learners import ValueTable


@dataclass
class BehaviorPolicy:
    """Per-state action frequencies with add-one smoothing.

    Unvisited states fall back to the uniform distribution automatically
    (all-zero counts smooth to 1/num_actions each).
    """

    counts: np.ndarray  # (S, A) visit counts

    @property
    def probs(self) -> np.ndarray:
        smoothed = self.counts + 1.0
        return smoothed / smoothed.sum(axis=1, keepdims=True)


def estimate_behavior_policy(ds: TrajectoryDataset, env: GraphEnv) -> BehaviorPolicy:
    """Count (state, action) visits over every stored transition."""
    if ds.num_traj < 1:
        raise ConfigError("cannot estimate a behavior policy from an empty dataset")
    counts = np.zeros((env.num_states, env.num_actions), dtype=np.int64)
    np.add.at(counts, (ds.states[:, :-1].ravel(), ds.actions.ravel()), 1)
    return BehaviorPolicy(counts)


def greedy_action(q: ValueTable, s: int, g: int) -> int:
    """argmax_a Q(s, a, g); lowest index wins ties (numpy argmax semantics)."""
    return int(np.argmax(q.values()[s, :, g]))


def greedy_action_batch(q: ValueTable, states: np.ndarray, goals: np.ndarray) -> np.ndarray:
    return q.values()[states, :, goals].argmax(axis=1)


def rejection_sample_action(
    q: ValueTable,
    beh: BehaviorPolicy,
    s: int,
    g: int,
    N: int,
    rng: np.random.Generator,
) -> int:
    """Best-of-N behavioral sample: draw N actions from the behavior policy
    at s, return the Q-argmax among the drawn set (ties -> lowest index)."""
    if N < 1:
        raise ConfigError(f"rejection sampling needs N >= 1, got {N}")
    draws = rng.choice(beh.probs.shape[1], size=N, p=beh.probs[s])
    drawn = np.zeros(beh.probs.shape[1], dtype=bool)
    drawn[draws] = True
    scores = np.where(drawn, q.values()[s, :, g], -np.inf)
    return int(np.argmax(scores))
