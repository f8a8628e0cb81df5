"""Offline trajectory datasets and the sampling distributions learners consume.

Data collection runs a uniform-random behavior policy from uniform-random
start states. Two samplers are provided:

* triplet sampling: (i, j) uniform over ordered index pairs with i < j,
  then a subgoal index k uniform over {i, ..., j-1}. Pairs are drawn by
  direct index arithmetic (two draws, no rejection).
* hindsight goal relabeling: a four-way mixture over the current state, a
  geometrically discounted future state, a uniform future state, and a
  uniform random state from the whole dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import ConfigError, GraphEnv


@dataclass
class RelabelRatios:
    """Mixture weights (p_cur, p_geom, p_traj, p_rand) for goal relabeling.

    geom_param is the success probability of the geometric offset; the
    conventional choice 1 - gamma matches the discount horizon. Offsets the
    geometric draw pushes past the trajectory end truncate to the final state.
    """

    p_cur: float = 0.2
    p_geom: float = 0.5
    p_traj: float = 0.0
    p_rand: float = 0.3
    geom_param: float = 0.01

    def __post_init__(self):
        probs = (self.p_cur, self.p_geom, self.p_traj, self.p_rand)
        if min(probs) < 0:
            raise ConfigError(f"relabel ratios must be nonnegative, got {probs}")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigError(f"relabel ratios must sum to 1, got {sum(probs)}")
        if not (0.0 < self.geom_param < 1.0):
            raise ConfigError(f"geom_param must lie in (0, 1), got {self.geom_param}")


@dataclass
class TrajectoryDataset:
    """Fixed-horizon trajectories: states (N, T+1) and actions (N, T)."""

    states: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.int64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        if self.states.ndim != 2 or self.actions.ndim != 2:
            raise ConfigError("states and actions must be 2-D arrays")
        if self.states.shape[0] != self.actions.shape[0]:
            raise ConfigError("states and actions disagree on trajectory count")
        if self.states.shape[1] != self.actions.shape[1] + 1:
            raise ConfigError("states must hold exactly one more step than actions")

    @property
    def num_traj(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        """T: number of actions per trajectory."""
        return self.actions.shape[1]

    def validate_against(self, env: GraphEnv) -> None:
        """Check every stored transition against the environment dynamics."""
        if self.states.min() < 0 or self.states.max() >= env.num_states:
            raise ValueError("dataset contains out-of-range states")
        if self.actions.min() < 0 or self.actions.max() >= env.num_actions:
            raise ValueError("dataset contains out-of-range actions")
        predicted = env.transition[self.states[:, :-1], self.actions]
        if not np.array_equal(predicted, self.states[:, 1:]):
            raise ValueError("dataset transitions are inconsistent with the environment")


def collect_dataset(env: GraphEnv, num_traj: int, T: int, seed: int) -> TrajectoryDataset:
    """Roll out uniform-random actions from uniform-random start states."""
    if num_traj < 1 or T < 1:
        raise ConfigError("need num_traj >= 1 and T >= 1")
    rng = np.random.default_rng(seed)
    states = np.empty((num_traj, T + 1), dtype=np.int64)
    actions = rng.integers(0, env.num_actions, size=(num_traj, T), dtype=np.int64)
    states[:, 0] = rng.integers(0, env.num_states, size=num_traj, dtype=np.int64)
    for t in range(T):
        states[:, t + 1] = env.transition[states[:, t], actions[:, t]]
    ds = TrajectoryDataset(states, actions)
    ds.validate_against(env)
    return ds


def sample_index_pairs(T: int, size: int, rng: np.random.Generator, allow_equal: bool = False):
    """Uniform (i, j) over {0..T-1}^2 with i < j (or i <= j when allow_equal).

    Uses the distinct-pair trick: draw a in [0, m), b in [0, m-1), bump b past
    a, and sort. With allow_equal the pair is drawn from m = T + 1 positions
    and mapped back through j -> j - 1, which is a bijection onto {i <= j}.
    """
    m = T + 1 if allow_equal else T
    if m < 2:
        raise ConfigError(f"horizon T={T} too short for pair sampling")
    a = rng.integers(0, m, size=size)
    b = rng.integers(0, m - 1, size=size)
    b = b + (b >= a)
    i = np.minimum(a, b)
    j = np.maximum(a, b)
    if allow_equal:
        j = j - 1
    return i, j


def sample_triplet_batch(ds: TrajectoryDataset, size: int, rng: np.random.Generator):
    """Vectorized triplet draw: (traj_ids, i, j, k) with i < j and i <= k <= j-1."""
    if ds.horizon < 2:
        raise ConfigError("triplet sampling needs T >= 2")
    traj = rng.integers(0, ds.num_traj, size=size)
    i, j = sample_index_pairs(ds.horizon, size, rng)
    k = i + rng.integers(0, j - i)  # per-element high; uniform over {i..j-1}
    return traj, i, j, k


def sample_triplet(ds: TrajectoryDataset, rng: np.random.Generator):
    """Single (traj, i, j, k) triplet; see :func:`sample_triplet_batch`."""
    traj, i, j, k = sample_triplet_batch(ds, 1, rng)
    return int(traj[0]), int(i[0]), int(j[0]), int(k[0])


def sample_relabeled_goal_batch(
    ds: TrajectoryDataset,
    traj: np.ndarray,
    t: np.ndarray,
    ratios: RelabelRatios,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized hindsight goal relabeling for (traj, t) anchor points.

    All random draws happen unconditionally in a fixed order so the stream
    of generator calls (and therefore the result) is reproducible.
    """
    traj = np.asarray(traj)
    t = np.asarray(t)
    size = traj.shape[0]
    T = ds.horizon

    u = rng.random(size)
    geom_delta = rng.geometric(ratios.geom_param, size=size)
    future_t = t + rng.integers(0, T - t + 1)  # uniform over {t..T}, per element
    flat = rng.integers(0, ds.states.size, size=size)

    goals = ds.states[traj, t]  # fancy indexing copies; p_cur component by default
    c1 = ratios.p_cur
    c2 = c1 + ratios.p_geom
    c3 = c2 + ratios.p_traj

    geom_mask = (u >= c1) & (u < c2)
    if geom_mask.any():
        idx = np.minimum(t[geom_mask] + geom_delta[geom_mask], T)
        goals[geom_mask] = ds.states[traj[geom_mask], idx]
    traj_mask = (u >= c2) & (u < c3)
    if traj_mask.any():
        goals[traj_mask] = ds.states[traj[traj_mask], future_t[traj_mask]]
    rand_mask = u >= c3
    if rand_mask.any():
        goals[rand_mask] = ds.states.ravel()[flat[rand_mask]]
    return goals


def sample_relabeled_goal(
    ds: TrajectoryDataset, traj: int, t: int, ratios: RelabelRatios, rng: np.random.Generator
) -> int:
    """Single relabeled goal for trajectory ``traj`` at timestep ``t``."""
    goals = sample_relabeled_goal_batch(
        ds, np.array([traj]), np.array([t]), ratios, rng
    )
    return int(goals[0])


def sample_flat_states(ds: TrajectoryDataset, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform states from the whole dataset (every (traj, step) cell equally likely)."""
    return ds.states.ravel()[rng.integers(0, ds.states.size, size=size)]


def save_dataset(ds: TrajectoryDataset, path: str) -> None:
    """CSV layout: header 'num_traj,T', then alternating state/action rows."""
    with open(path, "w") as fh:
        fh.write(f"{ds.num_traj},{ds.horizon}\n")
        for n in range(ds.num_traj):
            fh.write(",".join(map(str, ds.states[n].tolist())) + "\n")
            fh.write(",".join(map(str, ds.actions[n].tolist())) + "\n")


def load_dataset(path: str, env: GraphEnv | None = None) -> TrajectoryDataset:
    """Read a dataset saved by :func:`save_dataset`; validates against env if given."""
    with open(path) as fh:
        header = fh.readline().strip()
        try:
            num_traj, T = (int(tok) for tok in header.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad dataset header in {path}: {header!r}") from exc
        states = np.empty((num_traj, T + 1), dtype=np.int64)
        actions = np.empty((num_traj, T), dtype=np.int64)
        for n in range(num_traj):
            srow = fh.readline().strip()
            arow = fh.readline().strip()
            if not srow or not arow:
                raise ConfigError(f"{path}: truncated at trajectory {n}")
            states[n] = [int(tok) for tok in srow.split(",")]
            actions[n] = [int(tok) for tok in arow.split(",")]
    ds = TrajectoryDataset(states, actions)
    if env is not None:
        ds.validate_against(env)
    return ds
