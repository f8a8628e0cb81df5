"""Deterministic finite controlled Markov processes.

An environment is a dense transition table ``state x action -> state``.
Grids use four actions (up, down, left, right, in that order); moving into
a wall or off the boundary is a self-loop, so random-walk data collection
never terminates early. Arbitrary directed graphs can be built from an
explicit transition table, either in code or from a plain-text file.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

# Grid action order is fixed for reproducible tie-breaking.
GRID_ACTIONS = ("up", "down", "left", "right")
_GRID_DELTAS = ((0, -1), (0, 1), (-1, 0), (1, 0))


class ConfigError(ValueError):
    """Raised for invalid configuration or construction arguments."""


@dataclass
class GraphEnv:
    """Deterministic controlled Markov process over integer states.

    Attributes:
        num_states: number of states, indexed 0..num_states-1.
        num_actions: number of discrete actions, shared by every state.
        transition: int array of shape (num_states, num_actions);
            transition[s, a] is the successor state.
        state_coords: optional int array of shape (num_states, 2) with
            (x, y) cell coordinates; present for grid environments.
    """

    num_states: int
    num_actions: int
    transition: np.ndarray
    state_coords: Optional[np.ndarray] = None

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.int64)
        if self.num_states < 1:
            raise ConfigError("environment needs at least one state")
        if self.num_actions < 1:
            raise ConfigError("every state needs at least one action")
        if self.transition.shape != (self.num_states, self.num_actions):
            raise ConfigError(
                f"transition table shape {self.transition.shape} does not match "
                f"({self.num_states}, {self.num_actions})"
            )
        if self.transition.min() < 0 or self.transition.max() >= self.num_states:
            raise ConfigError("transition table contains out-of-range state indices")
        if self.state_coords is not None:
            self.state_coords = np.asarray(self.state_coords, dtype=np.int64)
            if self.state_coords.shape != (self.num_states, 2):
                raise ConfigError("state_coords must have shape (num_states, 2)")


def build_grid_env(width: int, height: int, walls: Iterable[tuple[int, int]] = ()) -> GraphEnv:
    """Build a 4-connected grid with the given walled cells removed.

    Free cells become the states, enumerated row-major ((x, y) -> index).
    Blocked moves (wall or boundary) are self-loops.
    """
    if width < 1 or height < 1:
        raise ConfigError("grid dimensions must be positive")
    wall_set = set((int(x), int(y)) for x, y in walls)
    for x, y in wall_set:
        if not (0 <= x < width and 0 <= y < height):
            raise ConfigError(f"wall cell {(x, y)} outside the {width}x{height} grid")

    cells = [(x, y) for y in range(height) for x in range(width) if (x, y) not in wall_set]
    if not cells:
        raise ConfigError("all cells are walled; no states remain")
    index = {cell: i for i, cell in enumerate(cells)}

    transition = np.empty((len(cells), 4), dtype=np.int64)
    for (x, y), s in index.items():
        for a, (dx, dy) in enumerate(_GRID_DELTAS):
            nxt = (x + dx, y + dy)
            transition[s, a] = index.get(nxt, s) if nxt not in wall_set else s
    coords = np.array(cells, dtype=np.int64)
    return GraphEnv(len(cells), 4, transition, coords)


def step(env: GraphEnv, s: int, a: int) -> int:
    """Apply action ``a`` in state ``s``; pure table lookup."""
    if not (0 <= s < env.num_states):
        raise ValueError(f"state {s} out of range [0, {env.num_states})")
    if not (0 <= a < env.num_actions):
        raise ValueError(f"action {a} out of range [0, {env.num_actions})")
    return int(env.transition[s, a])


def edge_set(env: GraphEnv) -> list[tuple[int, int]]:
    """All ordered pairs (s, s') with s != s' reachable by one action.

    Self-loops are excluded. The result is sorted lexicographically so
    downstream consumers see a deterministic ordering.
    """
    src = np.repeat(np.arange(env.num_states), env.num_actions)
    dst = env.transition.ravel()
    keep = src != dst
    pairs = set(zip(src[keep].tolist(), dst[keep].tolist()))
    return sorted(pairs)


def adjacency_matrix(env: GraphEnv) -> np.ndarray:
    """Boolean (S, S) matrix of the one-step reachability relation (no self-loops)."""
    adj = np.zeros((env.num_states, env.num_states), dtype=bool)
    src = np.repeat(np.arange(env.num_states), env.num_actions)
    dst = env.transition.ravel()
    keep = src != dst
    adj[src[keep], dst[keep]] = True
    return adj


def random_graph_env(num_states: int, num_actions: int, seed: int) -> GraphEnv:
    """Random deterministic graph: each (s, a) maps to a uniform random state."""
    rng = np.random.default_rng(seed)
    transition = rng.integers(0, num_states, size=(num_states, num_actions), dtype=np.int64)
    return GraphEnv(num_states, num_actions, transition)


def save_env(env: GraphEnv, path: str) -> None:
    """Write the transition table as plain text: header line, then one row per state."""
    with open(path, "w") as fh:
        fh.write(f"{env.num_states} {env.num_actions}\n")
        for s in range(env.num_states):
            fh.write(" ".join(str(int(t)) for t in env.transition[s]) + "\n")


def load_env(path: str) -> GraphEnv:
    """Read an environment saved by :func:`save_env`. Lines starting with # are ignored."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ConfigError(f"environment file {path} is empty")
    try:
        num_states, num_actions = (int(tok) for tok in lines[0].split())
    except ValueError as exc:
        raise ConfigError(f"bad header in {path}: {lines[0]!r}") from exc
    if len(lines) - 1 != num_states:
        raise ConfigError(
            f"{path}: expected {num_states} transition rows, found {len(lines) - 1}"
        )
    rows = []
    for s, line in enumerate(lines[1:]):
        row = [int(tok) for tok in line.split()]
        if len(row) != num_actions:
            raise ConfigError(f"{path}: row {s} has {len(row)} entries, expected {num_actions}")
        rows.append(row)
    return GraphEnv(num_states, num_actions, np.array(rows, dtype=np.int64))
