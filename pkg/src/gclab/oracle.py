"""Exact temporal distances and optimal goal-conditioned values.

These tables are the ground truth every learned table is checked against.
Unreachable pairs carry the sentinel :data:`UNREACHABLE` (never a large
finite number), so the value-table conversion maps them to exactly 0.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .env import ConfigError, GraphEnv, adjacency_matrix

# Sentinel for "no path". Kept negative so any arithmetic misuse is loud.
UNREACHABLE = -1


@dataclass
class DistanceTable:
    """Shortest-path step counts d[s, g]; UNREACHABLE marks no path."""

    d: np.ndarray

    @property
    def num_states(self) -> int:
        return self.d.shape[0]

    def finite_diameter(self) -> int:
        """Largest finite distance (0 for a single-state or edgeless env)."""
        finite = self.d[self.d != UNREACHABLE]
        return int(finite.max()) if finite.size else 0


@dataclass
class OptimalValueTable:
    """v[s, g] = gamma ** d[s, g], with unreachable pairs at 0."""

    v: np.ndarray
    gamma: float


def all_pairs_distances(env: GraphEnv) -> DistanceTable:
    """BFS from every source over the one-step reachability relation.

    Self-loop transitions do not contribute edges, so d[s, s] = 0 always
    and no distance-1 self pairs appear.
    """
    n = env.num_states
    adj = adjacency_matrix(env)
    neighbors = [np.flatnonzero(adj[s]) for s in range(n)]
    d = np.full((n, n), UNREACHABLE, dtype=np.int64)
    for src in range(n):
        d[src, src] = 0
        queue = deque([src])
        row = d[src]
        while queue:
            u = queue.popleft()
            du = row[u]
            for v in neighbors[u]:
                if row[v] == UNREACHABLE:
                    row[v] = du + 1
                    queue.append(v)
    return DistanceTable(d)


def floyd_warshall_distances(env: GraphEnv) -> DistanceTable:
    """All-pairs shortest paths by Floyd-Warshall; agrees with BFS (tested)."""
    n = env.num_states
    inf = np.iinfo(np.int64).max // 4  # internal only; converted back to the sentinel
    d = np.full((n, n), inf, dtype=np.int64)
    np.fill_diagonal(d, 0)
    adj = adjacency_matrix(env)
    d[adj] = 1
    np.fill_diagonal(d, 0)
    for w in range(n):
        d = np.minimum(d, d[:, w : w + 1] + d[w : w + 1, :])
    d[d >= inf] = UNREACHABLE
    return DistanceTable(d)


def optimal_value_table(dist: DistanceTable, gamma: float) -> OptimalValueTable:
    """Elementwise gamma ** d with unreachable -> 0."""
    if not (0.0 < gamma < 1.0):
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    reachable = dist.d != UNREACHABLE
    v = np.zeros_like(dist.d, dtype=np.float64)
    v[reachable] = np.power(gamma, dist.d[reachable].astype(np.float64))
    return OptimalValueTable(v, gamma)


def oracle_q_table(env: GraphEnv, gamma: float) -> np.ndarray:
    """Optimal action values under the hitting-time convention.

    Q[s, a, g] = 1 when s == g (goal already reached; the action is moot),
    otherwise gamma * V*(step(s, a), g). Greedy extraction over this table
    follows shortest paths.
    """
    dist = all_pairs_distances(env)
    v = optimal_value_table(dist, gamma).v
    q = gamma * v[env.transition, :]  # (S, A, S); v indexed by successor state
    q[np.arange(env.num_states), :, np.arange(env.num_states)] = 1.0
    return q
