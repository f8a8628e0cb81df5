import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gclab.env import ConfigError, GraphEnv, adjacency_matrix, build_grid_env, random_graph_env
from gclab.oracle import (
    UNREACHABLE,
    all_pairs_distances,
    floyd_warshall_distances,
    optimal_value_table,
    oracle_q_table,
)


def matrix_power_distances(env):
    """Independent oracle: k-step reachability via boolean matrix products.

    d[s, g] is the first k with g reachable from s in <= k steps.
    """
    n = env.num_states
    adj = adjacency_matrix(env)
    d = np.full((n, n), UNREACHABLE, dtype=np.int64)
    np.fill_diagonal(d, 0)
    reach = np.eye(n, dtype=bool)
    for k in range(1, n):
        reach = reach @ adj | reach
        newly = reach & (d == UNREACHABLE)
        d[newly] = k
        if not newly.any():
            break
    return d


def one_way_corridor(n=3):
    """Directed chain 0 -> 1 -> ... -> n-1 with a single 'right' action."""
    transition = np.minimum(np.arange(n) + 1, n - 1).reshape(-1, 1)
    return GraphEnv(n, 1, transition)


def test_self_distances_are_zero():
    env = build_grid_env(4, 3, walls={(2, 1)})
    d = all_pairs_distances(env).d
    assert (np.diag(d) == 0).all()


def test_5x5_corner_to_corner():
    env = build_grid_env(5, 5)
    d = all_pairs_distances(env).d
    assert d[0, 24] == 8  # (0,0) -> (4,4): Manhattan distance on an empty grid


def test_one_way_corridor_unreachable():
    env = one_way_corridor(3)
    d = all_pairs_distances(env).d
    assert d[0, 2] == 2
    assert d[2, 0] == UNREACHABLE


def test_bfs_matches_floyd_warshall_and_matrix_powers():
    envs = [
        build_grid_env(5, 5),
        build_grid_env(4, 4, walls={(1, 1), (2, 2)}),
        one_way_corridor(6),
    ] + [random_graph_env(30, 3, seed) for seed in range(5)]
    for env in envs:
        bfs = all_pairs_distances(env).d
        fw = floyd_warshall_distances(env).d
        np.testing.assert_array_equal(bfs, fw)
        np.testing.assert_array_equal(bfs, matrix_power_distances(env))


def test_value_table_values():
    env = build_grid_env(5, 5)
    dist = all_pairs_distances(env)
    table = optimal_value_table(dist, gamma=0.99)
    assert table.v[0, 0] == 1.0
    assert table.v[0, 24] == pytest.approx(0.99**8)
    assert table.v[0, 24] == pytest.approx(0.92274, abs=1e-5)


def test_unreachable_value_is_exactly_zero():
    env = one_way_corridor(3)
    table = optimal_value_table(all_pairs_distances(env), gamma=0.9)
    assert table.v[2, 0] == 0.0


def test_gamma_validation():
    env = one_way_corridor(2)
    dist = all_pairs_distances(env)
    for bad in (0.0, 1.0, -0.5, 1.5):
        with pytest.raises(ConfigError):
            optimal_value_table(dist, bad)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), gamma=st.floats(0.5, 0.999))
def test_multiplicative_triangle_inequality(seed, gamma):
    env = random_graph_env(20, 2, seed)
    dist = all_pairs_distances(env)
    v = optimal_value_table(dist, gamma).v
    # v[s, g] >= v[s, w] * v[w, g] for all s, w, g (allow float round-off).
    products = v[:, :, None] * v[None, :, :]  # products[s, w, g]
    best = products.max(axis=1)
    assert (v >= best - 1e-12).all()


def test_triangle_equality_on_shortest_path():
    env = build_grid_env(6, 1)  # corridor: every midpoint lies on the shortest path
    dist = all_pairs_distances(env)
    v = optimal_value_table(dist, 0.95).v
    # w = 3 is on the unique shortest path 0 -> 5.
    assert v[0, 5] == pytest.approx(v[0, 3] * v[3, 5], rel=1e-12)


def test_bfs_matches_matrix_powers_on_larger_envs():
    for env in (build_grid_env(14, 14), random_graph_env(200, 2, 77)):
        np.testing.assert_array_equal(all_pairs_distances(env).d, matrix_power_distances(env))


def test_oracle_q_table_shape_and_goal_rows():
    env = build_grid_env(3, 1)
    q = oracle_q_table(env, 0.9)
    assert q.shape == (3, 4, 3)
    assert (q[np.arange(3), :, np.arange(3)] == 1.0).all()
    # From state 0 toward goal 2: moving right lands at distance 1.
    assert q[0, 3, 2] == pytest.approx(0.9 * 0.9)
    # Self-loop actions keep distance 2.
    assert q[0, 0, 2] == pytest.approx(0.9 * 0.9**2)
