"""Tabular value-update rules over a shared goal-conditioned table.

All dataset-driven learners operate on dense tables Q[s, a, g]. Methods
trained with the binary cross-entropy loss store logits and read values
through a sigmoid, which keeps Q inside (0, 1); the squared-loss SARSA
learner (gciql) stores raw values because its fixed point exceeds 1 at
goal states. One exact method runs full-table max-product sweeps instead
of consuming data.

Update convention: ``learning_rate`` is the per-sample step size (the
classic tabular convention). Within one batch, all gradients are computed
from the pre-step tables and accumulated in a fixed order, so runs are
bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .dataset import RelabelRatios
from .env import ConfigError, GraphEnv, adjacency_matrix

# Logit clamp: keeps sigmoid outputs strictly inside (0, 1) in float64
# (expit(30) = 1 - 9.4e-14) while leaving room for implied distances of
# several thousand steps at gamma = 0.99.
LOGIT_CLAMP = 30.0

METHODS = ("trl", "mc", "td_n", "gciql", "sgt", "coe", "exact")

LOGIT_SPACE_METHODS = ("trl", "mc", "td_n", "sgt", "coe")


@dataclass
class ValueTable:
    """Dense goal-conditioned action-value table.

    params holds logits when space == "logit" (values read through a
    sigmoid, hence in (0, 1)) and raw values when space == "value".
    """

    params: np.ndarray
    gamma: float
    space: str = "logit"

    def __post_init__(self):
        if self.space not in ("logit", "value"):
            raise ConfigError(f"unknown table space {self.space!r}")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.ndim != 3:
            raise ConfigError("value table must be (states, actions, goals)")

    @classmethod
    def create(
        cls,
        num_states: int,
        num_actions: int,
        gamma: float,
        space: str = "logit",
        init_logit: float = -3.0,
    ) -> "ValueTable":
        """Pessimistic initialization: logit -3 puts Q near 0.047."""
        if space == "logit":
            params = np.full((num_states, num_actions, num_states), init_logit)
        else:
            params = np.full((num_states, num_actions, num_states), float(expit(init_logit)))
        return cls(params, gamma, space)

    def values(self) -> np.ndarray:
        return expit(self.params) if self.space == "logit" else self.params

    def copy(self) -> "ValueTable":
        return ValueTable(self.params.copy(), self.gamma, self.space)

    def implied_distances(self) -> np.ndarray:
        """log_gamma Q, clamped below at 0 (values above 1 read as distance 0)."""
        v = np.maximum(self.values(), 1e-300)
        return np.maximum(np.log(v) / np.log(self.gamma), 0.0)


@dataclass
class LearnerConfig:
    """Scalars governing a training run; defaults follow the standard recipe."""

    method: str = "trl"
    gamma: float = 0.99
    kappa: float = 0.7
    lambda_reweight: float = 0.0
    learning_rate: float = 3e-4
    tau_target: float = 0.005
    batch_size: int = 256
    steps: int = 200_000
    n_step: int = 1
    M_subgoals: int = 8
    P_random_distance: int = 500
    beta_goal_reg: float = 1.0
    ratios: RelabelRatios = field(default_factory=RelabelRatios)
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not (0.5 <= self.kappa < 1.0):
            raise ConfigError(f"kappa must lie in [0.5, 1), got {self.kappa}")
        if self.lambda_reweight < 0:
            raise ConfigError(f"lambda_reweight must be >= 0, got {self.lambda_reweight}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 < self.tau_target <= 1.0):
            raise ConfigError(f"tau_target must lie in (0, 1], got {self.tau_target}")
        if self.batch_size < 1 or self.steps < 0:
            raise ConfigError("need batch_size >= 1 and steps >= 0")
        if self.n_step < 1:
            raise ConfigError(f"n_step must be >= 1, got {self.n_step}")
        if self.M_subgoals < 1 or self.P_random_distance < 1:
            raise ConfigError("need M_subgoals >= 1 and P_random_distance >= 1")
        if self.beta_goal_reg < 0:
            raise ConfigError(f"beta_goal_reg must be >= 0, got {self.beta_goal_reg}")
        if isinstance(self.ratios, dict):
            self.ratios = RelabelRatios(**self.ratios)


# ---------------------------------------------------------------------------
# Losses


def asymmetric_loss(x_pred, y_target, kappa: float, kind: str):
    """Expectile-weighted loss and its gradient with respect to the prediction.

    The weight is kappa when the prediction sits at or below the target and
    1 - kappa when it sits above, so kappa > 0.5 penalizes under-predictions
    harder and the minimizer moves toward an upper expectile of the targets.

    kind "squared": D = (x - y)^2. kind "bce": binary cross entropy, both
    arguments restricted to the open interval (0, 1).

    Returns (loss, dloss_dx), elementwise for array inputs.
    """
    if not (0.5 <= kappa < 1.0):
        raise ConfigError(f"kappa must lie in [0.5, 1), got {kappa}")
    x = np.asarray(x_pred, dtype=np.float64)
    y = np.asarray(y_target, dtype=np.float64)
    weight = np.where(x > y, 1.0 - kappa, kappa)
    if kind == "squared":
        diff = x - y
        loss = weight * diff * diff
        grad = weight * 2.0 * diff
    elif kind == "bce":
        if np.any(x <= 0) or np.any(x >= 1) or np.any(y <= 0) or np.any(y >= 1):
            raise ValueError("bce arguments must lie strictly inside (0, 1)")
        loss = weight * -(y * np.log(x) + (1.0 - y) * np.log1p(-x))
        grad = weight * (x - y) / (x * (1.0 - x))
    else:
        raise ConfigError(f"unknown loss kind {kind!r}")
    if np.isscalar(x_pred) and np.isscalar(y_target):
        return float(loss), float(grad)
    return loss, grad


def _bce_logit_terms(pred, target):
    """Plain BCE loss plus gradient wrt the logit; target may touch 0 or 1.

    pred must come from a clamped sigmoid, so logs stay finite.
    """
    loss = -(target * np.log(pred) + (1.0 - target) * np.log1p(-pred))
    return loss, pred - target


def reweight_factor(q_value, gamma: float, lam: float):
    """Distance-based weight 1 / (1 + log_gamma q)^lam.

    The implied distance is clamped to [0, 4 / (1 - gamma)] before use, so
    near-zero q early in training cannot zero the weight.
    """
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    q = np.maximum(np.asarray(q_value, dtype=np.float64), 1e-300)
    dist = np.log(q) / np.log(gamma)
    dist = np.clip(dist, 0.0, 4.0 / (1.0 - gamma))
    out = np.power(1.0 + dist, -lam)
    return float(out) if np.isscalar(q_value) else out


# ---------------------------------------------------------------------------
# Exact max-product sweeps


def transitive_base_table(env: GraphEnv, gamma: float) -> np.ndarray:
    """State-goal table with base cases set: 1 on the diagonal, gamma on edges."""
    if not (0.0 < gamma < 1.0):
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    v = np.zeros((env.num_states, env.num_states))
    v[adjacency_matrix(env)] = gamma
    np.fill_diagonal(v, 1.0)
    return v


def exact_transitive_sweep(v: np.ndarray, env: GraphEnv) -> tuple[np.ndarray, float]:
    """One Jacobi sweep of the max-product backup.

    Every entry of the result reads only the input table:
    new[s, g] = max(v[s, g], max_w v[s, w] * v[w, g]). Base-case entries
    (diagonal and one-step edges) dominate any product through a third
    state, so they stay pinned. Returns the new table and the largest
    absolute change.
    """
    n = env.num_states
    new = np.empty_like(v)
    for s in range(n):
        new[s] = (v[s][:, None] * v).max(axis=0)
    np.maximum(new, v, out=new)  # monotone: never below the previous value
    return new, float(np.abs(new - v).max())


def run_transitive_fixed_point(
    env: GraphEnv, gamma: float, max_sweeps: int | None = None, tol: float = 1e-13
) -> tuple[np.ndarray, int]:
    """Iterate Jacobi sweeps from the base table until nothing changes.

    Returns the fixed point and the number of sweeps that changed the
    table by more than ``tol``. Entries at distance <= 2^k are correct
    after k sweeps, so the count never exceeds ceil(log2(finite
    diameter)); genuine progress moves an entry by at least
    gamma^diameter * (1 - gamma), far above ``tol``, whereas late sweeps
    at most swap ulp-equivalent product trees for the same distance.
    """
    v = transitive_base_table(env, gamma)
    limit = max_sweeps if max_sweeps is not None else env.num_states + 2
    changed = 0
    for _ in range(limit):
        v, delta = exact_transitive_sweep(v, env)
        if delta <= tol:
            return v, changed
        changed += 1
    raise RuntimeError(f"max-product sweeps did not converge within {limit} iterations")


# ---------------------------------------------------------------------------
# Stochastic update steps (one gradient step per call)


def _apply_logit_updates(table: ValueTable, idx, grads, lr: float) -> None:
    np.add.at(table.params, idx, -lr * grads)
    np.clip(table.params, -LOGIT_CLAMP, LOGIT_CLAMP, out=table.params)


def trl_update_step(q: ValueTable, q_target: ValueTable, batch: dict, cfg: LearnerConfig) -> dict:
    """Divide-and-conquer update: regress Q(s_i, a_i, s_j) onto the product
    of the two target-table halves through the in-trajectory subgoal s_k.

    Segments of length <= 1 substitute the exact base value gamma^len for
    the target factor. The expectile BCE loss is scaled per sample by the
    distance-based reweight factor; target factors are constants.
    """
    g = cfg.gamma
    pred = expit(q.params[batch["s_i"], batch["a_i"], batch["s_j"]])
    tgt = q_target.values()
    gap_ik = batch["gap_ik"]
    gap_kj = batch["gap_kj"]
    f1 = np.where(gap_ik <= 1, np.power(g, gap_ik), tgt[batch["s_i"], batch["a_i"], batch["s_k"]])
    f2 = np.where(gap_kj <= 1, np.power(g, gap_kj), tgt[batch["s_k"], batch["a_k"], batch["s_j"]])
    target = f1 * f2

    w = reweight_factor(pred, g, cfg.lambda_reweight)
    loss, dloss_dpred = asymmetric_loss(pred, target, cfg.kappa, kind="bce")
    grad_logit = w * dloss_dpred * pred * (1.0 - pred)
    _apply_logit_updates(q, (batch["s_i"], batch["a_i"], batch["s_j"]), grad_logit, cfg.learning_rate)
    return {
        "loss": float(np.mean(w * loss)),
        "mean_q": float(pred.mean()),
        "max_target": float(target.max()),
    }


def mc_update_step(q: ValueTable, batch: dict, cfg: LearnerConfig) -> dict:
    """Regress Q(s_i, a_i, s_j) toward gamma^(j-i) with a symmetric squared
    loss on the sigmoid output (chain rule through the logit)."""
    pred = expit(q.params[batch["s_i"], batch["a_i"], batch["s_j"]])
    target = np.power(cfg.gamma, batch["gap"])
    diff = pred - target
    grad_logit = 2.0 * diff * pred * (1.0 - pred)
    _apply_logit_updates(q, (batch["s_i"], batch["a_i"], batch["s_j"]), grad_logit, cfg.learning_rate)
    return {
        "loss": float(np.mean(diff * diff)),
        "mean_q": float(pred.mean()),
        "max_target": float(target.max()),
    }


def td_n_compute_targets(q_target: ValueTable, batch: dict, cfg: LearnerConfig) -> np.ndarray:
    """n-step bootstrap target gamma^n_eff * Qbar(s_{i+n_eff}, a_{i+n_eff}, g).

    n_eff = min(n, j - i); when the unclipped n would overshoot j the
    bootstrap factor is replaced by 1, so the boundary target is exactly
    gamma^(j-i).
    """
    boot = q_target.values()[batch["s_b"], batch["a_b"], batch["g"]]
    boot = np.where(batch["clipped"], 1.0, boot)
    return np.power(cfg.gamma, batch["n_eff"]) * boot


def td_n_update_step(q: ValueTable, q_target: ValueTable, batch: dict, cfg: LearnerConfig) -> dict:
    """n-step bootstrapped update: a plain BCE anchor at the current state
    (target gamma^0) plus an expectile BCE term toward the n-step target."""
    s_i, a_i, goal = batch["s_i"], batch["a_i"], batch["g"]
    pred0 = expit(q.params[s_i, a_i, s_i])
    loss0, grad0 = _bce_logit_terms(pred0, 1.0)

    pred1 = expit(q.params[s_i, a_i, goal])
    target = td_n_compute_targets(q_target, batch, cfg)
    weight = np.where(pred1 > target, 1.0 - cfg.kappa, cfg.kappa)
    loss1, grad1 = _bce_logit_terms(pred1, target)

    _apply_logit_updates(q, (s_i, a_i, s_i), grad0, cfg.learning_rate)
    _apply_logit_updates(q, (s_i, a_i, goal), weight * grad1, cfg.learning_rate)
    return {
        "loss": float(np.mean(loss0 + weight * loss1)),
        "mean_q": float(pred1.mean()),
        "max_target": float(target.max()),
    }


def gciql_update_step(
    v: np.ndarray,
    q: ValueTable,
    q_target: ValueTable,
    batch: dict,
    cfg: LearnerConfig,
) -> dict:
    """SARSA-style coupled update in raw value space.

    V(s, g) chases Qbar(s, a, g) through the expectile squared loss;
    Q(s, a, g) chases I(s = g) + gamma * V(s', g) through a symmetric
    squared loss. Both gradients read the pre-step tables.
    """
    s, a, s2, goal = batch["s"], batch["a"], batch["s2"], batch["g"]
    vs = v[s, goal]
    qbar = q_target.values()[s, a, goal]
    loss_v, grad_v = asymmetric_loss(vs, qbar, cfg.kappa, kind="squared")

    qv = q.params[s, a, goal]
    target = (s == goal).astype(np.float64) + cfg.gamma * v[s2, goal]
    diff = qv - target
    np.add.at(v, (s, goal), -cfg.learning_rate * grad_v)
    np.add.at(q.params, (s, a, goal), -cfg.learning_rate * 2.0 * diff)
    return {
        "loss": float(np.mean(loss_v + diff * diff)),
        "mean_q": float(qv.mean()),
        "max_target": float(target.max()),
    }


def sgt_update_step(q: ValueTable, q_target: ValueTable, batch: dict, cfg: LearnerConfig) -> dict:
    """Subgoal-tree update with a hard max over M sampled candidates.

    Four summed terms: an anchor at the current state (gamma^0), a one-step
    term (gamma^1, restricted to genuine edges), a far-away prior pushing
    random goals toward gamma^P, and the triangle term whose target is the
    best product of target-table halves over the candidate set.
    """
    s, a, s2, goal = batch["s"], batch["a"], batch["s2"], batch["g"]
    g_rand = batch["g_rand"]
    w_states, w_actions = batch["w_states"], batch["w_actions"]
    lr = cfg.learning_rate
    tgt = q_target.values()

    pred0 = expit(q.params[s, a, s])
    loss0, grad0 = _bce_logit_terms(pred0, 1.0)

    # One-step base case applies to edges only; self-loop transitions in the
    # data would otherwise fight the gamma^0 anchor on the same entry.
    edge = (s2 != s).astype(np.float64)
    pred1 = expit(q.params[s, a, s2])
    loss1, grad1 = _bce_logit_terms(pred1, cfg.gamma)
    loss1, grad1 = edge * loss1, edge * grad1

    predr = expit(q.params[s, a, g_rand])
    lossr, gradr = _bce_logit_terms(predr, np.power(cfg.gamma, cfg.P_random_distance))

    predg = expit(q.params[s, a, goal])
    cand = tgt[s[:, None], a[:, None], w_states] * tgt[w_states, w_actions, goal[:, None]]
    tri_target = cand.max(axis=1)
    lossg, gradg = _bce_logit_terms(predg, tri_target)

    _apply_logit_updates(q, (s, a, s), grad0, lr)
    _apply_logit_updates(q, (s, a, s2), grad1, lr)
    _apply_logit_updates(q, (s, a, g_rand), gradr, lr)
    _apply_logit_updates(q, (s, a, goal), gradg, lr)
    return {
        "loss": float(np.mean(loss0 + loss1 + lossr + lossg)),
        "mean_q": float(predg.mean()),
        "max_target": float(tri_target.max()),
    }


def coe_update_step(
    q: ValueTable,
    q_target: ValueTable,
    generator: np.ndarray,
    policy_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    batch: dict,
    cfg: LearnerConfig,
) -> dict:
    """Generator-guided triangle update.

    The Q step sums the one-step edge term with a triangle term whose
    subgoal comes from the generator table. The generator step is a
    discrete hill-climb: score M sampled candidate subgoals (and the
    incumbent) by the target-value product minus beta times the squared
    coordinate distance to a random goal, and keep the best, replacing the
    incumbent only on strict improvement.
    """
    s, a, s2, goal = batch["s"], batch["a"], batch["s2"], batch["g"]
    g_rand, cand = batch["g_rand"], batch["cand_states"]
    coords = batch.get("coords")
    if cfg.beta_goal_reg > 0 and coords is None:
        raise ConfigError("coe with beta_goal_reg > 0 requires grid coordinates")
    lr = cfg.learning_rate
    tgt = q_target.values()

    edge = (s2 != s).astype(np.float64)
    pred1 = expit(q.params[s, a, s2])
    loss1, grad1 = _bce_logit_terms(pred1, cfg.gamma)
    loss1, grad1 = edge * loss1, edge * grad1

    w = generator[s, a, goal]
    a_w = policy_fn(w, goal)
    tri_target = tgt[s, a, w] * tgt[w, a_w, goal]
    predg = expit(q.params[s, a, goal])
    lossg, gradg = _bce_logit_terms(predg, tri_target)

    _apply_logit_updates(q, (s, a, s2), grad1, lr)
    _apply_logit_updates(q, (s, a, goal), gradg, lr)

    # Generator hill-climb: incumbent in column 0 wins ties, so replacement
    # happens only on strict improvement.
    options = np.concatenate([w[:, None], cand], axis=1)  # (B, M+1)
    flat_goals = np.repeat(goal, options.shape[1]).reshape(options.shape)
    opt_actions = policy_fn(options.ravel(), flat_goals.ravel()).reshape(options.shape)
    scores = tgt[s[:, None], a[:, None], options] * tgt[options, opt_actions, flat_goals]
    if cfg.beta_goal_reg > 0:
        delta = coords[options] - coords[g_rand][:, None, :]
        scores = scores - cfg.beta_goal_reg * np.sum(delta * delta, axis=-1)
    best = scores.argmax(axis=1)
    rows = np.arange(options.shape[0])
    generator[s, a, goal] = options[rows, best]
    return {
        "loss": float(np.mean(loss1 + lossg)),
        "mean_q": float(predg.mean()),
        "max_target": float(tri_target.max()),
    }


def target_sync(q: ValueTable, q_target: ValueTable, tau: float) -> None:
    """Polyak step: target <- (1 - tau) * target + tau * online."""
    if q.params.shape != q_target.params.shape or q.space != q_target.space:
        raise ValueError("online and target tables must share shape and space")
    q_target.params *= 1.0 - tau
    q_target.params += tau * q.params


# ---------------------------------------------------------------------------
# Serialization: shape header (int64 S, A, G, space flag), gamma, then the
# row-major float64 parameter block.


def save_table(table: ValueTable, path: str) -> None:
    header = np.array(
        [*table.params.shape, 0 if table.space == "logit" else 1], dtype=np.int64
    )
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.float64(table.gamma).tobytes())
        fh.write(np.ascontiguousarray(table.params).tobytes())


def load_table(path: str) -> ValueTable:
    with open(path, "rb") as fh:
        header = np.frombuffer(fh.read(4 * 8), dtype=np.int64)
        if header.size != 4:
            raise ConfigError(f"{path}: truncated value-table header")
        s, a, g, flag = (int(x) for x in header)
        gamma = float(np.frombuffer(fh.read(8), dtype=np.float64)[0])
        data = np.frombuffer(fh.read(), dtype=np.float64)
    if data.size != s * a * g:
        raise ConfigError(f"{path}: expected {s * a * g} entries, found {data.size}")
    space = "logit" if flag == 0 else "value"
    return ValueTable(data.reshape(s, a, g).copy(), gamma, space)
