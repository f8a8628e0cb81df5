"""End-to-end experiment orchestration.

A run is (method, seed) on a shared environment and dataset: train a value
table, extract a policy, evaluate on a fixed task set, write CSVs. A sweep
executes a matrix of runs from a JSON config and aggregates a summary with
normal-approximation confidence intervals over seeds. Everything downstream
of the config is deterministic, so repeated executions produce
byte-identical CSV artifacts.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.stats import spearmanr

from . import analysis as analysis_mod
from .dataset import (
    TrajectoryDataset,
    collect_dataset,
    sample_flat_states,
    sample_index_pairs,
    sample_relabeled_goal_batch,
    sample_triplet_batch,
    save_dataset,
)
from .env import ConfigError, GraphEnv, build_grid_env, load_env
from .learners import (
    LOGIT_SPACE_METHODS,
    LearnerConfig,
    ValueTable,
    coe_update_step,
    exact_transitive_sweep,
    gciql_update_step,
    mc_update_step,
    save_table,
    sgt_update_step,
    target_sync,
    td_n_update_step,
    transitive_base_table,
    trl_update_step,
)
from .oracle import UNREACHABLE, DistanceTable, all_pairs_distances
from .policy import (
    BehaviorPolicy,
    estimate_behavior_policy,
    greedy_action_batch,
    rejection_sample_action,
)


@dataclass
class EvalReport:
    """Per-task success rates plus the rank agreement with oracle distances."""

    tasks: list[dict]  # task_id, start, goal, success_rate, episodes
    spearman_to_oracle: float
    metadata: dict


def config_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Batch assembly


def _trl_batch(ds: TrajectoryDataset, cfg: LearnerConfig, rng) -> dict:
    traj, i, j, k = sample_triplet_batch(ds, cfg.batch_size, rng)
    return {
        "s_i": ds.states[traj, i],
        "a_i": ds.actions[traj, i],
        "s_j": ds.states[traj, j],
        "s_k": ds.states[traj, k],
        "a_k": ds.actions[traj, k],
        "gap_ik": k - i,
        "gap_kj": j - k,
    }


def _mc_batch(ds: TrajectoryDataset, cfg: LearnerConfig, rng) -> dict:
    traj = rng.integers(0, ds.num_traj, size=cfg.batch_size)
    i, j = sample_index_pairs(ds.horizon, cfg.batch_size, rng, allow_equal=True)
    return {
        "s_i": ds.states[traj, i],
        "a_i": ds.actions[traj, i],
        "s_j": ds.states[traj, j],
        "gap": j - i,
    }


def _td_batch(ds: TrajectoryDataset, cfg: LearnerConfig, rng) -> dict:
    traj = rng.integers(0, ds.num_traj, size=cfg.batch_size)
    i, j = sample_index_pairs(ds.horizon, cfg.batch_size, rng)
    gap = j - i
    n_eff = np.minimum(cfg.n_step, gap)
    b = i + n_eff
    return {
        "s_i": ds.states[traj, i],
        "a_i": ds.actions[traj, i],
        "g": ds.states[traj, j],
        "s_b": ds.states[traj, b],
        "a_b": ds.actions[traj, b],
        "n_eff": n_eff,
        "clipped": cfg.n_step > gap,
    }


def _transition_batch(ds: TrajectoryDataset, cfg: LearnerConfig, rng) -> dict:
    traj = rng.integers(0, ds.num_traj, size=cfg.batch_size)
    t = rng.integers(0, ds.horizon, size=cfg.batch_size)
    goals = sample_relabeled_goal_batch(ds, traj, t, cfg.ratios, rng)
    return {
        "s": ds.states[traj, t],
        "a": ds.actions[traj, t],
        "s2": ds.states[traj, t + 1],
        "g": goals,
    }


def _subgoal_candidates(ds: TrajectoryDataset, cfg: LearnerConfig, rng, with_actions: bool):
    traj = rng.integers(0, ds.num_traj, size=(cfg.batch_size, cfg.M_subgoals))
    t = rng.integers(0, ds.horizon, size=(cfg.batch_size, cfg.M_subgoals))
    states = ds.states[traj, t]
    if not with_actions:
        return states
    return states, ds.actions[traj, t]


# ---------------------------------------------------------------------------
# Training


def _exact_train(env: GraphEnv, cfg: LearnerConfig, log: list) -> ValueTable:
    v = transitive_base_table(env, cfg.gamma)
    sweep = 0
    while True:
        v, delta = exact_transitive_sweep(v, env)
        log.append(
            {
                "step": sweep,
                "method": cfg.method,
                "loss": delta,
                "mean_q": float(v.mean()),
                "max_target": float(v.max()),
            }
        )
        if delta == 0.0:
            break
        sweep += 1
        if sweep > env.num_states + 2:
            raise RuntimeError("exact sweeps failed to converge")
    q_params = cfg.gamma * v[env.transition, :]
    idx = np.arange(env.num_states)
    q_params[idx, :, idx] = 1.0
    return ValueTable(q_params, cfg.gamma, space="value")


def train_run(
    env: GraphEnv,
    ds: TrajectoryDataset | None,
    cfg: LearnerConfig,
    log_every: int = 1000,
) -> tuple[ValueTable, list[dict]]:
    """Run cfg.steps update steps (with a target sync per step) and return
    the trained table plus periodic loss records. Deterministic given cfg."""
    method = cfg.method
    log: list[dict] = []
    if method == "exact":
        return _exact_train(env, cfg, log), log

    if ds is None:
        raise ConfigError(f"method {method!r} requires a dataset")
    if method in ("trl", "td_n") and ds.horizon < 2:
        raise ConfigError(f"method {method!r} needs trajectories with T >= 2")
    if method == "coe" and cfg.beta_goal_reg > 0 and env.state_coords is None:
        raise ConfigError("coe with beta_goal_reg > 0 requires a grid environment")

    rng = np.random.default_rng(cfg.seed)
    space = "logit" if method in LOGIT_SPACE_METHODS else "value"
    q = ValueTable.create(env.num_states, env.num_actions, cfg.gamma, space=space)
    q_target = q.copy()
    v_state_goal = np.zeros((env.num_states, env.num_states)) if method == "gciql" else None
    generator = None
    if method == "coe":
        generator = np.broadcast_to(
            np.arange(env.num_states), (env.num_states, env.num_actions, env.num_states)
        ).copy()

    def policy_fn(states, goals):
        return greedy_action_batch(q, states, goals)

    for step_idx in range(cfg.steps):
        if method == "trl":
            stats = trl_update_step(q, q_target, _trl_batch(ds, cfg, rng), cfg)
        elif method == "mc":
            stats = mc_update_step(q, _mc_batch(ds, cfg, rng), cfg)
        elif method == "td_n":
            stats = td_n_update_step(q, q_target, _td_batch(ds, cfg, rng), cfg)
        elif method == "gciql":
            stats = gciql_update_step(
                v_state_goal, q, q_target, _transition_batch(ds, cfg, rng), cfg
            )
        elif method == "sgt":
            batch = _transition_batch(ds, cfg, rng)
            batch["g_rand"] = sample_flat_states(ds, cfg.batch_size, rng)
            batch["w_states"], batch["w_actions"] = _subgoal_candidates(ds, cfg, rng, True)
            stats = sgt_update_step(q, q_target, batch, cfg)
        elif method == "coe":
            batch = _transition_batch(ds, cfg, rng)
            batch["g_rand"] = sample_flat_states(ds, cfg.batch_size, rng)
            batch["cand_states"] = _subgoal_candidates(ds, cfg, rng, False)
            batch["coords"] = env.state_coords
            stats = coe_update_step(q, q_target, generator, policy_fn, batch, cfg)
        else:  # pragma: no cover - guarded by LearnerConfig
            raise ConfigError(f"unknown method {method!r}")
        target_sync(q, q_target, cfg.tau_target)
        if step_idx % log_every == 0 or step_idx == cfg.steps - 1:
            log.append({"step": step_idx, "method": method, **stats})
    return q, log


# ---------------------------------------------------------------------------
# Evaluation


def select_tasks(
    env: GraphEnv,
    dist: DistanceTable,
    num_tasks: int,
    min_distance: int = 1,
) -> list[tuple[int, int]]:
    """Deterministic task pairs spread across the reachable distance range:
    sort candidate pairs by (distance, start, goal) and take evenly spaced
    quantile positions."""
    d = dist.d
    starts, goals = np.nonzero((d != UNREACHABLE) & (d >= min_distance))
    if starts.size == 0:
        raise ConfigError("environment has no reachable task pairs at the requested distance")
    order = np.lexsort((goals, starts, d[starts, goals]))
    starts, goals = starts[order], goals[order]
    positions = np.unique(np.round(np.linspace(0, starts.size - 1, num_tasks)).astype(int))
    return [(int(starts[p]), int(goals[p])) for p in positions]


def _rollout(env, q, beh, start, goal, max_steps, extraction, rejection_n, rng) -> bool:
    s = start
    if s == goal:
        return True
    for _ in range(max_steps):
        if extraction == "greedy":
            a = int(greedy_action_batch(q, np.array([s]), np.array([goal]))[0])
        else:
            a = rejection_sample_action(q, beh, s, goal, rejection_n, rng)
        s = int(env.transition[s, a])
        if s == goal:
            return True
    return False


def spearman_to_oracle(q: ValueTable, dist: DistanceTable) -> float:
    """Rank correlation between greedy-action implied distances and true
    distances over all reachable pairs."""
    d = dist.d
    starts, goals = np.nonzero(d != UNREACHABLE)
    actions = greedy_action_batch(q, starts, goals)
    implied = q.implied_distances()[starts, actions, goals]
    rho = spearmanr(implied, d[starts, goals]).statistic
    return float(rho) if np.isfinite(rho) else 0.0


def evaluate_policy(
    env: GraphEnv,
    q: ValueTable,
    beh: BehaviorPolicy | None,
    tasks: list[tuple[int, int]],
    episodes: int,
    max_steps,
    extraction: str = "greedy",
    rng: np.random.Generator | None = None,
    rejection_n: int = 32,
    dist: DistanceTable | None = None,
    metadata: dict | None = None,
) -> EvalReport:
    """Roll out the extracted policy; success means hitting the exact goal
    within the step budget. max_steps may be one int or one per task."""
    if extraction not in ("greedy", "rejection"):
        raise ConfigError(f"unknown extraction {extraction!r}")
    if extraction == "rejection" and beh is None:
        raise ConfigError("rejection sampling requires a behavior policy")
    rng = rng if rng is not None else np.random.default_rng(0)
    dist = dist if dist is not None else all_pairs_distances(env)
    budgets = [max_steps] * len(tasks) if np.isscalar(max_steps) else list(max_steps)
    if any(b < 1 for b in budgets):
        raise ConfigError("max_steps must be >= 1 for every task")

    rows = []
    for task_id, ((start, goal), budget) in enumerate(zip(tasks, budgets)):
        wins = sum(
            _rollout(env, q, beh, start, goal, budget, extraction, rejection_n, rng)
            for _ in range(episodes)
        )
        rows.append(
            {
                "task_id": task_id,
                "start": start,
                "goal": goal,
                "success_rate": wins / episodes,
                "episodes": episodes,
            }
        )
    rho = spearman_to_oracle(q, dist)
    return EvalReport(rows, rho, metadata or {})


# ---------------------------------------------------------------------------
# Experiment configs


_ENV_KEYS = {"kind", "width", "height", "walls", "path"}
_TOP_KEYS = {
    "out_dir",
    "env",
    "dataset",
    "methods",
    "seeds",
    "n_values",
    "learner",
    "eval",
    "recursion",
    "log_every",
}
_EVAL_DEFAULTS = {
    "num_tasks": 5,
    "episodes": 15,
    "max_steps_factor": 4,
    "extraction": "greedy",
    "rejection_n": 32,
    "min_task_distance": 1,
}


def validate_experiment_config(config: dict) -> dict:
    """Normalize a sweep config, naming the offending key on any problem."""
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    for key in config:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    for key in ("out_dir", "env", "dataset", "methods", "seeds"):
        if key not in config:
            raise ConfigError(f"missing config key {key!r}")

    env_spec = config["env"]
    if not isinstance(env_spec, dict) or "kind" not in env_spec:
        raise ConfigError("config key 'env' must be an object with a 'kind'")
    for key in env_spec:
        if key not in _ENV_KEYS:
            raise ConfigError(f"unknown config key 'env.{key}'")
    if env_spec["kind"] == "grid":
        if "width" not in env_spec or "height" not in env_spec:
            raise ConfigError("config keys 'env.width' and 'env.height' are required for grids")
    elif env_spec["kind"] == "file":
        if "path" not in env_spec:
            raise ConfigError("config key 'env.path' is required for file environments")
    else:
        raise ConfigError(f"config key 'env.kind' must be 'grid' or 'file', got {env_spec['kind']!r}")

    ds_spec = config["dataset"]
    for key in ("num_traj", "T", "seed"):
        if key not in ds_spec:
            raise ConfigError(f"missing config key 'dataset.{key}'")

    methods = config["methods"]
    if not isinstance(methods, list) or not methods:
        raise ConfigError("config key 'methods' must be a non-empty list")
    seeds = config["seeds"]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("config key 'seeds' must be a non-empty list")

    normalized = dict(config)
    normalized.setdefault("learner", {})
    normalized["eval"] = {**_EVAL_DEFAULTS, **config.get("eval", {})}
    for key in normalized["eval"]:
        if key not in _EVAL_DEFAULTS:
            raise ConfigError(f"unknown config key 'eval.{key}'")
    normalized.setdefault("log_every", 1000)
    try:
        base = LearnerConfig(**normalized["learner"])
    except TypeError as exc:
        raise ConfigError(f"bad config key under 'learner': {exc}") from exc
    normalized["_base_learner"] = base
    return normalized


def build_env_from_spec(env_spec: dict) -> GraphEnv:
    if env_spec["kind"] == "grid":
        walls = {tuple(cell) for cell in env_spec.get("walls", [])}
        return build_grid_env(env_spec["width"], env_spec["height"], walls)
    return load_env(env_spec["path"])


# ---------------------------------------------------------------------------
# CSV writers (repr-formatted floats keep artifacts byte-stable)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: str, header: list[str], rows: list[dict]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[h]) for h in header) + "\n")


def write_loss_log(path: str, log: list[dict]) -> None:
    write_csv(path, ["step", "loss", "mean_q"], log)


def write_eval_csv(path: str, report: EvalReport) -> None:
    rows = [
        {**row, "spearman": report.spearman_to_oracle}
        for row in report.tasks
    ]
    write_csv(path, ["task_id", "success_rate", "episodes", "spearman"], rows)


def write_recursion_csv(path: str, rows: list[dict]) -> None:
    def fmt_row(row):
        out = dict(row)
        if out["sim_mean"] is None:
            out["sim_mean"] = ""
            out["sim_stderr"] = ""
        return out

    write_csv(
        path,
        ["n", "B_n", "bound", "C_n", "sim_mean", "sim_stderr"],
        [fmt_row(r) for r in rows],
    )


# ---------------------------------------------------------------------------
# The sweep


def _run_labels(config: dict) -> list[tuple[str, LearnerConfig]]:
    """Expand methods (and the optional td_n n sweep) into labeled configs."""
    base: LearnerConfig = config["_base_learner"]
    labeled = []
    for method in config["methods"]:
        if method == "td_n" and config.get("n_values"):
            for n in config["n_values"]:
                labeled.append((f"td-{n}", replace(base, method="td_n", n_step=n)))
        else:
            labeled.append((method, replace(base, method=method)))
    return labeled


def run_single(
    env: GraphEnv,
    ds: TrajectoryDataset,
    dist: DistanceTable,
    beh: BehaviorPolicy,
    label: str,
    cfg: LearnerConfig,
    eval_spec: dict,
    run_dir: str,
    log_every: int,
) -> EvalReport:
    os.makedirs(run_dir, exist_ok=True)
    started = time.time()
    q, log = train_run(env, ds, cfg, log_every=log_every)
    if not np.isfinite(q.params).all():
        raise ValueError(f"run {label} seed {cfg.seed}: non-finite value table")

    tasks = select_tasks(env, dist, eval_spec["num_tasks"], eval_spec["min_task_distance"])
    budgets = [
        max(1, eval_spec["max_steps_factor"] * int(dist.d[s, g])) for s, g in tasks
    ]
    payload = {"label": label, "learner": asdict(cfg)}
    report = evaluate_policy(
        env,
        q,
        beh,
        tasks,
        eval_spec["episodes"],
        budgets,
        extraction=eval_spec["extraction"],
        rng=np.random.default_rng([cfg.seed, 2025]),
        rejection_n=eval_spec["rejection_n"],
        dist=dist,
        metadata={
            "method": label,
            "seed": cfg.seed,
            "config_hash": config_hash(payload),
            "wall_time_s": time.time() - started,
        },
    )
    if any(not (0.0 <= row["success_rate"] <= 1.0) for row in report.tasks):
        raise ValueError(f"run {label} seed {cfg.seed}: success rate outside [0, 1]")

    write_loss_log(os.path.join(run_dir, "loss.csv"), log)
    save_table(q, os.path.join(run_dir, "table.bin"))
    write_eval_csv(os.path.join(run_dir, "eval.csv"), report)
    with open(os.path.join(run_dir, "meta.json"), "w") as fh:
        json.dump(report.metadata, fh, indent=2, sort_keys=True)
    return report


def aggregate_summary(out_dir: str) -> str:
    """Recompute the summary from per-run eval CSVs (the only code path that
    produces summary.csv, so re-aggregation is trivially consistent)."""
    runs_dir = os.path.join(out_dir, "runs")
    if not os.path.isdir(runs_dir):
        raise ConfigError(f"no runs directory under {out_dir}")
    groups: dict[tuple[str, str], list[float]] = {}
    for run_name in sorted(os.listdir(runs_dir)):
        eval_path = os.path.join(runs_dir, run_name, "eval.csv")
        if not os.path.isfile(eval_path):
            continue
        label = run_name.rsplit("_seed", 1)[0]
        with open(eval_path) as fh:
            header = fh.readline().strip().split(",")
            rows_in = [dict(zip(header, line.strip().split(","))) for line in fh if line.strip()]
        for row in rows_in:
            groups.setdefault((label, row["task_id"]), []).append(float(row["success_rate"]))
        if rows_in:  # spearman is a run-level statistic repeated on every row
            groups.setdefault((label, "spearman"), []).append(float(rows_in[0]["spearman"]))
    rows = []
    for (label, task_id), values in sorted(groups.items()):
        arr = np.array(values)
        ci95 = 1.96 * arr.std(ddof=1) / np.sqrt(arr.size) if arr.size > 1 else 0.0
        rows.append(
            {
                "method": label,
                "task_id": task_id,
                "mean": float(arr.mean()),
                "ci95": float(ci95),
                "seeds": arr.size,
            }
        )
    path = os.path.join(out_dir, "summary.csv")
    write_csv(path, ["method", "task_id", "mean", "ci95", "seeds"], rows)
    return path


def run_experiment(config_or_path) -> int:
    """Execute a (method x seed) matrix; returns 0, or 1 if any run failed
    validation. Partial results stay on disk."""
    if isinstance(config_or_path, str):
        with open(config_or_path) as fh:
            try:
                config = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
    else:
        config = config_or_path
    config = validate_experiment_config(config)

    out_dir = config["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    env = build_env_from_spec(config["env"])
    ds_spec = config["dataset"]
    ds = collect_dataset(env, ds_spec["num_traj"], ds_spec["T"], ds_spec["seed"])
    save_dataset(ds, os.path.join(out_dir, "dataset.csv"))
    dist = all_pairs_distances(env)
    beh = estimate_behavior_policy(ds, env)

    failures = []
    for label, cfg in _run_labels(config):
        for seed in config["seeds"]:
            run_cfg = replace(cfg, seed=seed)
            run_dir = os.path.join(out_dir, "runs", f"{label}_seed{seed}")
            try:
                run_single(
                    env, ds, dist, beh, label, run_cfg, config["eval"], run_dir,
                    config["log_every"],
                )
            except (ValueError, RuntimeError) as exc:
                failures.append(f"{label} seed {seed}: {exc}")

    if config.get("recursion"):
        rec = config["recursion"]
        rows = analysis_mod.recursion_report_rows(
            rec.get("n_max", 4096),
            sim_sizes=tuple(rec.get("sim_sizes", ())),
            trials=rec.get("trials", 10_000),
            seed=rec.get("seed", 0),
        )
        write_recursion_csv(os.path.join(out_dir, "recursion.csv"), rows)

    aggregate_summary(out_dir)
    if failures:
        for failure in failures:
            print(f"FAILED {failure}")
        return 1
    return 0
