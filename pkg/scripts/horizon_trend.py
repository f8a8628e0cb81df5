"""Desk-scale horizon comparison on a long corridor.

Trains the transitive update against td-n baselines (and optionally mc)
with an equal step budget per method on random-walk corridor data, then
prints the per-method mean spearman rank agreement with oracle distances.

Usage:
    python scripts/horizon_trend.py --out-dir runs/horizon --steps 15000
"""

import argparse
import json
import os
import sys

from gclab.harness import run_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs/horizon")
    parser.add_argument("--corridor", type=int, default=64)
    parser.add_argument("--num-traj", type=int, default=200)
    parser.add_argument("--T", type=int, default=64)
    parser.add_argument("--steps", type=int, default=15_000)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3])
    parser.add_argument("--n-values", type=int, nargs="+", default=[1, 5, 10])
    parser.add_argument("--with-mc", action="store_true")
    args = parser.parse_args()

    methods = ["trl", "td_n"] + (["mc"] if args.with_mc else [])
    config = {
        "out_dir": args.out_dir,
        "env": {"kind": "grid", "width": args.corridor, "height": 1},
        "dataset": {"num_traj": args.num_traj, "T": args.T, "seed": 0},
        "methods": methods,
        "seeds": args.seeds,
        "n_values": args.n_values,
        "learner": {
            "gamma": 0.99,
            "kappa": 0.9,
            "lambda_reweight": 0.0,
            "learning_rate": 0.5,
            "tau_target": 0.01,
            "batch_size": 256,
            "steps": args.steps,
        },
        "eval": {"num_tasks": 5, "episodes": 15, "max_steps_factor": 4},
    }
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "config.json"), "w") as fh:
        json.dump(config, fh, indent=2)

    code = run_experiment(config)
    with open(os.path.join(args.out_dir, "summary.csv")) as fh:
        header = fh.readline().strip().split(",")
        rows = [dict(zip(header, line.strip().split(","))) for line in fh]
    print("\nspearman to oracle distances (mean over seeds):")
    for row in rows:
        if row["task_id"] == "spearman":
            print(f"  {row['method']:>8}: {float(row['mean']):.4f} "
                  f"(ci95 {float(row['ci95']):.4f}, {row['seeds']} seeds)")
    return code


if __name__ == "__main__":
    sys.exit(main())
