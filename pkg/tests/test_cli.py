import json

import pytest

from gclab.cli import main


def run_cli(*argv):
    return main(list(argv))


def test_gen_requires_seed(capsys, tmp_path):
    with pytest.raises(SystemExit) as exc:
        run_cli("gen", "--width", "3", "--height", "1", "--num-traj", "4", "--T", "8",
                "--out", str(tmp_path / "ds.csv"))
    assert exc.value.code == 2  # argparse: missing required --seed


def test_gen_train_eval_pipeline(tmp_path, capsys):
    ds_path = tmp_path / "ds.csv"
    code = run_cli(
        "gen", "--width", "4", "--height", "1", "--num-traj", "30", "--T", "10",
        "--seed", "0", "--out", str(ds_path),
    )
    assert code == 0
    assert ds_path.is_file()

    run_dir = tmp_path / "run"
    code = run_cli(
        "train", "--width", "4", "--height", "1", "--dataset", str(ds_path),
        "--method", "trl", "--steps", "200", "--batch-size", "32",
        "--learning-rate", "0.25", "--seed", "0", "--out-dir", str(run_dir),
    )
    assert code == 0
    assert (run_dir / "table.bin").is_file()

    eval_path = tmp_path / "eval.csv"
    code = run_cli(
        "eval", "--width", "4", "--height", "1", "--table", str(run_dir / "table.bin"),
        "--dataset", str(ds_path), "--num-tasks", "3", "--episodes", "2",
        "--out", str(eval_path),
    )
    assert code == 0
    assert eval_path.read_text().startswith("task_id,success_rate,episodes,spearman")


def test_train_rejects_bad_method(tmp_path, capsys):
    ds_path = tmp_path / "ds.csv"
    run_cli("gen", "--width", "3", "--height", "1", "--num-traj", "4", "--T", "8",
            "--seed", "0", "--out", str(ds_path))
    code = run_cli(
        "train", "--width", "3", "--height", "1", "--dataset", str(ds_path),
        "--method", "nonsense", "--seed", "0", "--out-dir", str(tmp_path / "r"),
    )
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_sweep_and_report(tmp_path, capsys):
    out_dir = tmp_path / "exp"
    config = {
        "out_dir": str(out_dir),
        "env": {"kind": "grid", "width": 4, "height": 1},
        "dataset": {"num_traj": 20, "T": 8, "seed": 0},
        "methods": ["mc"],
        "seeds": [0],
        "learner": {"steps": 100, "batch_size": 32, "learning_rate": 0.25},
        "eval": {"num_tasks": 2, "episodes": 2},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(config))
    assert run_cli("sweep", "--config", str(cfg_path)) == 0
    assert (out_dir / "summary.csv").is_file()
    assert run_cli("report", "--out-dir", str(out_dir)) == 0


def test_sweep_bad_config_exit_code(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"out_dir": "x"}))
    assert run_cli("sweep", "--config", str(cfg_path)) == 2
    err = capsys.readouterr().err
    assert "env" in err


def test_recursion_command(tmp_path):
    out = tmp_path / "rec.csv"
    code = run_cli(
        "recursion", "--n-max", "128", "--sim", "4", "--sim", "16",
        "--trials", "1000", "--out", str(out),
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n,B_n,bound,C_n,sim_mean,sim_stderr"


def test_env_file_flag(tmp_path):
    env_path = tmp_path / "env.txt"
    env_path.write_text("3 1\n1\n2\n2\n")  # one-way chain
    ds_path = tmp_path / "ds.csv"
    code = run_cli(
        "gen", "--env-file", str(env_path), "--num-traj", "5", "--T", "4",
        "--seed", "1", "--out", str(ds_path),
    )
    assert code == 0
    header = ds_path.read_text().splitlines()[0]
    assert header == "5,4"
