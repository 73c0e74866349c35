"""Command-line client: exit codes, artifacts, env precedence, determinism."""

import json
import os

import pytest

from fedssp.cli import main


def write_config(tmp_path, name="cfg.yaml", seed=0, out="run", rounds=4,
                 extra=""):
    text = f"""
seed: {seed}
out_dir: {tmp_path / out}
data:
  kind: synth
  d: 8
  m: 2
  n_normal: 80
  n_anomaly: 15
  noise_sigma: 0.1
  anomaly_scale: 3.0
partition:
  n_gateways: 2
hyperparams:
  m: 2
  rounds: {rounds}
  inner_max_iters: 25
  lambda1: 0.1
  lambda2: 0.1
{extra}"""
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("FEDSSP_SEED", raising=False)
    monkeypatch.delenv("FEDSSP_SERVER", raising=False)


def test_fit_succeeds_and_writes_model(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["fit", "-c", cfg]) == 0
    out = capsys.readouterr().out
    assert "fit: 4 rounds" in out
    assert os.path.exists(tmp_path / "run" / "model.fssp")
    assert os.path.exists(tmp_path / "run" / "history.jsonl")


def test_detect_after_fit(tmp_path, capsys):
    cfg = write_config(tmp_path)
    main(["fit", "-c", cfg])
    assert main(["detect", "--model", str(tmp_path / "run")]) == 0
    out = capsys.readouterr().out
    assert "detect: acc" in out
    assert os.path.exists(tmp_path / "run" / "report.json")


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["fit", "-c", str(tmp_path / "absent.yaml")]) == 2
    assert "error" in capsys.readouterr().err


def test_malformed_config_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("out_dir: [unclosed\n", encoding="utf-8")
    assert main(["fit", "-c", str(p)]) == 2


def test_unknown_config_key_exits_2(tmp_path):
    cfg = write_config(tmp_path, extra="mystery_knob: 3\n")
    assert main(["fit", "-c", cfg]) == 2


def test_detect_missing_model_exits_3(tmp_path, capsys):
    assert main(["detect", "--model", str(tmp_path / "nope")]) == 3
    assert "data" in capsys.readouterr().err


def test_nan_training_data_exits_4(tmp_path, capsys):
    # "nan" is a float, so it survives parsing and poisons the Gram matrix
    train = tmp_path / "train.csv"
    rows = ["a,b,label"] + [f"{i}.0,nan,0" for i in range(20)]
    train.write_text("\n".join(rows) + "\n", encoding="utf-8")
    cfg_text = f"""
out_dir: {tmp_path / "run"}
data:
  kind: csv
  train_path: {train}
  label_column: label
partition:
  key: a
  n_gateways: 2
hyperparams:
  m: 1
  rounds: 2
"""
    p = tmp_path / "cfg.yaml"
    p.write_text(cfg_text, encoding="utf-8")
    assert main(["fit", "-c", str(p)]) == 4
    assert "solver" in capsys.readouterr().err


def test_seed_flag_and_env_precedence(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, seed=0, rounds=1)
    main(["fit", "-c", cfg, "--seed", "5"])
    snap = json.load(open(tmp_path / "run" / "config.json"))
    assert snap["seed"] == 5
    monkeypatch.setenv("FEDSSP_SEED", "11")
    main(["fit", "-c", cfg, "--seed", "5"])
    snap = json.load(open(tmp_path / "run" / "config.json"))
    assert snap["seed"] == 11


def test_set_overrides_reach_the_run(tmp_path):
    cfg = write_config(tmp_path, rounds=4)
    assert main(["fit", "-c", cfg, "--set", "hyperparams.rounds=2"]) == 0
    lines = open(tmp_path / "run" / "history.jsonl").read().strip().split("\n")
    assert len(lines) == 2


def test_cli_rerun_is_bit_identical(tmp_path):
    import shutil

    cfg = write_config(tmp_path, seed=3)
    blobs = []
    for _ in range(2):
        if (tmp_path / "run").exists():
            shutil.rmtree(tmp_path / "run")
        assert main(["fit", "-c", cfg]) == 0
        blobs.append(open(tmp_path / "run" / "model.fssp", "rb").read())
    assert blobs[0] == blobs[1]


def test_sweep_command(tmp_path, capsys):
    cfg = write_config(tmp_path, out="sweep", rounds=3)
    assert main(["sweep", "-c", cfg, "--p", "0.5", "--q", "0", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "baseline:" in out
    assert os.path.exists(tmp_path / "sweep" / "sweep.csv")
    names = [r["cell"] for r in
             json.load(open(tmp_path / "sweep" / "sweep.json"))["cells"]]
    assert names == ["baseline", "p0.5_q0", "p0.5_q0.5"]


def test_synth_command(tmp_path, capsys):
    cfg = write_config(tmp_path, out="data")
    assert main(["synth", "-c", cfg]) == 0
    out = capsys.readouterr().out
    assert "synth: 80 train / 30 test samples" in out
    assert os.path.exists(tmp_path / "data" / "train.csv")
    assert os.path.exists(tmp_path / "data" / "test.csv")
    assert os.path.exists(tmp_path / "data" / "basis_true.fssp")
    assert os.path.exists(tmp_path / "data" / "meta.json")


def test_synth_requires_synth_config(tmp_path):
    train = tmp_path / "t.csv"
    train.write_text("a,label\n1,0\n2,0\n", encoding="utf-8")
    p = tmp_path / "cfg.yaml"
    p.write_text(f"""
out_dir: {tmp_path / "run"}
data:
  kind: csv
  train_path: {train}
  label_column: label
hyperparams:
  m: 1
""", encoding="utf-8")
    assert main(["synth", "-c", str(p)]) == 2


def test_synth_then_csv_fit_roundtrip(tmp_path):
    cfg = write_config(tmp_path, out="data", seed=2)
    assert main(["synth", "-c", cfg]) == 0
    fit_cfg = tmp_path / "fit.yaml"
    fit_cfg.write_text(f"""
seed: 2
out_dir: {tmp_path / "run"}
data:
  kind: csv
  train_path: {tmp_path / "data" / "train.csv"}
  test_path: {tmp_path / "data" / "test.csv"}
  label_column: label
partition:
  key: f0
  n_gateways: 2
hyperparams:
  m: 2
  rounds: 3
  inner_max_iters: 25
""", encoding="utf-8")
    assert main(["fit", "-c", str(fit_cfg)]) == 0
    assert main(["detect", "--model", str(tmp_path / "run"),
                 "--out", str(tmp_path / "rep")]) == 0
    rep = json.load(open(tmp_path / "rep" / "report.json"))
    assert rep["tp"] + rep["fn"] == 15
