import copy
import json

import pytest
import yaml

from somapulse import config
from somapulse.cli import main

SMOKE = yaml.safe_load(config.bundled_config("smoke").read_text())


def write_cfg(tmp_path, name="c.yaml", **over):
    d = copy.deepcopy(SMOKE)
    d.update(over)
    p = tmp_path / name
    p.write_text(yaml.safe_dump(d))
    return str(p)


def files_carry_hash(out, h):
    for p in out.iterdir():
        text = p.read_text()
        if p.suffix == ".json":
            d = json.loads(text)
            assert d.get("config_hash", d.get("meta", {}).get("config_hash")) == h, p
        elif p.suffix == ".csv":
            assert text.startswith(f"# config_hash: {h}"), p
        elif p.suffix == ".jsonl":
            assert all(json.loads(l)["config_hash"] == h for l in text.splitlines()), p


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    outs = {}
    for cmd in ("grape", "robust", "soma-sl", "soma-bp"):
        for rep in (0, 1):
            out = root / f"{cmd}{rep}"
            assert main([cmd, "--config", "smoke", "--out", str(out), "--workers", "1"]) == 0
            outs[cmd, rep] = out
    return outs


@pytest.mark.parametrize("cmd", ["grape", "robust", "soma-sl", "soma-bp"])
def test_training_commands_write_artifacts(runs, cmd):
    out = runs[cmd, 0]
    names = {p.name for p in out.iterdir()}
    assert {"metrics.json", "trace.csv", "manifest.json"} <= names
    if cmd in ("soma-sl", "soma-bp"):
        assert "weights.json" in names
    if cmd == "soma-sl":
        assert "dataset.jsonl" in names
    h = config.load("smoke").hash
    files_carry_hash(out, h)
    man = json.loads((out / "manifest.json").read_text())
    assert set(man["outputs"]) == names - {"manifest.json"}
    m = json.loads((out / "metrics.json").read_text())
    assert m["std_infidelity"] ** 2 <= 1 - (1 - m["mean_infidelity"]) ** 2


@pytest.mark.parametrize("cmd", ["grape", "robust", "soma-sl", "soma-bp"])
def test_rerun_byte_identical(runs, cmd):
    a, b = (runs[cmd, i] for i in (0, 1))
    assert (a / "metrics.json").read_bytes() == (b / "metrics.json").read_bytes()
    for name in ("weights.json", "pulse.json", "dataset.jsonl"):
        if (a / name).exists():
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def no_clock(p):  # the trace's last column is elapsed wall time
        return [l.rsplit(",", 1)[0] for l in p.read_text().splitlines()]

    assert no_clock(a / "trace.csv") == no_clock(b / "trace.csv")


def test_grape_depth(runs):
    assert json.loads((runs["grape", 0] / "metrics.json").read_text())["infidelity"] <= 1e-6


@pytest.mark.parametrize("mode", ["testset", "axis", "radial"])
def test_eval_modes(runs, tmp_path, mode):
    out = tmp_path / mode
    code = main(["eval", "--config", "smoke", "--weights", str(runs["soma-bp", 0] / "weights.json"),
                 "--mode", mode, "--out", str(out)])
    assert code == 0
    files_carry_hash(out, config.load("smoke").hash)
    if mode == "radial":
        rows = (out / "radial.csv").read_text().splitlines()[2:]
        assert all(int(r.split(",")[3]) == SMOKE["evaluation"]["n_per_radius"] for r in rows)


def test_eval_frozen_space_zero_std(runs, tmp_path):
    d = copy.deepcopy(SMOKE)
    for k, v in d["parameters"].items():
        if isinstance(v, dict):
            v.pop("lo", None)
            v.pop("hi", None)
    cfg = tmp_path / "frozen.yaml"
    cfg.write_text(yaml.safe_dump(d))
    assert main(["grape", "--config", str(cfg), "--out", str(tmp_path / "g")]) == 0
    assert main(["eval", "--config", str(cfg), "--weights", str(tmp_path / "g" / "pulse.json"),
                 "--out", str(tmp_path / "e")]) == 0
    assert json.loads((tmp_path / "e" / "metrics.json").read_text())["std_infidelity"] == 0.0


def test_eval_mismatch_exit_4(runs, tmp_path, capsys):
    other = write_cfg(tmp_path, pulse={"K": 5, "scale": 0.01})
    assert main(["eval", "--config", other, "--weights", str(runs["soma-bp", 0] / "weights.json"),
                 "--out", str(tmp_path / "x")]) == 4
    assert main(["eval", "--config", other, "--weights", str(runs["grape", 0] / "pulse.json"),
                 "--out", str(tmp_path / "y")]) == 4
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["eval", "--config", "smoke", "--weights", str(bad), "--out", str(tmp_path / "z")]) == 4


def test_config_error_exit_2(tmp_path, capsys):
    d = copy.deepcopy(SMOKE)
    del d["parameters"]["T"]
    p = tmp_path / "noT.yaml"
    p.write_text(yaml.safe_dump(d))
    assert main(["grape", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "T" in capsys.readouterr().err
    assert main(["validate-config", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_validate_and_list(capsys):
    assert main(["validate-config", "--config", "smoke"]) == 0
    assert config.load("smoke").hash in capsys.readouterr().out
    assert main(["list"]) == 0
    assert "table1_r1" in capsys.readouterr().out.split()


def test_decompose_exact_and_deterministic(tmp_path, capsys):
    assert main(["decompose", "--angle", "pi/4", "--max-depth", "5", "--out", str(tmp_path / "a")]) == 0
    assert json.loads((tmp_path / "a" / "result.json").read_text())["best_fidelity"] >= 1 - 1e-9
    for k in "bc":
        assert main(["decompose", "--angle", "pi/sqrt(3)", "--method", "stochastic", "--max-depth", "6",
                     "--max-moves", "3000", "--seed", "4", "--out", str(tmp_path / k)]) == 0
    assert (tmp_path / "b" / "result.json").read_bytes() == (tmp_path / "c" / "result.json").read_bytes()
    assert "N_CNOT" in capsys.readouterr().out


def test_decompose_budget_exit_3(tmp_path):
    assert main(["decompose", "--max-depth", "6", "--max-evaluations", "5", "--out", str(tmp_path)]) == 3


def test_baseline_commands(tmp_path, capsys):
    assert main(["baseline", "--family", "bb1", "--points", "6", "--out", str(tmp_path / "b")]) == 0
    s = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert abs(s["slope"] - 6) <= 0.5
    assert main(["baseline", "--family", "drag", "--points", "2", "--lo", "8", "--hi", "10",
                 "--out", str(tmp_path / "d")]) == 0
    assert json.loads((tmp_path / "d" / "summary.json").read_text())["min_reduction"] >= 10
    assert main(["baseline", "--family", "drag", "--system", "qubit", "--out", str(tmp_path / "e")]) == 2


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SOMAPULSE_OUTPUT_ROOT", str(tmp_path))
    assert main(["baseline", "--family", "bb1", "--points", "3"]) == 0
    assert (tmp_path / "runs" / "baseline_bb1" / "bb1.csv").exists()
