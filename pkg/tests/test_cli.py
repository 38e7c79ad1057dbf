import csv
import json
from pathlib import Path

import pytest

from expdich.cli import main
from expdich.config import load_config, parse_config, with_value

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(*args):
    return main([str(a) for a in args])


def test_intro_run(tmp_path, capsys):
    assert run("run", "--config", CONFIGS / "intro.yaml", "--out-dir", tmp_path) == 0
    out = capsys.readouterr().out
    assert "measured stable rate 0.125" in out and "measured unstable rate 2" in out
    assert (tmp_path / "intro" / "certificate.json").is_file()
    summary = (tmp_path / "intro" / "summary.txt").read_text()
    assert summary.splitlines()[-1].startswith("PASS overall")


def test_every_pass_line_cites_a_margin(tmp_path, capsys):
    run("run", "--config", CONFIGS / "intro.yaml", "--out-dir", tmp_path)
    for line in capsys.readouterr().out.splitlines():
        if line.startswith("PASS") and "overall" not in line:
            assert "margin" in line and ("item" in line or "<=" in line or ">=" in line)


def test_gate_violation_exit_1(tmp_path, capsys):
    assert run("run", "--config", CONFIGS / "intro_gate_violation.yaml", "--out-dir", tmp_path) == 1
    out = capsys.readouterr().out
    assert any(line.startswith("FAIL constants gate") for line in out.splitlines())


def test_malformed_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("kind: matrix-system\nrates: nope\n")
    assert run("run", "--config", bad, "--out-dir", tmp_path) == 2
    assert "invalid config" in capsys.readouterr().err
    bad.write_text("kind: matrix-system\nrates: [0.1, 2.0]\nunknown_key: 1\n")
    assert run("run", "--config", bad, "--out-dir", tmp_path) == 2
    bad.write_text("{{{ not yaml")
    assert run("run", "--config", bad, "--out-dir", tmp_path) == 2


def test_missing_file_and_usage(tmp_path):
    assert run("run", "--config", tmp_path / "nope.yaml") == 2
    assert main(["run"]) == 2
    assert main(["frobnicate"]) == 2


def test_verify_roundtrip_and_faults(tmp_path, capsys):
    assert run("run", "--config", CONFIGS / "intro.yaml", "--out-dir", tmp_path, "--quiet") == 0
    cert = tmp_path / "intro" / "certificate.json"
    assert run("verify", "--config", CONFIGS / "intro.yaml", "--certificate", cert) == 0

    data = json.loads(cert.read_text())
    data["stable"][3][0] = [1.0, 0.7]
    bad = tmp_path / "corrupt.json"
    bad.write_text(json.dumps(data))
    capsys.readouterr()
    assert run("verify", "--config", CONFIGS / "intro.yaml", "--certificate", bad) == 1
    assert "FAIL dichotomy item (1) commutation" in capsys.readouterr().out

    three = tmp_path / "three.yaml"
    three.write_text("kind: matrix-system\nsystem: {example: custom, matrices: [[[0.5,0,0],[0,3,0],[0,0,3]]]}\n"
                     "rates: [0.5, 3.0]\n")
    assert run("verify", "--config", three, "--certificate", cert) == 2
    assert "dimension" in capsys.readouterr().err
    assert run("verify", "--config", CONFIGS / "intro.yaml", "--certificate", tmp_path / "absent.json") == 2


def test_quiet(tmp_path, capsys):
    assert run("run", "--config", CONFIGS / "intro.yaml", "--out-dir", tmp_path, "--quiet") == 0
    assert capsys.readouterr().out == ""


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("EXPDICH_OUT_DIR", str(tmp_path / "env"))
    assert run("run", "--config", CONFIGS / "intro.yaml", "--quiet") == 0
    assert (tmp_path / "env" / "intro" / "summary.txt").is_file()


def test_seed_recorded_everywhere(tmp_path):
    assert run("run", "--config", CONFIGS / "avalanche.yaml", "--out-dir", tmp_path, "--seed", "11", "--quiet") == 0
    out = tmp_path / "avalanche"
    for path in out.glob("*.csv"):
        rows = list(csv.reader(path.open()))
        assert rows[0][0] == "seed" and all(r[0] == "11" for r in rows[1:])
    for path in out.glob("*.json"):
        assert json.loads(path.read_text())["seed"] == 11
    assert "seed 11" in (out / "summary.txt").read_text()


def test_csv_full_precision(tmp_path):
    run("run", "--config", CONFIGS / "avalanche.yaml", "--out-dir", tmp_path, "--quiet")
    rows = list(csv.DictReader((tmp_path / "avalanche" / "alignment.csv").open()))
    text = rows[1]["phi_stable_step"]
    assert len(text.replace("0.", "").lstrip("0")) >= 15


def test_sweep(tmp_path, capsys):
    assert run("sweep", "--config", CONFIGS / "avalanche.yaml", "--out-dir", tmp_path) == 0
    rows = list(csv.DictReader((tmp_path / "avalanche-sweep" / "sweep.csv").open()))
    assert [float(r["eta"]) for r in rows] == [0.1, 0.05, 0.025]
    deltas = [float(r["delta"]) for r in rows]
    assert deltas[0] > deltas[1] > deltas[2]
    assert run("sweep", "--config", CONFIGS / "intro.yaml", "--out-dir", tmp_path) == 2
    assert run("sweep", "--config", CONFIGS / "avalanche.yaml", "--out-dir", tmp_path,
               "--param", "eta", "--values", "0.1,0.05") == 0


def test_deterministic_bytes(tmp_path):
    for d in ("a", "b"):
        assert run("run", "--config", CONFIGS / "avalanche.yaml", "--out-dir", tmp_path / d, "--quiet") == 0
    a, b = tmp_path / "a" / "avalanche", tmp_path / "b" / "avalanche"
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_config_helpers(tmp_path):
    cfg, sweep, data = load_config(CONFIGS / "avalanche.yaml")
    assert cfg.kind == "avalanche" and sweep.param == "eta" and "sweep" not in data
    changed = parse_config(with_value(data, "eta", 0.2))
    assert changed.eta == 0.2 and cfg.eta == 0.05
    _, _, kg = load_config(CONFIGS / "klein_gordon.yaml")
    assert with_value(kg, "tracks.0.v0", 0.1)["tracks"][0]["v0"] == 0.1


@pytest.mark.parametrize("bad", [
    {"kind": "backward-heat", "grid": {"x_lo": 0, "x_hi": 1}},
    {"kind": "backward-heat", "grid": {"x_lo": 0, "x_hi": 1, "dx": 0.1, "n_points": 9}},
    {"kind": "klein-gordon"},
    {"kind": "matrix-system", "rates": [0.1, 2.0], "system": {"example": "custom"}},
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        parse_config(bad)


@pytest.mark.parametrize("name", ["backward_heat", "heat_moving_single", "heat_moving_two_wells"])
def test_bundled_heat_configs(tmp_path, name):
    assert run("run", "--config", CONFIGS / f"{name}.yaml", "--out-dir", tmp_path, "--quiet") == 0


@pytest.mark.slow
def test_bundled_klein_gordon_config(tmp_path):
    assert run("run", "--config", CONFIGS / "klein_gordon.yaml", "--out-dir", tmp_path, "--quiet") == 0
