import json
import subprocess
import sys

import pytest
import yaml

from dkplab import __version__
from dkplab.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, WORKERS_ENV, main

SMALL = {"scenario": "S1", "seed": 3, "grid": {"n": 1, "h": 0.05, "x_max": 2.0, "t_max": 4.0},
         "operator": {"family": "identity"}, "pole": [0.0, 1.0], "params": {"window": 1.0}}


def cfg_file(tmp_path, cfg=SMALL, name="small.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return str(p)


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in out] == [f"S{i}" for i in range(1, 8)]


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0 and __version__ in capsys.readouterr().out


def test_validate_ok(tmp_path, capsys):
    assert main(["validate", cfg_file(tmp_path)]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "ok"


def test_validate_pole_above_box(tmp_path, capsys):
    p = cfg_file(tmp_path, {**SMALL, "pole": [0.0, 9.0]})
    assert main(["validate", p]) == EXIT_INVALID
    out = capsys.readouterr().out
    line = open(p).read().splitlines().index("pole:") + 1
    assert "t0=9.0 exceeds t_max=4.0" in out and f"line {line}:" in out


def test_validate_small_window_warns(tmp_path, capsys):
    p = cfg_file(tmp_path, {**SMALL, "windows": {"r_top": 0.4, "levels": 3}})
    assert main(["validate", p]) == EXIT_OK
    assert "warning" in capsys.readouterr().out


def test_run_rejects_invalid(tmp_path, capsys):
    p = cfg_file(tmp_path, {**SMALL, "scenario": "S0"})
    assert main(["run", p, "-o", str(tmp_path / "o")]) == EXIT_INVALID
    assert not (tmp_path / "o").exists()


def test_run_yaml_error(tmp_path):
    p = tmp_path / "broken.yaml"
    p.write_text("scenario: [S1\n")
    assert main(["run", str(p)]) == EXIT_INVALID


def test_run_missing_file(tmp_path):
    assert main(["run", str(tmp_path / "missing.yaml")]) == EXIT_RUNTIME
    assert main(["validate", str(tmp_path / "missing.yaml")]) == EXIT_RUNTIME


def test_run_runtime_error(tmp_path, capsys):
    # S6 without a tall box cannot build the pole at infinity
    p = cfg_file(tmp_path, {**SMALL, "scenario": "S6"})
    assert main(["run", p, "-o", str(tmp_path / "o")]) == EXIT_RUNTIME
    assert "scenario S6" in capsys.readouterr().err


def test_bad_worker_env(tmp_path, monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "zero")
    assert main(["run", cfg_file(tmp_path), "-o", str(tmp_path / "o")]) == EXIT_INVALID
    monkeypatch.setenv(WORKERS_ENV, "0")
    assert main(["run", cfg_file(tmp_path), "-o", str(tmp_path / "o")]) == EXIT_INVALID


def test_run_outputs_and_manifest(tmp_path, monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "2")
    out = tmp_path / "run"
    assert main(["run", cfg_file(tmp_path), "-o", str(out)]) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["scenario"] == "S1" and man["workers"] == 2 and man["version"] == __version__
    assert man["config"]["seed"] == 3
    names = {f["name"] for f in man["files"]}
    assert {"poisson_error.csv", "green_error.csv", "summary.json", "config.json"} <= names
    for f in man["files"]:
        assert (out / f["name"]).stat().st_size == f["bytes"] and len(f["sha256"]) == 64


def test_workers_flag_beats_env(tmp_path, monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "2")
    out = tmp_path / "run"
    assert main(["run", cfg_file(tmp_path), "-o", str(out), "-w", "1"]) == EXIT_OK
    assert json.loads((out / "manifest.json").read_text())["workers"] == 1


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    p = cfg_file(tmp_path)
    assert main(["run", p, "-o", str(a)]) == EXIT_OK
    assert main(["run", p, "-o", str(b)]) == EXIT_OK
    for f in a.glob("*.csv"):
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "dkplab", "validate", cfg_file(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "ok"
