import json

import numpy as np
import pytest
import yaml

from dkplab.config import ConfigError, errors, load_config, validate
from dkplab.grid import build_grid
from dkplab.io import fmt, load_weight_csv, read_csv, sha256, write_csv, write_json

BASE = {"scenario": "S1", "grid": {"n": 1, "h": 0.05, "x_max": 2.0, "t_max": 4.0}, "pole": [0.0, 1.0]}


def write_yaml(tmp_path, cfg, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return p


def test_fmt_roundtrip_and_negative_zero():
    assert fmt(-0.0) == "0"
    assert fmt(np.float64(0.1)) == "0.10000000000000001"
    assert float(fmt(np.pi)) == np.pi
    assert fmt(True) == "1" and fmt(np.int64(3)) == "3" and fmt("x") == "x"


def test_csv_roundtrip(tmp_path):
    rows = np.random.default_rng(0).random((5, 3))
    write_csv(tmp_path / "a.csv", ["a", "b", "c"], rows)
    cols, data = read_csv(tmp_path / "a.csv")
    assert cols == ["a", "b", "c"] and np.array_equal(data, rows)
    with pytest.raises(ValueError, match="fields"):
        write_csv(tmp_path / "b.csv", ["a"], [[1, 2]])


def test_json_and_hash_deterministic(tmp_path):
    obj = {"b": np.arange(3), "a": (1.5, np.float32(2))}
    write_json(tmp_path / "x.json", obj)
    write_json(tmp_path / "y.json", obj)
    assert sha256(tmp_path / "x.json") == sha256(tmp_path / "y.json")
    assert json.loads((tmp_path / "x.json").read_text())["b"] == [0, 1, 2]


def test_weight_csv_import(tmp_path):
    g = build_grid(1, 0.5, 1.0, 1.0)
    y = g.boundary_coords()[..., 0]
    rows = np.column_stack([y, 1 + y ** 2])[::-1]
    write_csv(tmp_path / "w.csv", ["y", "w"], rows)
    w = load_weight_csv(tmp_path / "w.csv", g)
    assert np.allclose(w.density, 1 + y ** 2)
    write_csv(tmp_path / "bad.csv", ["y", "w"], rows[:-1])
    with pytest.raises(ValueError, match="rows"):
        load_weight_csv(tmp_path / "bad.csv", g)
    write_csv(tmp_path / "off.csv", ["y", "w"], rows + [0.1, 0])
    with pytest.raises(ValueError, match="not boundary nodes"):
        load_weight_csv(tmp_path / "off.csv", g)


def test_valid_config_has_no_diagnostics(tmp_path):
    cfg, lines = load_config(write_yaml(tmp_path, BASE))
    assert validate(cfg, lines) == []


def test_yaml_syntax_error_has_line(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("scenario: S1\ngrid: {n: 1, h: 0.05\nseed: 0\n")
    with pytest.raises(ConfigError) as e:
        load_config(p)
    assert e.value.diagnostics[0].line >= 2


@pytest.mark.parametrize("patch,field,level", [
    ({"scenario": "S9"}, "scenario", "error"),
    ({"pole": [0.0, 9.0]}, "pole", "error"),
    ({"pole": [0.0, -1.0]}, "pole", "error"),
    ({"pole": [5.0, 1.0]}, "pole", "error"),
    ({"pole": "infinity"}, "pole", "error"),
    ({"seed": 1.5}, "seed", "error"),
    ({"workers": 0}, "workers", "error"),
    ({"mollifier": "box"}, "mollifier", "error"),
    ({"operator": {"family": "nope"}}, "operator", "error"),
    ({"windows": {"r_top": 0.4, "levels": 4}}, "windows.levels", "warning"),
    ({"windows": {"r_top": 8.0}}, "windows.r_top", "error"),
    ({"colour": "red"}, "colour", "warning"),
    ({"grid": {"n": 1, "h": 0.05, "x_max": 2.0}}, "grid.t_max", "error"),
    ({"grid": {"n": 1, "h": 1e-4, "x_max": 2.0, "t_max": 4.0}}, "grid", "error"),
])
def test_validation_diagnostics(tmp_path, patch, field, level):
    cfg, lines = load_config(write_yaml(tmp_path, {**BASE, **patch}))
    diags = validate(cfg, lines)
    hit = [d for d in diags if d.field == field and d.level == level]
    assert hit, diags
    assert hit[0].line > 0 or field == "grid.t_max"
    assert str(hit[0]).startswith("line ")


def test_s4_eps_must_be_list(tmp_path):
    cfg, lines = load_config(write_yaml(tmp_path, {**BASE, "scenario": "S4", "params": {"eps": 0.1}}))
    assert any(d.field == "params.eps" for d in errors(validate(cfg, lines)))


def test_shipped_configs_validate():
    import pathlib
    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    for p in sorted(root.glob("*.yaml")):
        cfg, lines = load_config(p)
        assert errors(validate(cfg, lines)) == [], p.name
