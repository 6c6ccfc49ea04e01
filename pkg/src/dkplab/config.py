"""Scenario configuration: YAML loading and validation with line numbers."""
from __future__ import annotations

from dataclasses import dataclass

import yaml

from .grid import HalfSpaceGrid

SCENARIOS = {
    "S1": "solver against closed-form Poisson kernel and Green function",
    "S2": "coefficient oscillation and DKP Carleson sweeps",
    "S3": "pole at infinity, Riesz residuals and comparability",
    "S4": "FKP measure of elliptic measure and the epsilon-sweep shape probe",
    "S5": "local energies, beta Carleson norms and the numerator-bound probe",
    "S6": "kernel functions and the change-of-pole check",
    "S7": "graph-domain pullback, square-Dini modulus and surface kernel",
}

TOP_KEYS = {"scenario", "seed", "output", "grid", "operator", "pole", "windows", "mollifier",
            "params", "graph", "workers"}
MOLLIFIERS = ("bump", "gaussian")


@dataclass
class Diagnostic:
    level: str          # "error" | "warning"
    line: int
    field: str
    message: str

    def __str__(self):
        where = f"line {self.line}" if self.line else "line ?"
        return f"{where}: {self.level}: {self.field}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


def _line_map(node, prefix="", out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            key = f"{prefix}[{i}]"
            out[key] = v.start_mark.line + 1
            _line_map(v, key, out)
    return out


def load_config(path):
    """Return ``(config, line_map)``; YAML syntax errors become diagnostics."""
    with open(path) as fh:
        text = fh.read()
    try:
        node = yaml.compose(text)
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise ConfigError([Diagnostic("error", line, "<yaml>", str(getattr(e, "problem", e)))])
    if not isinstance(cfg, dict):
        raise ConfigError([Diagnostic("error", 1, "<root>", "config must be a mapping")])
    return cfg, _line_map(node)


def validate(cfg: dict, lines: dict | None = None) -> list:
    """Schema and cross-field checks.  Returns a list of :class:`Diagnostic`."""
    lines = lines or {}
    diags = []

    def add(level, field, msg):
        key = field
        while key and key not in lines:
            key = key.rsplit(".", 1)[0] if "." in key else ""
        diags.append(Diagnostic(level, lines.get(key, 0), field, msg))

    for k in cfg:
        if k not in TOP_KEYS:
            add("warning", k, f"unknown key (known: {', '.join(sorted(TOP_KEYS))})")
    sc = cfg.get("scenario")
    if sc not in SCENARIOS:
        add("error", "scenario", f"must be one of {', '.join(SCENARIOS)}; got {sc!r}")
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        add("error", "seed", "must be an integer")
    if "workers" in cfg and (not isinstance(cfg["workers"], int) or cfg["workers"] < 1):
        add("error", "workers", "must be a positive integer")

    grid = None
    g = cfg.get("grid")
    if not isinstance(g, dict):
        add("error", "grid", "required mapping with n, h, x_max, t_max")
    else:
        missing = [k for k in ("n", "h", "x_max", "t_max") if k not in g]
        for k in missing:
            add("error", f"grid.{k}", "missing")
        if not missing:
            try:
                grid = HalfSpaceGrid(int(g["n"]), float(g["h"]), float(g["x_max"]), float(g["t_max"]))
            except (ValueError, TypeError) as e:
                add("error", "grid", str(e))

    op = cfg.get("operator", {"family": "identity"})
    if not isinstance(op, dict):
        add("error", "operator", "must be a mapping {family, params}")
    elif grid is not None:
        from .coefficients import make_field
        specs = [op]
        eps = (cfg.get("params") or {}).get("eps")
        if isinstance(eps, list):
            specs = [dict(op, params=dict(op.get("params") or {}, eps=e)) for e in eps]
        for s in specs:
            try:
                make_field(s, grid.n)
            except (ValueError, KeyError, TypeError) as e:
                add("error", "operator", str(e))
                break

    pole = cfg.get("pole")
    if pole is not None and grid is not None:
        if pole == "infinity":
            if grid.t_max < 4 * grid.x_max:
                add("error", "pole", f"pole at infinity needs t_max >= 4 x_max = {4 * grid.x_max}")
        elif not isinstance(pole, list) or len(pole) != grid.n + 1:
            add("error", "pole", f"must be 'infinity' or a list of {grid.n + 1} numbers")
        else:
            t0 = float(pole[-1])
            if t0 <= 0:
                add("error", "pole", f"pole height {t0} must be positive")
            elif t0 > grid.t_max - 2 * grid.h:
                add("error", "pole", f"pole height t0={t0} exceeds t_max={grid.t_max} (minus 2h)")
            if any(abs(float(c)) > grid.x_max - 2 * grid.h for c in pole[:-1]):
                add("error", "pole", "pole lies outside the box (or within 2h of a face)")

    w = cfg.get("windows")
    if w is not None:
        if not isinstance(w, dict) or "r_top" not in w:
            add("error", "windows", "mapping with at least r_top")
        elif grid is not None:
            r_top = float(w["r_top"])
            levels = int(w.get("levels", 1))
            r_min = r_top * 2.0 ** (-(levels - 1))
            if r_top <= 0 or levels < 1:
                add("error", "windows", "r_top must be positive and levels >= 1")
            elif r_min < 4 * grid.h - 1e-12:
                add("warning", "windows.levels",
                    f"smallest window r={r_min:g} is below the minimum resolvable r = 4h = {4 * grid.h:g}")
            if r_top > grid.t_max:
                add("error", "windows.r_top", f"r_top={r_top} exceeds t_max={grid.t_max}")
    moll = cfg.get("mollifier", "bump")
    if moll not in MOLLIFIERS:
        add("error", "mollifier", f"must be one of {MOLLIFIERS}")
    p = cfg.get("params", {})
    if p is not None and not isinstance(p, dict):
        add("error", "params", "must be a mapping")
    if sc == "S4" and isinstance(p, dict) and "eps" in p and not isinstance(p["eps"], list):
        add("error", "params.eps", "S4 expects a list of eps values")
    if sc == "S7" and not isinstance(cfg.get("graph", {}), dict):
        add("error", "graph", "must be a mapping {phi: name, params: {...}}")
    return diags


def errors(diags):
    return [d for d in diags if d.level == "error"]
