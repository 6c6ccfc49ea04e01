"""Scenario runners S1..S7.

Each runner takes a validated config mapping and returns a
:class:`ScenarioResult`: a list of CSV tables plus a JSON-able summary.
Runners never write files themselves; the CLI serializes the result.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .coefficients import dkp_measure, extend_coefficients, local_norm_ratio, make_field
from .energies import (CLAIM_COLUMNS_TAIL, beta_carleson_profile, claim_probe, energy_columns,
                       theorem_probe)
from .graphdomain import (flatten, make_graph, pullback_oscillation_check, square_dini_integral,
                          surface_kernel_report, tilted_poisson_density)
from .grid import DyadicWindowSet, HalfSpaceGrid, ball_measure
from .kernelchange import change_of_pole_vmo_check, kernel_function, kernel_function_infinity
from .solver import (comparability_report, default_riesz_suite, elliptic_measure_density,
                     green_at_infinity, green_function, riesz_residual)
from .weights import Mollifier, fkp_measure


@dataclass
class Table:
    name: str
    columns: list
    rows: list


@dataclass
class ScenarioResult:
    tables: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def add(self, name, columns, rows):
        self.tables.append(Table(name, list(columns), [list(r) for r in rows]))


def _xcols(n, prefix="x"):
    return [prefix] if n == 1 else [f"{prefix}{i + 1}" for i in range(n)]


def build_grid_from(cfg) -> HalfSpaceGrid:
    g = cfg["grid"]
    return HalfSpaceGrid(int(g["n"]), float(g["h"]), float(g["x_max"]), float(g["t_max"]))


def build_windows(cfg, grid, key="windows") -> DyadicWindowSet:
    w = cfg.get(key) or {}
    r_top = float(w.get("r_top", 0.25 * grid.x_max))
    r_min = float(w.get("r_min", 4 * grid.h))
    levels = w.get("levels")
    if levels is None:
        levels = int(math.floor(math.log2(r_top / r_min) + 1e-9)) + 1
    center = w.get("center", 0.0)
    extent = float(w.get("extent", r_top))
    ws = DyadicWindowSet(grid.n, r_top, int(levels), center, extent)
    return ws.subset(ws.r >= 4 * grid.h - 1e-12)


def _pole(cfg, grid, default=None):
    p = cfg.get("pole", default)
    if p is None:
        p = [0.0] * grid.n + [1.0]
    return p if p == "infinity" else np.asarray(p, dtype=float)


def _solution(A, grid, pole):
    """``(u, k)``: Green function and elliptic measure, or ``U`` and ``k_inf``."""
    if isinstance(pole, str):
        res = green_at_infinity(A, grid)
        return res.U, res.k, res
    G = green_function(A, grid, pole)
    k = elliptic_measure_density(A, grid, pole, G=G)
    return G, k, None


def _clock(res, key, t0):
    res.timings[key] = round(time.perf_counter() - t0, 6)


# ---------------------------------------------------------------------------
# closed forms for A = I
# ---------------------------------------------------------------------------

def poisson_kernel(n, X0, y):
    """Half-space Poisson kernel ``c_n t0 / (|y - x0|^2 + t0^2)^{(n+1)/2}``."""
    X0 = np.asarray(X0, dtype=float)
    cn = math.gamma((n + 1) / 2) / math.pi ** ((n + 1) / 2)
    d2 = np.sum((np.asarray(y) - X0[:-1]) ** 2, axis=-1) + X0[-1] ** 2
    return cn * X0[-1] / d2 ** ((n + 1) / 2)


def green_half_space(n, X0, Y):
    """Dirichlet Green function of the Laplacian on the half space (method of images)."""
    X0 = np.asarray(X0, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Xs = X0.copy()
    Xs[-1] = -Xs[-1]
    d = np.sqrt(np.sum((Y - X0) ** 2, axis=-1))
    ds = np.sqrt(np.sum((Y - Xs) ** 2, axis=-1))
    if n == 1:
        return np.log(ds / d) / (2 * math.pi)
    area = 2 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)
    return (d ** (1 - n) - ds ** (1 - n)) / ((n - 1) * area)


# ---------------------------------------------------------------------------
# S1
# ---------------------------------------------------------------------------

def run_s1(cfg, workers=1) -> ScenarioResult:
    grid = build_grid_from(cfg)
    A = make_field(cfg.get("operator", {"family": "identity"}), grid.n)
    if A.family != "identity":
        raise ValueError("S1 compares against closed forms and needs operator.family = identity")
    X0 = _pole(cfg, grid)
    p = cfg.get("params") or {}
    win = float(p.get("window", 1.0))
    res = ScenarioResult()
    t0 = time.perf_counter()
    G = green_function(A, grid, X0)
    k = elliptic_measure_density(A, grid, X0, G=G)
    _clock(res, "solve", t0)
    y = grid.boundary_coords().reshape(-1, grid.n)
    dens = k.density.reshape(-1)
    sel = np.sqrt(np.sum((y - X0[:-1]) ** 2, axis=1)) <= win + 1e-12
    ex = poisson_kernel(grid.n, X0, y[sel])
    rel = np.abs(dens[sel] / ex - 1)
    res.add("poisson_error.csv", _xcols(grid.n, "y") + ["k_numeric", "k_exact", "rel_err"],
            np.column_stack([y[sel], dens[sel], ex, rel]))
    # Green function away from the pole and the artificial faces
    P = grid.node_coords().reshape(-1, grid.dim)
    gap = float(p.get("face_gap", 0.25 * grid.x_max))
    pole_gap = float(p.get("pole_gap", 0.25))
    stride = max(1, int(round(float(p.get("green_pitch", 0.1)) / grid.h)))
    idx = np.indices(grid.shape).reshape(grid.dim, -1).T
    on = np.all(idx % stride == 0, axis=1)
    m = on & (P[:, -1] > 0) & np.all(np.abs(P[:, :-1]) <= grid.x_max - gap, axis=1)
    m &= P[:, -1] <= grid.t_max - gap
    m &= np.sqrt(np.sum((P - X0) ** 2, axis=1)) >= pole_gap
    Gv = G.values.reshape(-1)[m]
    Ge = green_half_space(grid.n, X0, P[m])
    grel = np.abs(Gv / Ge - 1)
    res.add("green_error.csv", _xcols(grid.n, "y") + ["s", "G_numeric", "G_exact", "rel_err"],
            np.column_stack([P[m], Gv, Ge, grel]))
    res.summary = {"max_rel_err": float(rel.max()), "green_max_rel_err": float(grel.max()),
                   "total_mass": k.total_mass, "escaped_mass": k.escaped_mass,
                   "window": win, "pole": X0.tolist()}
    return res


# ---------------------------------------------------------------------------
# S2
# ---------------------------------------------------------------------------

def _dkp_tables(res, meas, grid, prefix=""):
    n = grid.n
    rows = [q.row() for q in meas.reports]
    res.add(f"{prefix}dkp_table.csv", _xcols(n) + ["r", "alpha2", "alphaInf", "alphaTilde", "gamma"], rows)
    r0s = np.unique(meas.windows.r)[::-1]
    prof = meas.trace_profile(r0s)
    gprof = meas.variants["gamma2"].trace_profile(r0s)
    res.add(f"{prefix}carleson_profile.csv", ["r0", "alpha2_trace", "gamma2_trace"],
            np.column_stack([r0s, prof, gprof]))


def run_s2(cfg, workers=1) -> ScenarioResult:
    grid = build_grid_from(cfg)
    A = make_field(cfg.get("operator", {"family": "identity"}), grid.n)
    ws = build_windows(cfg, grid)
    ws = ws.subset(ws.resolvable(grid))
    res = ScenarioResult()
    t0 = time.perf_counter()
    meas = dkp_measure(A, ws, grid, workers)
    _clock(res, "dkp", t0)
    _dkp_tables(res, meas, grid)
    c = ws.center
    R = ws.r_top
    ratios = [q.alpha2 / (2 * q.gamma) if q.gamma > 0 else (0.0 if q.alpha2 == 0 else np.inf)
              for q in meas.reports]
    summ = {"windows": len(ws), "global_norm": meas.global_norm(),
            "gamma2_global_norm": meas.variants["gamma2"].global_norm(),
            "local_norm": meas.local_norm(c, R), "max_alpha2_over_2gamma": float(max(ratios)),
            "local_norm_ratio": local_norm_ratio(meas, c, R / 3)}
    p = cfg.get("params") or {}
    ext = p.get("extension")
    if ext:
        x0 = np.asarray(ext.get("x0", [0.0] * grid.n), dtype=float)
        R0 = float(ext["R0"])
        At = extend_coefficients(A, x0, R0, grid, c=float(ext.get("c", 0.01)))
        spec = At.extension
        rng = np.random.default_rng(int(cfg.get("seed", 0)))
        m = int(ext.get("samples", 1000))
        half = spec.R / 2
        pts = np.column_stack([x0 + half * (2 * rng.random((m, grid.n)) - 1), half * rng.random(m)])
        pts = pts[np.sum((pts[:, :-1] - x0) ** 2, axis=1) < half * half]
        agree = bool(np.array_equal(At(pts), A(pts)))
        out = np.column_stack([x0 + 4 * spec.R * (2 * rng.random((m, grid.n)) - 1),
                               spec.R + 4 * spec.R * rng.random(m)])
        const_out = bool(np.all(At(out) == spec.A0))
        wt = ws.subset(ws.resolvable(grid))
        mt = dkp_measure(At, wt, grid, workers)
        N = meas.local_norm(x0, R0) if np.all(np.abs(x0) + R0 <= grid.x_max) else meas.global_norm()
        bound = N + min(1.0, N ** (4.0 / (grid.n + 3))) if N > 0 else 0.0
        glob = mt.global_norm()
        _dkp_tables(res, mt, grid, prefix="extended_")
        summ["extension"] = {**spec.to_dict(), "agreement_points": int(len(pts)), "bit_exact": agree,
                             "constant_outside": const_out, "global_norm": glob,
                             "local_norm_A": N, "bound_shape": bound,
                             "ratio": glob / bound if bound > 0 else (0.0 if glob == 0 else np.inf)}
    res.summary = summ
    return res


# ---------------------------------------------------------------------------
# S3
# ---------------------------------------------------------------------------

def run_s3(cfg, workers=1) -> ScenarioResult:
    grid = build_grid_from(cfg)
    A = make_field(cfg.get("operator", {"family": "identity"}), grid.n)
    p = cfg.get("params") or {}
    res = ScenarioResult()
    t0 = time.perf_counter()
    inf = green_at_infinity(A, grid, tol=float(p.get("tol", 1e-3)))
    _clock(res, "pole_at_infinity", t0)
    res.add("infinity_history.csv", ["k", "pole_height", "rel_sup_diff"],
            [[h["k"], h["pole_height"], h["rel_sup_diff"]] for h in inf.history])
    suite = default_riesz_suite(grid.n, float(p.get("s_cut", 0.5)),
                                tuple(p.get("riesz_centers", (-0.5, 0.0, 0.5))),
                                tuple(p.get("riesz_widths", (0.2, 0.4))))
    rz = riesz_residual(A, inf.U, inf.k, suite, pole="infinity")
    res.add("riesz.csv", _xcols(grid.n, "c") + ["width", "lhs", "rhs", "rel"],
            [r["center"] + [r["width"], r["lhs"], r["rhs"], r["rel"]] for r in rz.rows])
    ws = build_windows(cfg, grid)
    ok = np.all(np.abs(ws.x) + 2 * ws.r[:, None] <= grid.x_max, axis=1)
    rows, summ = comparability_report(A, grid, "infinity", ws.subset(ok), G=inf.U, k=inf.k)
    keys = ("cfms", "energy", "doubling", "energy_measure", "harnack")
    res.add("comparability.csv", _xcols(grid.n) + ["r", *keys], [r["x"] + [r["r"]] + [r[k] for k in keys]
                                                                  for r in rows])
    res.summary = {"converged": inf.converged, "k_used": inf.k_used, "riesz_max_rel": rz.max_rel,
                   "comparability": {k: list(v) for k, v in summ.items()},
                   "U_at_probe": float(inf.U(np.r_[np.zeros(grid.n), 0.5]))}
    return res


# ---------------------------------------------------------------------------
# S4
# ---------------------------------------------------------------------------

def _eps_fields(cfg, n):
    op = dict(cfg.get("operator") or {"family": "dkp-family"})
    eps = (cfg.get("params") or {}).get("eps", [(op.get("params") or {}).get("eps", 0.1)])
    return [(float(e), make_field(dict(op, params=dict(op.get("params") or {}, eps=e)), n)) for e in eps]


def run_s4(cfg, workers=1) -> ScenarioResult:
    grid = build_grid_from(cfg)
    p = cfg.get("params") or {}
    pole = _pole(cfg, grid)
    moll = Mollifier(grid.n, cfg.get("mollifier", "bump"))
    ws = build_windows(cfg, grid)
    R = float(p.get("R", ws.r_top))
    center = ws.center
    taus = [float(t) for t in p.get("taus", [1.0, 0.5, 0.25])]
    r0s = [float(r) for r in p.get("r0", [R / 4, R / 16, R / 64])]
    res = ScenarioResult()
    norm_rows, trace_rows, dens_rows = [], [], []
    summ = {"eps": [], "R": R, "taus": taus, "r0": r0s}
    for eps, A in _eps_fields(cfg, grid.n):
        t0 = time.perf_counter()
        _, k, _ = _solution(A, grid, pole)
        nu = fkp_measure(k, moll, ws)
        _clock(res, f"eps={eps:g}", t0)
        norms = [nu.local_norm(center, t * R) for t in taus]
        trace = nu.trace_profile(r0s, centers=(center, R)).tolist()
        for t, v in zip(taus, norms):
            norm_rows.append([eps, t, v])
        for r0, v in zip(r0s, trace):
            trace_rows.append([eps, r0, v])
        if grid.n == 1:
            dens_rows += [[eps, *row] for row in nu.rows()]
        summ["eps"].append({"eps": eps, "nu_norms": norms, "trace": trace,
                            "trace_drop": trace[0] / trace[-1] if trace[-1] > 0 else np.inf,
                            "windows": len(nu.windows), "total_mass": k.total_mass})
    res.add("nu_norm.csv", ["eps", "tau", "nu_norm"], norm_rows)
    res.add("nu_trace.csv", ["eps", "r0", "nu_trace"], trace_rows)
    if dens_rows:
        res.add("nu_density.csv", ["eps", "x", "r", "density"], dens_rows)
    by_tau = {t: [r[2] for r in norm_rows if r[1] == t] for t in taus}
    summ["nondecreasing_in_eps"] = {str(t): bool(np.all(np.diff(v) >= 0)) for t, v in by_tau.items()}
    res.summary = summ
    return res


# ---------------------------------------------------------------------------
# S5
# ---------------------------------------------------------------------------

def run_s5(cfg, workers=1) -> ScenarioResult:
    grid = build_grid_from(cfg)
    A = make_field(cfg.get("operator", {"family": "identity"}), grid.n)
    pole = _pole(cfg, grid)
    p = cfg.get("params") or {}
    res = ScenarioResult()
    t0 = time.perf_counter()
    u, k, _ = _solution(A, grid, pole)
    _clock(res, "solve", t0)
    ws = build_windows(cfg, grid)
    ws = ws.subset(ws.resolvable(grid))
    pl = None if isinstance(pole, str) else pole
    if pl is not None:
        d2 = np.sum((ws.x - pl[:-1]) ** 2, axis=1) + pl[-1] ** 2
        ws = ws.subset(d2 > (2 * ws.r + 2 * grid.h) ** 2)
    beta = beta_carleson_profile(u, ws, pl, workers)
    dkp = dkp_measure(A, ws, grid, workers)
    res.add("energies.csv", energy_columns(grid.n), [q.row() for q in beta.records])
    R = float(p.get("R", ws.r_top))
    taus = [float(t) for t in p.get("taus", [1.0, 0.5, 0.25, 0.125])]
    fit = theorem_probe(beta, dkp, ws.center, R, taus)
    res.add("beta_norms.csv", ["tau", "beta_norm"], np.column_stack([fit.tau, fit.norms]))
    summ = {"eta": fit.eta, "eta_residual": fit.residual, "intercept": fit.intercept,
            "dkp_norm": fit.dkp_norm, "beta_global_norm": beta.global_norm(),
            "max_beta_i_minus_beta": float(max(max(q.beta_i) - q.beta for q in beta.records)),
            "max_J_identity_err": float(max(abs(q.J - (q.E - q.lam ** 2)) for q in beta.records))}
    if p.get("claim", True):
        moll = Mollifier(grid.n, cfg.get("mollifier", "bump"))
        ok = np.all(np.abs(ws.x) + np.maximum(2, moll.support) * ws.r[:, None] <= grid.x_max, axis=1)
        ok &= 2 * ws.r <= grid.t_max
        if pl is not None:
            d2 = np.sum((ws.x - pl[:-1]) ** 2, axis=1) + pl[-1] ** 2
            ok &= d2 > (2 * ws.r + 2 * grid.h) ** 2
        cws = ws.subset(ok)
        t0 = time.perf_counter()
        cp = claim_probe(A, u, k, moll, cws, pole=pl, workers=workers)
        _clock(res, "claim", t0)
        res.add("claim.csv", _xcols(grid.n) + CLAIM_COLUMNS_TAIL, [r.row() for r in cp.rows])
        summ["claim_max_ratio"] = cp.max_ratio
        summ["claim_max_density_ratio"] = cp.max_density_ratio
    res.summary = summ
    return res


# ---------------------------------------------------------------------------
# S6
# ---------------------------------------------------------------------------

def run_s6(cfg, workers=1) -> ScenarioResult:
    grid = build_grid_from(cfg)
    A = make_field(cfg.get("operator", {"family": "identity"}), grid.n)
    X0 = _pole(cfg, grid)
    p = cfg.get("params") or {}
    n = grid.n
    res = ScenarioResult()
    summ = {}
    win = p.get("window", {"center": [0.0] * n, "radius": 1.0})
    window = (np.asarray(win["center"], dtype=float), float(win["radius"]))
    G0 = green_function(A, grid, X0)
    if "X1" in p:
        X1 = np.asarray(p["X1"], dtype=float)
        kf = kernel_function(A, grid, X0, X1, window, strict=False, G0=G0)
        res.add("kernel.csv", _xcols(n, "z") + ["H", "band_low", "band_high"], kf.rows())
        summ["kernel"] = {"stability": kf.stability, "band_constant": kf.band_constant}
        if A.family == "identity":
            ex = poisson_kernel(n, X0, kf.z) / poisson_kernel(n, X1, kf.z)
            summ["kernel"]["poisson_ratio_max_rel_err"] = float(np.max(np.abs(kf.H / ex - 1)))
    t0 = time.perf_counter()
    inf = green_at_infinity(A, grid, strict=bool(p.get("strict_infinity", True)))
    _clock(res, "pole_at_infinity", t0)
    kappa = float(p.get("kappa", 4.0))
    iw = p.get("inf_window")
    iwin = None if iw is None else (np.asarray(iw["center"], dtype=float), float(iw["radius"]))
    ki = kernel_function_infinity(A, grid, X0, inf, kappa, iwin, strict=False, G0=G0)
    res.add("kernel_inf.csv", _xcols(n, "z") + ["H", "band_low", "band_high"], ki.rows())
    summ["kernel_inf"] = {"stability": ki.stability, "C_kappa": ki.band_constant, "kappa": kappa,
                          "reference": ki.meta["reference"], "radon_nikodym": ki.meta["radon_nikodym"],
                          "holder": ki.meta.get("holder")}
    if A.family == "identity":
        # U = s, so k_inf = 1 and H_inf is the Poisson kernel itself
        ex = poisson_kernel(n, X0, ki.z)
        summ["kernel_inf"]["poisson_max_rel_err"] = float(np.max(np.abs(ki.H / ex - 1)))
    Rv = float(p.get("R", 0.5))
    radii = [float(r) for r in p.get("radii", [Rv / 2, Rv / 4, Rv / 8, Rv / 16])]
    rep = change_of_pole_vmo_check(ki.meta["k_X0"], inf.k, X0, Rv, float(p.get("eps_target", 0.05)),
                                   radii, ki.meta.get("holder"))
    res.add("change_of_pole.csv", _xcols(n) + ["r", "rh_k0", "rh_kinf", "osc_H"],
            [r["x"] + [r["r"], r["rh_k0"], r["rh_kinf"], r["osc_H"]] for r in rep.rows])
    summ["change_of_pole"] = {"r0": rep.r0, "r1": rep.r1, "r2": rep.r2, "max_violation": rep.max_violation,
                              "profile_k0": rep.profile("rh_k0", radii).tolist(),
                              "profile_kinf": rep.profile("rh_kinf", radii).tolist(), "radii": radii}
    res.summary = summ
    return res


# ---------------------------------------------------------------------------
# S7
# ---------------------------------------------------------------------------

def run_s7(cfg, workers=1) -> ScenarioResult:
    grid = build_grid_from(cfg)
    n = grid.n
    A = make_field(cfg.get("operator", {"family": "identity"}), n)
    graph = make_graph(cfg.get("graph") or {"phi": "flat"}, n)
    p = cfg.get("params") or {}
    res = ScenarioResult()
    ws = build_windows(cfg, grid)
    ws = ws.subset(ws.resolvable(grid))
    theta = graph.theta(grid.x_max, grid.h, float(p.get("r_star", 1.0)))
    res.add("theta.csv", ["r", "theta"], np.column_stack([theta.r, theta.theta]))
    dini = square_dini_integral(theta, float(p.get("r_star", 1.0)))
    rows = pullback_oscillation_check(A, graph, ws, grid, theta, workers)
    res.add("pullback.csv", _xcols(n) + ["r", "alpha_B2", "alpha_A2", "theta2", "ratio"],
            [r.row() for r in rows])
    summ = {"dini": dini.__dict__, "max_ratio": float(max(r.ratio for r in rows)),
            "grad_bound": graph.grad_bound(grid.x_max, grid.h)}
    fo = flatten(graph, A, grid.x_max, grid.h)
    pole = _pole(cfg, grid)
    t0 = time.perf_counter()
    _, k, _ = _solution(fo.B, grid, pole)
    _clock(res, "solve", t0)
    y = grid.boundary_coords().reshape(-1, n)
    win = float(p.get("window", 1.0))
    sel = np.sqrt(np.sum(y ** 2, axis=1)) <= win + 1e-12
    if graph.name == "tilted" and A.family == "identity" and n == 1:
        X0 = fo.graph(np.asarray(pole[:-1]).reshape(1, -1))[0] + pole[-1]
        ex = tilted_poisson_density(graph.params["slope"], [pole[0], X0], y[sel, 0])
        kv = k.density.reshape(-1)[sel]
        rel = np.abs(kv / ex - 1)
        res.add("tilted.csv", ["y", "k_numeric", "k_exact", "rel_err"], np.column_stack([y[sel], kv, ex, rel]))
        summ["tilted_max_rel_err"] = float(rel.max())
    r0s = [float(r) for r in p.get("r0", [win / 2, win / 4, win / 8, win / 16])]
    kw = DyadicWindowSet(n, r0s[0], len(r0s), 0.0, win / 2)
    rep = surface_kernel_report(k, graph, kw, r0s)
    res.add("surface_kernel.csv", ["r0", "log_k", "log_k_omega", "correction"],
            np.column_stack([rep["r0"], rep["log_k"], rep["log_k_omega"], rep["correction"]]))
    summ["lam_B_estimate"] = fo.B.ellipticity(grid)
    summ["lam_B_bound"] = fo.lam_bound(summ["grad_bound"], A.lam if A.lam is not None else A.ellipticity(grid))
    res.summary = summ
    return res


RUNNERS = {"S1": run_s1, "S2": run_s2, "S3": run_s3, "S4": run_s4, "S5": run_s5, "S6": run_s6,
           "S7": run_s7}

__all__ = ["RUNNERS", "ScenarioResult", "Table", "poisson_kernel", "green_half_space", "ball_measure"]
