"""Kernel functions between elliptic measures and the change-of-pole check.

A kernel function is the density of one elliptic measure with respect to
another.  On the grid the boundary limit of a Green-function quotient is
0/0, so it is read off at height ``delta = 2h`` and compared with the
quotient at ``2 delta``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fields import BoundaryWeight, DiscreteField
from .solver import InfinityResult, elliptic_measure_density, green_function
from .weights import reverse_holder_ratio

log = logging.getLogger(__name__)

STABILITY_TOL = 0.05


class QuotientNotStabilized(RuntimeError):
    pass


@dataclass
class KernelFunction:
    """Boundary values of a kernel function on a window.

    Attributes
    ----------
    z : ndarray, shape (m, n)
        Boundary nodes in the window.
    H : ndarray
        Quotient at height ``delta``.
    H_2delta : ndarray
        Quotient at ``2 delta`` (stabilization check).
    band : tuple
        ``(low, high)`` reference band; ``C`` is the smallest constant with
        ``band_ref / C <= H <= C band_ref``.
    """

    z: np.ndarray
    H: np.ndarray
    H_2delta: np.ndarray
    poles: tuple
    delta: float
    band_ref: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def stability(self) -> float:
        return float(np.max(np.abs(self.H - self.H_2delta) / np.abs(self.H)))

    @property
    def band_constant(self) -> float:
        q = self.H / self.band_ref
        return float(max(q.max(), 1.0 / q.min()))

    @property
    def band(self):
        C = self.band_constant
        return float(np.min(self.band_ref) / C), float(np.max(self.band_ref) * C)

    def rows(self):
        lo, hi = self.band
        return np.column_stack([self.z, self.H, np.full(len(self.H), lo), np.full(len(self.H), hi)])

    def __call__(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if self.z.shape[1] != 1:
            raise NotImplementedError("interpolation only for n = 1")
        return np.interp(z[:, 0], self.z[:, 0], self.H)


def _window_nodes(grid, center, radius):
    c = np.atleast_1d(np.asarray(center, dtype=float))
    pts = grid.boundary_coords().reshape(-1, grid.n)
    m = np.sum((pts - c) ** 2, axis=1) <= radius * radius * (1 + 1e-12)
    if np.any(np.abs(c) + radius > grid.x_max + 1e-12):
        raise ValueError(f"window Δ({tuple(c)}, {radius}) leaves the truncated boundary")
    return pts[m]


def _quotient(num: DiscreteField, den: DiscreteField, z, delta):
    Z = np.column_stack([z, np.full(len(z), delta)])
    a, b = num(Z), den(Z)
    if np.any(b <= 0) or np.any(a <= 0):
        raise ValueError("nonpositive Green values on the evaluation layer")
    return a / b


def _stable(kf: KernelFunction, strict):
    s = kf.stability
    if s > STABILITY_TOL:
        msg = f"kernel quotient not stabilized: |H_d - H_2d|/H_d = {s:.3g} > {STABILITY_TOL}"
        if strict:
            raise QuotientNotStabilized(msg)
        log.warning(msg)
    return kf


def kernel_function(A, grid, X0, X1, window, lateral_policy="farfield", delta=None,
                    strict=True, G0=None, G1=None) -> KernelFunction:
    """``H(X0, X1, z)`` as the Green quotient ``G(X0, (z, delta)) / G(X1, (z, delta))``.

    Parameters
    ----------
    window : tuple
        ``(center, radius)`` of the boundary window.
    delta : float, optional
        Evaluation height, default ``2h``.

    Notes
    -----
    The reference band is the quotient at height ``t' = min(t0, t1)/10``.
    """
    X0, X1 = np.asarray(X0, dtype=float), np.asarray(X1, dtype=float)
    delta = 2 * grid.h if delta is None else delta
    tp = min(X0[-1], X1[-1]) / 10
    if tp < delta:
        raise ValueError(f"poles too low for the window geometry (t' = {tp} < delta = {delta})")
    z = _window_nodes(grid, *window)
    if np.array_equal(X0, X1):
        one = np.ones(len(z))
        return KernelFunction(z, one, one, (X0.tolist(), X1.tolist()), delta, one,
                              {"t_prime": tp})
    G0 = G0 if G0 is not None else green_function(A, grid, X0, lateral_policy)
    G1 = G1 if G1 is not None else green_function(A, grid, X1, lateral_policy)
    H = _quotient(G0, G1, z, delta)
    H2 = _quotient(G0, G1, z, 2 * delta)
    ref = _quotient(G0, G1, z, tp)
    kf = KernelFunction(z, H, H2, (X0.tolist(), X1.tolist()), delta, ref, {"t_prime": tp})
    return _stable(kf, strict)


@dataclass
class HolderFit:
    exponent: float
    constant: float
    residual: float
    pairs: int


def holder_regression(kf: KernelFunction, t0, scale):
    """Fit ``|H(z) - H(z')| / scale ~ C (|z - z'|/t0)^gamma`` over pairs with ``|z - z'| < t0/4``.

    Pairs are taken at dyadic lags along the node ordering.
    """
    z, H = kf.z, kf.H
    xs, ys = [], []
    h = np.min(np.abs(np.diff(z[:, 0]))) if len(z) > 1 else 1.0
    lag = 1
    while lag * h < t0 / 4 and lag < len(z):
        d = np.sqrt(np.sum((z[lag:] - z[:-lag]) ** 2, axis=1))
        dh = np.abs(H[lag:] - H[:-lag]) / scale
        keep = (d < t0 / 4) & (dh > 0)
        if keep.any():
            xs.append(np.log(d[keep][0] / t0))
            ys.append(np.log(dh[keep].max()))
        lag *= 2
    if len(xs) < 2:
        return HolderFit(np.nan, np.nan, np.nan, len(xs))
    M = np.column_stack([np.ones(len(xs)), xs])
    coef, *_ = np.linalg.lstsq(M, np.array(ys), rcond=None)
    res = float(np.sqrt(np.mean((M @ coef - np.array(ys)) ** 2)))
    return HolderFit(float(coef[1]), float(np.exp(coef[0])), res, len(xs))


def kernel_function_infinity(A, grid, X0, inf: InfinityResult, kappa=4.0, window=None,
                             lateral_policy="farfield", delta=None, strict=True,
                             G0: Optional[DiscreteField] = None) -> KernelFunction:
    """``H_inf(X0, z)`` as the quotient ``G(X0, (z, delta)) / U(z, delta)``.

    The default window is ``Δ(x0, 5 kappa t0)``.  The band reference is the
    constant ``G(X0, (x0, t0/4)) / U(X0)``, so ``band_constant`` is the
    empirical ``C_kappa``.  ``meta`` also carries the Radon-Nikodym check
    and the Hölder regression.
    """
    if inf is None:
        raise ValueError("kernel function at infinity needs the pole-at-infinity solution")
    U = inf.U
    if U.grid != grid:
        raise ValueError("U lives on a different grid")
    X0 = np.asarray(X0, dtype=float)
    x0, t0 = X0[:-1], X0[-1]
    if window is None:
        window = (x0, 5 * kappa * t0)
    delta = 2 * grid.h if delta is None else delta
    z = _window_nodes(grid, *window)
    G0 = G0 if G0 is not None else green_function(A, grid, X0, lateral_policy)
    H = _quotient(G0, U, z, delta)
    H2 = _quotient(G0, U, z, 2 * delta)
    B = float(G0(np.r_[x0, t0 / 4])) / float(U(X0))
    kf = KernelFunction(z, H, H2, (X0.tolist(), "infinity"), delta, np.full(len(z), B),
                        {"kappa": kappa, "reference": B})
    kf = _stable(kf, strict)
    # Radon-Nikodym: int_window H dω_inf against ω^{X0}(window)
    k0 = elliptic_measure_density(A, grid, X0, G=G0, lateral_policy=lateral_policy)
    c = np.atleast_1d(np.asarray(window[0], dtype=float))
    pts = grid.boundary_coords().reshape(-1, grid.n)
    inside = np.sum((pts - c) ** 2, axis=1) <= window[1] ** 2 * (1 + 1e-12)
    m_inf = inf.k.node_masses().reshape(-1)[inside]
    m_0 = k0.node_masses().reshape(-1)[inside]
    lhs = float(np.sum(kf.H * m_inf))
    rhs = float(np.sum(m_0))
    kf.meta["radon_nikodym"] = {"int_H_domega_inf": lhs, "omega_X0": rhs, "rel_err": abs(lhs - rhs) / rhs}
    if grid.n == 1:
        fit = holder_regression(kf, t0, B)
        kf.meta["holder"] = fit.__dict__
    kf.meta["k_X0"] = k0
    return kf


def ratio_symmetry(A, grid, X0, X1, window, **kw) -> float:
    """``max |H(X0, X1) H(X1, X0) - 1|`` on the window."""
    a = kernel_function(A, grid, X0, X1, window, **kw)
    b = kernel_function(A, grid, X1, X0, window, **kw)
    return float(np.max(np.abs(a.H * b.H - 1.0)))


def comparison_band(u: DiscreteField, v: DiscreteField, x, r):
    """Spread of ``(u/v) / (u/v)(x, r)`` over the nodes of ``T(x, r)`` away from the boundary.

    Returns ``(min, max)``; the comparison principle says both are bounded.
    """
    grid = u.grid
    P = grid.node_coords()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d2 = np.sum((P[..., :-1] - x) ** 2, axis=-1) + P[..., -1] ** 2
    m = (d2 < r * r) & (P[..., -1] >= 2 * grid.h)
    q = u.values[m] / v.values[m]
    ref = float(u(np.r_[x, r])) / float(v(np.r_[x, r]))
    return float(q.min() / ref), float(q.max() / ref)


@dataclass
class ChangeOfPoleReport:
    rows: list
    r0: float
    r1: float
    r2: float
    holder: dict
    max_violation: float

    def profile(self, key, r0_values):
        out = []
        for r0 in r0_values:
            v = [row[key] for row in self.rows if row["r"] <= r0 * (1 + 1e-12)]
            out.append(max(v) if v else np.nan)
        return np.array(out)


def change_of_pole_vmo_check(k0: BoundaryWeight, kinf: BoundaryWeight, X0, R, eps_target,
                             radii, holder=None, centers=None) -> ChangeOfPoleReport:
    """Reverse-Hölder ratios of ``k^{X0}``, ``k_inf`` and the kernel oscillation on balls in ``Δ(0, R)``.

    The kernel is ``H = k^{X0} / k_inf`` at boundary cells, so the
    factorization ``RH(k^{X0}) <= (sup H / inf H) RH(k_inf)`` is checked
    ball by ball; ``max_violation`` is the largest excess (should be <= 0).

    Parameters
    ----------
    radii : sequence of float
        Ball radii to test.
    holder : dict, optional
        ``{"constant": C, "exponent": gamma}`` from :func:`holder_regression`,
        used for the ``r2`` threshold.
    """
    grid = k0.grid
    n = grid.n
    X0 = np.asarray(X0, dtype=float)
    t0 = X0[-1]
    radii = sorted(float(r) for r in radii)
    if centers is None:
        step = max(radii[0], grid.h)
        m = int(np.floor(R / step))
        line = step * np.arange(-m, m + 1)
        centers = np.stack(np.meshgrid(*([line] * n), indexing="ij"), axis=-1).reshape(-1, n)
        centers = centers[np.sqrt(np.sum(centers ** 2, axis=1)) <= R + 1e-12]
    rows = []
    worst = -np.inf
    for r in radii:
        for c in centers:
            if np.any(np.abs(c) + r > grid.x_max):
                continue
            a = reverse_holder_ratio(k0, 2, [(c, r)])
            b = reverse_holder_ratio(kinf, 2, [(c, r)])
            v0, vi = k0.ball_values(c, r), kinf.ball_values(c, r)
            if np.any(v0 <= 0) or np.any(vi <= 0):
                raise ValueError("kernels must be positive on the tested balls")
            hv = v0 / vi
            osc = float(hv.max() / hv.min())
            worst = max(worst, a - osc * b)
            rows.append({"x": list(c), "r": r, "rh_k0": a, "rh_kinf": b, "osc_H": osc})
    eps = eps_target
    r1 = 0.0
    for r in radii:
        if max(row["rh_kinf"] for row in rows if row["r"] <= r) <= 1 + eps:
            r1 = r
    r2 = np.nan
    if holder and np.isfinite(holder.get("constant", np.nan)) and holder.get("exponent", 0) > 0:
        C, g = holder["constant"], holder["exponent"]
        r2 = min(t0 / 4, 0.5 * t0 * (eps / C) ** (1.0 / g))
    r0 = min(r1, r2 if np.isfinite(r2) else np.inf, 9 * R)
    return ChangeOfPoleReport(rows, float(r0), float(r1), float(r2), dict(holder or {}), float(worst))
