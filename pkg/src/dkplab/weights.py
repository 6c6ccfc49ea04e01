"""Boundary-weight analytics: doubling, A-infinity, reverse Hölder, BMO/VMO,
the FKP measure and the heat-smoothing construction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .carleson import DyadicCarlesonMeasure
from .fields import BoundaryWeight
from .grid import DyadicWindowSet
from .solver import dsmoothstep, smoothstep

LOG_FLOOR = 1e-300


class Mollifier:
    """Radial bump ``phi`` (quintic smoothstep on ``[1/2, 1]``) or Gaussian ``pi^{-n/2} e^{-|x|^2}``.

    Parameters
    ----------
    n : int
    variant : {"bump", "gaussian"}
    """

    def __init__(self, n, variant="bump"):
        if variant not in ("bump", "gaussian"):
            raise ValueError(f"unknown mollifier variant {variant!r}")
        self.n = int(n)
        self.variant = variant

    @property
    def support(self) -> float:
        """Radius beyond which the profile is treated as zero."""
        return 1.0 if self.variant == "bump" else 6.0

    def phi(self, x):
        rho = np.sqrt(np.sum(np.asarray(x) ** 2, axis=-1))
        if self.variant == "bump":
            return 1.0 - smoothstep(2.0 * rho - 1.0)
        return np.pi ** (-self.n / 2) * np.exp(-rho * rho)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        rho = np.sqrt(np.sum(x * x, axis=-1))
        if self.variant == "bump":
            d = -2.0 * dsmoothstep(2.0 * rho - 1.0)
            with np.errstate(invalid="ignore", divide="ignore"):
                fac = np.where(rho > 0, d / rho, 0.0)
            return fac[..., None] * x
        return (-2.0 * self.phi(x))[..., None] * x

    def phi_r(self, x, r):
        """``r^{-n} phi(x/r)``; ``r`` broadcasts against the leading axes of ``x``."""
        r = np.asarray(r, dtype=float)
        return r ** (-self.n) * self.phi(np.asarray(x) / r[..., None])

    def psi_r(self, x, r):
        """``r^{-n} (grad phi)(x/r)``."""
        r = np.asarray(r, dtype=float)[..., None]
        return r ** (-self.n) * self.grad(np.asarray(x) / r)

    def describe(self):
        return {"variant": self.variant,
                "profile": "1 - S(2|x| - 1), S(t) = 10t^3 - 15t^4 + 6t^5" if self.variant == "bump"
                else "pi^(-n/2) exp(-|x|^2)"}


def _balls(windows):
    if isinstance(windows, DyadicWindowSet):
        return windows.x, windows.r
    xs, rs = [], []
    for x, r in windows:
        xs.append(np.atleast_1d(np.asarray(x, dtype=float)))
        rs.append(float(r))
    return np.array(xs), np.array(rs)


def _per_ball(w: BoundaryWeight, windows, fn):
    xs, rs = _balls(windows)
    return np.array([fn(w.ball_values(x, r)) for x, r in zip(xs, rs)]), xs, rs


def doubling_constant(w: BoundaryWeight, windows, return_all=False):
    """``sup w(Δ(x, 2r)) / w(Δ(x, r))`` over the windows."""
    xs, rs = _balls(windows)
    vals = []
    for x, r in zip(xs, rs):
        a = w.ball_mass(x, r)
        if a <= 0:
            raise ValueError(f"zero mass on Δ({tuple(x)}, {r})")
        vals.append(w.ball_mass(x, 2 * r) / a)
    vals = np.array(vals)
    return (float(vals.max()), vals) if return_all else float(vals.max())


def _ainf(v):
    if np.any(v <= LOG_FLOOR):
        raise ValueError("weight is not positive on the queried ball")
    return np.mean(v) / np.exp(np.mean(np.log(v)))


def a_infinity_constant(w: BoundaryWeight, windows, return_all=False):
    """``sup (mean w) / exp(mean log w)`` over the windows (at least 1 by Jensen)."""
    vals, _, _ = _per_ball(w, windows, _ainf)
    return (float(vals.max()), vals) if return_all else float(vals.max())


def reverse_holder_ratio(w: BoundaryWeight, p, windows, return_all=False):
    """``sup (mean w^p)^{1/p} / mean w`` over the windows."""
    if not p > 1:
        raise ValueError("p must exceed 1")

    def rh(v):
        m = np.mean(v)
        if m <= 0:
            raise ValueError("zero mean on a queried ball")
        return np.mean(v ** p) ** (1.0 / p) / m
    vals, _, _ = _per_ball(w, windows, rh)
    return (float(vals.max()), vals) if return_all else float(vals.max())


def small_scale_profile(values, radii, r0_values, centers=None, compact=None):
    """``r0 -> sup`` of per-window ``values`` over windows with ``r <= r0``.

    ``compact = (c, R)`` restricts centres to ``|x - c| <= R``.
    """
    values, radii = np.asarray(values), np.asarray(radii)
    sel = np.ones(len(values), dtype=bool)
    if compact is not None:
        c, R = compact
        sel = np.sqrt(np.sum((np.asarray(centers) - np.asarray(c)) ** 2, axis=1)) <= R + 1e-12
    out = []
    for r0 in np.atleast_1d(r0_values):
        m = sel & (radii <= r0 * (1 + 1e-12))
        out.append(float(values[m].max()) if m.any() else np.nan)
    return np.array(out)


@dataclass
class OscillationProfile:
    bmo: float
    r0: np.ndarray
    profile: np.ndarray
    per_window: np.ndarray
    x: np.ndarray
    r: np.ndarray


def bmo_vmo_profile(f: BoundaryWeight, windows, r0_values=None, transform=None, compact=None):
    """Mean oscillation ``mean |f - f_Δ|`` per window, its sup (BMO) and the VMO profile.

    ``transform`` is applied to the cell values first (e.g. ``np.log``);
    ``compact = (c, R)`` gives the VMO_loc variant.
    """
    def osc(v):
        if transform is not None:
            if transform is np.log and np.any(v <= LOG_FLOOR):
                raise ValueError("log of a weight with zeros")
            v = transform(v)
        return np.mean(np.abs(v - np.mean(v)))
    vals, xs, rs = _per_ball(f, windows, osc)
    if r0_values is None:
        r0_values = np.unique(rs)[::-1]
    prof = small_scale_profile(vals, rs, r0_values, xs, compact)
    return OscillationProfile(float(vals.max()), np.atleast_1d(r0_values), prof, vals, xs, rs)


_GL = np.polynomial.legendre.leggauss(3)
_GL_X, _GL_W = 0.5 * _GL[0], 0.5 * _GL[1]      # nodes in [-1/2, 1/2], weights sum to 1


def _offsets(dims):
    if dims == 0:
        return np.zeros((1, 0)), np.ones(1)
    grids = np.meshgrid(*([_GL_X] * dims), indexing="ij")
    ws = np.ones_like(grids[0])
    for g in np.meshgrid(*([_GL_W] * dims), indexing="ij"):
        ws = ws * g
    return np.stack(grids, axis=-1).reshape(-1, dims), ws.reshape(-1)


def mollified(w: BoundaryWeight, mollifier: Mollifier, xs, rs, chunk=128):
    """Cell-integrated ``ω * ψ_r`` (shape ``(m, n)``) and ``ω * φ_r`` at the windows.

    Each point mass is spread uniformly over its lattice cell.  Along the
    derivative axis the cell integral of ``∂_k φ_r`` is a difference of
    ``φ`` values, so it is exact and a flat weight gives exactly zero; the
    remaining axes and the denominator use 3-point Gauss rules.
    """
    pts, m = w.point_masses()
    n, h = w.n, w.grid.h
    full, fw = _offsets(n)
    side, sw = _offsets(n - 1)
    num = np.zeros((len(rs), n))
    den = np.zeros(len(rs))
    for a in range(0, len(rs), chunk):
        x, r = xs[a:a + chunk], rs[a:a + chunk]
        z = x[:, None, :] - pts[None, :, :]
        rr = r[:, None]
        for off, g in zip(full, fw):
            den[a:a + chunk] += g * (mollifier.phi_r(z - h * off, rr) @ m)
        for k in range(n):
            other = [i for i in range(n) if i != k]
            for off, g in zip(side, sw):
                shift = np.zeros(n)
                shift[other] = h * off
                e = np.zeros(n)
                e[k] = 0.5 * h
                lo = mollifier.phi((z - shift + e) / rr[..., None])
                hi = mollifier.phi((z - shift - e) / rr[..., None])
                num[a:a + chunk, k] += g * (((lo - hi) * rr ** (1 - n)) @ m) / h
    return num, den


class FKPMeasure(DyadicCarlesonMeasure):
    """Carleson measure with density ``|ω*ψ_r|^2 / |ω*φ_r|^2``."""

    mollifier: Mollifier = None
    source: dict = None


def fkp_measure(w: BoundaryWeight, mollifier: Mollifier, windows: DyadicWindowSet) -> FKPMeasure:
    """FKP density on the windows whose mollifier support stays inside the boundary box.

    Windows within ``support * r`` of the truncation edge are dropped.
    """
    keep = np.all(np.abs(windows.x) + mollifier.support * windows.r[:, None] <= w.grid.x_max + 1e-12, axis=1)
    ws = windows.subset(keep)
    if len(ws) == 0:
        raise ValueError("no window keeps its mollifier support inside the boundary")
    num, den = mollified(w, mollifier, ws.x, ws.r)
    if np.any(den <= 0):
        raise ValueError("vanishing denominator in the FKP quotient")
    dens = np.sum(num ** 2, axis=1) / den ** 2
    out = FKPMeasure(ws, dens, "fkp")
    out.mollifier = mollifier
    out.source = dict(w.provenance)
    out.numerator = num
    out.denominator = den
    return out


# ---------------------------------------------------------------------------
# heat smoothing
# ---------------------------------------------------------------------------

def heat_kernel(z, t, n):
    """``(pi t)^{-n/2} exp(-|z|^2 / t)``, i.e. the Gaussian profile at scale ``sqrt(t)``."""
    return (np.pi * t) ** (-n / 2) * np.exp(-np.sum(z * z, axis=-1) / t)


class HeatExtension:
    """``u(x, t) = H_t ω(x)`` for point masses ``(y_j, m_j)``."""

    def __init__(self, pts, masses, n):
        self.pts = np.asarray(pts, dtype=float).reshape(-1, n)
        self.m = np.asarray(masses, dtype=float).reshape(-1)
        self.n = n

    def __call__(self, x, t, grad=False):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = x[:, None, :] - self.pts[None, :, :]
        K = heat_kernel(z, t, self.n) * self.m[None, :]
        u = K.sum(axis=1)
        if not grad:
            return u
        g = np.einsum("xj,xjk->xk", K, -2.0 * z / t)
        return u, g


@dataclass
class HeatFlow:
    """Heat extension of ``ω``, its smoothed weights and Carleson functionals."""

    eps: list
    weights: list
    C_u: float
    boxes: list = field(default_factory=list)
    translation_error: float = 0.0
    mass: list = field(default_factory=list)
    comparability: list = field(default_factory=list)
    t_floor: float = 0.0

    @property
    def max_box_ratio(self):
        """Largest ``C(u_i; x0, s) / (2^{n/2} C(u))`` over the tested boxes."""
        return max(b["ratio"] for b in self.boxes) if self.boxes else 0.0


def _box_functional(ext_fn, x0, s, n, t_lo, h_q, n_t=24):
    """``s^{-n} int_{t_lo}^{s^2} int_{B_s(x0)} |grad u|^2/u^2`` with ``tau = sqrt(t)`` Gauss-Legendre."""
    m = int(np.ceil(s / h_q))
    line = (np.arange(-m, m) + 0.5) * (s / m)
    pts = np.stack(np.meshgrid(*([line] * n), indexing="ij"), axis=-1).reshape(-1, n)
    pts = pts[np.sum(pts ** 2, axis=1) < s * s] + x0
    dx = (s / m) ** n
    a, b = np.sqrt(t_lo), s
    if b <= a:
        return 0.0
    g, gw = np.polynomial.legendre.leggauss(n_t)
    tau = 0.5 * (b - a) * g + 0.5 * (b + a)
    total = 0.0
    for ti, wi in zip(tau, gw):
        u, du = ext_fn(pts, ti * ti)
        total += 0.5 * (b - a) * wi * 2 * ti * np.sum(np.sum(du * du, axis=1) / u ** 2) * dx
    return total / s ** n


def heat_smooth_and_carleson(w: BoundaryWeight, eps_list, boxes, fine=8, n_t=24):
    """Gaussian smoothing ``w_i = φ_{sqrt(eps_i)} * ω`` and the Carleson functionals.

    Parameters
    ----------
    w : BoundaryWeight
        Source measure (point masses from ``w.point_masses()``).
    eps_list : sequence of float
        Smoothing times; each needs ``sqrt(eps) >= 2h``.
    boxes : sequence of ``(x0, s)``
        Query boxes for ``C(u_i)``; ``C(u)`` is taken over these boxes and
        their dilates ``sqrt(s^2 + eps_i)``.
    fine : int
        Refinement of the lattice on which ``w_i`` is sampled.

    Notes
    -----
    ``C(u)`` integrates ``t`` from ``(2h)^2``; below that the heat extension
    of gridded masses does not resolve the lattice.
    """
    grid = w.grid
    n, h = grid.n, grid.h
    eps_list = [float(e) for e in eps_list]
    for e in eps_list:
        if np.sqrt(e) < 2 * h - 1e-12:
            raise ValueError(f"eps={e} is below grid resolution (sqrt(eps) < 2h = {2 * h})")
    pts, m = w.point_masses()
    U = HeatExtension(pts, m, n)
    t_floor = (2 * h) ** 2
    hf = h / fine
    kf = int(round(grid.x_max / hf))
    line = hf * np.arange(-kf, kf + 1)
    fpts = np.stack(np.meshgrid(*([line] * n), indexing="ij"), axis=-1).reshape(-1, n)
    tw = np.ones(len(line))
    tw[0] = tw[-1] = 0.5
    fw = tw
    for _ in range(n - 1):
        fw = np.multiply.outer(fw, tw)
    fw = fw.reshape(-1) * hf ** n

    weights, masses, comps = [], [], []
    exts = []
    for e in eps_list:
        wi = U(fpts, e)
        weights.append(wi)
        masses.append(float(np.sum(wi * fw)))
        exts.append(HeatExtension(fpts, wi * fw, n))
        # small-scale comparability  w_i(x) ~ eps^{-n/2} ω(Δ(x, sqrt eps))
        probe = grid.boundary_coords().reshape(-1, n)
        probe = probe[np.all(np.abs(probe) + 4 * np.sqrt(e) <= grid.x_max, axis=1)][::max(1, grid.nx // 50)]
        ball = np.array([np.sum(m[np.sum((pts - p) ** 2, axis=1) < e]) for p in probe])
        ok = ball > 0
        ratio = U(probe[ok], e) * e ** (n / 2) / ball[ok]
        comps.append({"eps": e, "min": float(ratio.min()), "max": float(ratio.max())})

    # translation identity on interior points
    terr = 0.0
    probe = grid.boundary_coords().reshape(-1, n)
    for e, ext in zip(eps_list, exts):
        for t in (t_floor, 4 * t_floor, 0.25):
            reach = 6 * np.sqrt(t + e)
            p = probe[np.all(np.abs(probe) + reach <= grid.x_max, axis=1)]
            if len(p) == 0:
                continue
            a = ext(p, t)
            b = U(p, t + e)
            ok = np.abs(b) > 1e-12 * np.max(np.abs(b))
            terr = max(terr, float(np.max(np.abs(a - b)[ok] / np.abs(b[ok]))))

    def u_fn(p, t):
        return U(p, t, grad=True)

    cache = {}

    def C_u_box(x0, s):
        key = (tuple(np.atleast_1d(x0)), s)
        if key not in cache:
            cache[key] = _box_functional(u_fn, np.atleast_1d(x0), s, n, t_floor, h / 4, n_t)
        return cache[key]

    rows = []
    allq = []
    for x0, s in boxes:
        allq.append((x0, s))
        for e in eps_list:
            allq.append((x0, np.sqrt(s * s + e)))
    for x0, s in allq:
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if np.any(np.abs(x0) + s + 6 * s > grid.x_max):
            raise ValueError(f"query box ({tuple(x0)}, {s}) is too close to the truncation edge")
    C_u = max((C_u_box(x0, s) for x0, s in allq), default=0.0)
    for x0, s in boxes:
        for e, ext in zip(eps_list, exts):
            if s < np.sqrt(e) - 1e-12:
                continue

            def ui_fn(p, t, ext=ext, e=e):
                if t >= (2 * hf) ** 2:
                    return ext(p, t, grad=True)
                return U(p, t + e, grad=True)
            lhs = _box_functional(ui_fn, np.atleast_1d(x0), s, n, 0.0, h / 4, n_t)
            bound = 2 ** (n / 2) * C_u
            rows.append({"x0": list(np.atleast_1d(x0)), "s": s, "eps": e, "C_ui": lhs,
                         "C_u": C_u, "bound": bound, "ratio": lhs / bound if bound > 0 else np.inf})
    return HeatFlow(eps_list, weights, C_u, rows, terr, masses, comps, t_floor)
