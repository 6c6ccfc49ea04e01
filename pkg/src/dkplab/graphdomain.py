"""Graph domains above ``t = phi(y)`` handled through the flattening map.

``Phi(y, s) = (y, s + phi(y))`` has unit Jacobian and carries the half space
onto the graph domain.  An operator with coefficients ``A`` on the graph
domain pulls back to ``B = L^T A(Phi) L`` with ``L = (I, -grad phi; 0, 1)``.
The graph domain itself is never meshed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coefficients import EllipticMatrixField, _map, oscillation
from .fields import BoundaryWeight
from .grid import HalfSpaceGrid
from .weights import bmo_vmo_profile


class GraphFunction:
    """A boundary graph ``phi`` with its gradient.

    Parameters
    ----------
    n : int
    phi, grad : callable
        ``phi(y) -> (...)`` and ``grad(y) -> (..., n)`` on points ``(..., n)``.
    name : str
    params : dict
    """

    def __init__(self, n, phi: Callable, grad: Callable, name="user-defined", params=None):
        self.n = int(n)
        self._phi = phi
        self._grad = grad
        self.name = name
        self.params = dict(params or {})

    def __call__(self, y):
        return np.asarray(self._phi(np.asarray(y, dtype=float)), dtype=float)

    def grad(self, y):
        return np.asarray(self._grad(np.asarray(y, dtype=float)), dtype=float)

    def normalize(self) -> "GraphFunction":
        """Shift and tilt so that ``phi(0) = 0`` and ``grad phi(0) = 0``."""
        z = np.zeros(self.n)
        p0, g0 = float(self(z)), self.grad(z).reshape(self.n)
        f, g = self._phi, self._grad
        return GraphFunction(self.n, lambda y: f(y) - p0 - y @ g0, lambda y: g(y) - g0,
                             self.name + "+normalized", self.params)

    def grad_bound(self, extent, h) -> float:
        """Sampled ``sup |grad phi|`` on ``[-extent, extent]^n``."""
        line = np.arange(-extent, extent + 0.5 * h, h)
        pts = np.stack(np.meshgrid(*([line] * self.n), indexing="ij"), axis=-1).reshape(-1, self.n)
        g = self.grad(pts)
        if not np.all(np.isfinite(g)):
            raise ValueError("unbounded gradient samples")
        return float(np.max(np.sqrt(np.sum(g * g, axis=-1))))

    def theta(self, extent, h, r_max) -> "ModulusSamples":
        """Modulus of continuity of ``grad phi`` at dyadic lags ``h 2^k <= r_max``.

        Computed as a running maximum over all lattice offsets of length at
        most ``r``, so the samples are nondecreasing.
        """
        m = int(round(extent / h))
        line = h * np.arange(-m, m + 1)
        G = self.grad(np.stack(np.meshgrid(*([line] * self.n), indexing="ij"), axis=-1))
        radii = [h * 2.0 ** k for k in range(int(np.floor(np.log2(r_max / h) + 1e-9)) + 1)]
        kmax = int(round(radii[-1] / h))
        offs = np.stack(np.meshgrid(*([np.arange(-kmax, kmax + 1)] * self.n), indexing="ij"),
                        axis=-1).reshape(-1, self.n)
        offs = offs[[tuple(o) > (0,) * self.n for o in offs]]
        lens = h * np.sqrt(np.sum(offs ** 2, axis=1))
        order = np.argsort(lens, kind="stable")
        offs, lens = offs[order], lens[order]
        best = np.zeros(len(radii))
        run = 0.0
        j = 0
        for i, r in enumerate(radii):
            while j < len(offs) and lens[j] <= r * (1 + 1e-12):
                run = max(run, _shift_diff(G, offs[j]))
                j += 1
            best[i] = run
        return ModulusSamples(np.array(radii), best)

    def describe(self):
        return {"phi": self.name, "params": self.params}


def _shift_diff(G, off):
    a, b = [], []
    for o in off:
        o = int(o)
        a.append(slice(max(o, 0), G.shape[len(a)] + min(o, 0)))
        b.append(slice(max(-o, 0), G.shape[len(b)] + min(-o, 0)))
    d = G[tuple(a)] - G[tuple(b)]
    return float(np.max(np.sqrt(np.sum(d * d, axis=-1)))) if d.size else 0.0


@dataclass
class ModulusSamples:
    r: np.ndarray
    theta: np.ndarray

    def __call__(self, r):
        """Log-log interpolation between samples, power-law extrapolation outside."""
        r = np.asarray(r, dtype=float)
        pos = self.theta > 0
        if pos.sum() < 2:
            return np.interp(r, self.r, self.theta)
        lr, lt = np.log(self.r[pos]), np.log(self.theta[pos])
        x = np.log(r)
        lo_slope = (lt[1] - lt[0]) / (lr[1] - lr[0])
        hi_slope = (lt[-1] - lt[-2]) / (lr[-1] - lr[-2])
        y = np.interp(x, lr, lt)
        y = np.where(x < lr[0], lt[0] + lo_slope * (x - lr[0]), y)
        y = np.where(x > lr[-1], lt[-1] + hi_slope * (x - lr[-1]), y)
        return np.exp(y)

    @property
    def exponent(self) -> float:
        """Least-squares slope of ``log theta`` against ``log r``.

        The finest sample is dropped when three or more are positive: a
        single lattice step can straddle a kink of ``grad phi``.
        """
        pos = self.theta > 0
        if pos.sum() < 2:
            return np.nan
        lr, lt = np.log(self.r[pos]), np.log(self.theta[pos])
        if len(lr) >= 3:
            lr, lt = lr[1:], lt[1:]
        return float(np.polyfit(lr, lt, 1)[0])


@dataclass
class DiniIntegral:
    value: float
    resolved: float
    tail: float
    r_min: float


def square_dini_integral(theta, r_star=1.0, r_min=None, per_octave=8, exponent=None) -> DiniIntegral:
    """``int_0^{r_star} theta(r)^2 dr / r`` by Gauss-Legendre in ``log r`` on each octave.

    The integral is resolved down to ``r_min``; below it ``theta`` is taken
    as ``theta(r_min) (r/r_min)^a`` and the tail ``theta(r_min)^2 / (2a)``
    is reported separately.

    Parameters
    ----------
    theta : callable or ModulusSamples
    exponent : float, optional
        ``a`` for the tail; estimated from ``theta`` at ``r_min`` and
        ``2 r_min`` when omitted.
    """
    if r_min is None:
        r_min = theta.r[0] if isinstance(theta, ModulusSamples) else r_star * 2.0 ** -20
    octaves = int(np.ceil(np.log2(r_star / r_min) - 1e-12))
    edges = np.log(r_star) - np.log(2.0) * np.arange(octaves + 1)
    edges[-1] = np.log(r_min)
    g, w = np.polynomial.legendre.leggauss(per_octave)
    total = 0.0
    for hi, lo in zip(edges[:-1], edges[1:]):
        u = 0.5 * (hi - lo) * g + 0.5 * (hi + lo)
        total += 0.5 * (hi - lo) * float(np.sum(w * np.asarray(theta(np.exp(u))) ** 2))
    t0 = float(theta(r_min))
    if exponent is None and isinstance(theta, ModulusSamples):
        exponent = theta.exponent
    if exponent is None:
        t1 = float(theta(2 * r_min))
        exponent = np.log(t1 / t0) / np.log(2.0) if t0 > 0 and t1 > 0 else np.nan
    tail = t0 ** 2 / (2 * exponent) if t0 > 0 and exponent > 0 else (0.0 if t0 == 0 else np.inf)
    return DiniIntegral(total + tail, total, float(tail), r_min)


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------

def flat_graph(n=1) -> GraphFunction:
    return GraphFunction(n, lambda y: np.zeros(np.shape(y)[:-1]), lambda y: np.zeros(np.shape(y)),
                         "flat")


def tilted_graph(slope, n=1) -> GraphFunction:
    m = np.broadcast_to(np.asarray(slope, dtype=float), (n,)).copy()
    return GraphFunction(n, lambda y: y @ m, lambda y: np.broadcast_to(m, np.shape(y)).copy(),
                         "tilted", {"slope": m.tolist()})


def parabola_graph(c=0.5, n=1) -> GraphFunction:
    """``phi(y) = c |y|^2``; ``theta(r) = 2 c r``."""
    return GraphFunction(n, lambda y: c * np.sum(y * y, axis=-1), lambda y: 2 * c * y,
                         "parabola", {"c": c})


def power_graph(a, n=1) -> GraphFunction:
    """``phi(y) = |y|^{1+a} / (1+a)``; ``|grad phi|`` is Hölder of order ``a``."""
    def phi(y):
        return np.sqrt(np.sum(y * y, axis=-1)) ** (1 + a) / (1 + a)

    def grad(y):
        rho = np.sqrt(np.sum(y * y, axis=-1, keepdims=True))
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rho > 0, rho ** (a - 1) * y, 0.0)
    return GraphFunction(n, phi, grad, "power", {"a": a})


_GRAPHS = {"flat": flat_graph, "zero": flat_graph, "tilted": tilted_graph,
           "parabola": parabola_graph, "power": power_graph}


def make_graph(spec: dict, n: int) -> GraphFunction:
    """Graph fixture from a config block ``{phi: name, params: {...}}``."""
    name = spec.get("phi", "flat")
    if name not in _GRAPHS:
        raise ValueError(f"unknown graph {name!r}; choose from {sorted(_GRAPHS)}")
    return _GRAPHS[name](n=n, **dict(spec.get("params", {})))


# ---------------------------------------------------------------------------
# flattening
# ---------------------------------------------------------------------------

def flattening_map(graph: GraphFunction, Y):
    """``Phi(y, s) = (y, s + phi(y))``."""
    Y = np.asarray(Y, dtype=float)
    out = Y.copy()
    out[..., -1] = Y[..., -1] + graph(Y[..., :-1])
    return out


def _lower(graph, y):
    n = graph.n
    g = graph.grad(y)
    L = np.broadcast_to(np.eye(n + 1), g.shape[:-1] + (n + 1, n + 1)).copy()
    L[..., :n, n] = -g
    return L


def pullback_matrix(A_omega: Callable, graph: GraphFunction, Y):
    """``B(Y) = L^T A(Phi(Y)) L`` with ``L = (I, -grad phi; 0, 1)``."""
    Y = np.asarray(Y, dtype=float)
    L = _lower(graph, Y[..., :-1])
    Am = np.asarray(A_omega(flattening_map(graph, Y)), dtype=float)
    return np.swapaxes(L, -1, -2) @ Am @ L


@dataclass
class FlattenedOperator:
    A: EllipticMatrixField
    graph: GraphFunction
    B: EllipticMatrixField
    composed: EllipticMatrixField

    def lam_bound(self, grad_bound, lam_A=None) -> float:
        """``Lambda_A (1 + |grad phi|^2) c_n`` with ``c_n = 2``.

        ``lam_A`` overrides the declared constant of ``A`` (e.g. a sampled one).
        """
        lam = self.A.lam if lam_A is None else lam_A
        if lam is None:
            raise ValueError("no ellipticity constant for A; pass a sampled lam_A")
        return float(lam * (1 + grad_bound ** 2) * 2.0)


def flatten(graph: GraphFunction, A: EllipticMatrixField, extent=None, h=None) -> FlattenedOperator:
    """Pull ``A`` back through the flattening map.

    ``composed`` is ``A o Phi`` (used for oscillations on ``Phi(W)``);
    ``B`` is the pullback matrix.  When ``extent`` and ``h`` are given the
    gradient is checked for boundedness there.
    """
    if A.n != graph.n:
        raise ValueError("graph and coefficient dimensions differ")
    if extent is not None and h is not None:
        graph.grad_bound(extent, h)

    def bfunc(p):
        return pullback_matrix(A, graph, p)

    def cfunc(p):
        return A(flattening_map(graph, np.asarray(p, dtype=float)))
    B = EllipticMatrixField(graph.n, bfunc, family="pullback",
                            params={"graph": graph.describe(), "source": A.describe()})
    C = EllipticMatrixField(graph.n, cfunc, family="composed",
                            params={"graph": graph.describe(), "source": A.describe()})
    return FlattenedOperator(A, graph, B, C)


# squared oscillations below this are cancellation noise
ROUNDOFF = 1e-24


@dataclass
class PullbackRow:
    x: tuple
    r: float
    alpha_B2: float
    alpha_A2: float
    theta2: float

    @property
    def ratio(self) -> float:
        den = self.alpha_A2 + self.theta2
        if den <= ROUNDOFF:
            return 0.0 if self.alpha_B2 <= ROUNDOFF else np.inf
        return self.alpha_B2 / den

    def row(self):
        return list(self.x) + [self.r, self.alpha_B2, self.alpha_A2, self.theta2, self.ratio]


def pullback_oscillation_check(A: EllipticMatrixField, graph: GraphFunction, windows,
                               grid: HalfSpaceGrid, theta=None, workers=1):
    """Per-window ``alpha_B^2``, ``alpha_A^2`` on ``Phi(W)``, ``theta(r)^2`` and their ratio.

    Because ``det DPhi = 1`` the average over ``Phi(W)`` equals the average
    of ``A o Phi`` over ``W``, so both sides use the same cells.
    """
    fo = flatten(graph, A)
    if theta is None:
        ext = grid.x_max
        rmax = max(r for _, r in windows)
        theta = graph.theta(ext, grid.h, 2 * rmax)

    def one(w):
        x, r = w
        if r < 4 * grid.h - 1e-12:
            raise ValueError(f"Whitney region at r={r} is not resolvable (need r >= {4 * grid.h})")
        aB = oscillation(fo.B, x, r, grid).alpha2
        aA = oscillation(fo.composed, x, r, grid).alpha2
        th = float(theta(r)) if not isinstance(theta, (int, float)) else float(theta)
        return PullbackRow(tuple(np.atleast_1d(x)), float(r), aB ** 2, aA ** 2, th ** 2)
    return _map(one, list(windows), workers)


def surface_kernel(k: BoundaryWeight, graph: GraphFunction) -> BoundaryWeight:
    """``k_Omega(y, phi(y)) = k(y) / sqrt(1 + |grad phi(y)|^2)``."""
    grid = k.grid

    def corr(p):
        g = graph.grad(p)
        return np.sqrt(1 + np.sum(g * g, axis=-1))
    dens = k.density / corr(grid.boundary_coords())
    func = None
    if k.func is not None:
        f = k.func
        func = (lambda p: f(p) / corr(p))
    out = BoundaryWeight(grid, dens, func=func, provenance=dict(k.provenance, graph=graph.describe()),
                         allow_negative=True)
    if k.func is None:
        out._cv = k.cell_values() / corr(grid.boundary_cell_centers())
    return out


def surface_kernel_report(k: BoundaryWeight, graph: GraphFunction, windows, r0_values,
                          compact=None) -> dict:
    """VMO profiles of ``log k``, ``log k_Omega`` and of the correction ``log sqrt(1+|grad phi|^2)``."""
    kO = surface_kernel(k, graph)
    grid = k.grid

    def corr(p):
        g = graph.grad(p)
        return 0.5 * np.log1p(np.sum(g * g, axis=-1))
    cw = BoundaryWeight.analytic(grid, corr, allow_negative=True)
    a = bmo_vmo_profile(k, windows, r0_values, transform=np.log, compact=compact)
    b = bmo_vmo_profile(kO, windows, r0_values, transform=np.log, compact=compact)
    c = bmo_vmo_profile(cw, windows, r0_values, compact=compact)
    return {"r0": np.asarray(r0_values), "log_k": a.profile, "log_k_omega": b.profile,
            "correction": c.profile}


def tilted_poisson_density(slope, X0, y):
    """Closed-form density (w.r.t. ``dy``) of harmonic measure above ``t = m y`` (n = 1).

    ``k(y) = (t0 - m x0) / (pi |X0 - (y, m y)|^2)``, the half-plane Poisson
    kernel times the arc-length factor ``sqrt(1 + m^2)``.
    """
    m = float(np.atleast_1d(slope)[0])
    x0, t0 = float(X0[0]), float(X0[1])
    y = np.asarray(y, dtype=float)
    return (t0 - m * x0) / (np.pi * ((x0 - y) ** 2 + (t0 - m * y) ** 2))


def region_volume_check(graph: GraphFunction, box, samples=200000, seed=0) -> float:
    """Relative difference of ``|Phi(box)|`` and ``|box|`` by exact slab integration.

    For a box ``prod [a_i, b_i] x [c, d]`` the image under ``Phi`` is the
    region between ``phi + c`` and ``phi + d``, whose volume equals the box
    volume for every ``phi``; the check integrates the vertical extent of the
    image over a random sample of base points.
    """
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float)
    n = graph.n
    y = lo[:n] + (hi[:n] - lo[:n]) * rng.random((samples, n))
    top = flattening_map(graph, np.column_stack([y, np.full(samples, hi[n])]))[:, -1]
    bot = flattening_map(graph, np.column_stack([y, np.full(samples, lo[n])]))[:, -1]
    base = float(np.prod(hi[:n] - lo[:n]))
    vol = base * float(np.mean(top - bot))
    ref = base * (hi[n] - lo[n])
    return abs(vol - ref) / ref

