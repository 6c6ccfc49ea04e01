"""Coefficient fields, their oscillation numbers and the localisation extension."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .carleson import DyadicCarlesonMeasure
from .grid import (DyadicWindowSet, HalfSpaceGrid, Region, carleson,
                   region_average, whitney)

__all__ = [
    "EllipticMatrixField", "OscillationReport", "ExtensionSpec",
    "constant_field", "identity_field", "dkp_family", "diagonal_profile",
    "sine_shear", "make_field", "best_constant_matrix", "oscillation",
    "dkp_measure", "local_norm_ratio", "extend_coefficients",
]


def _test_vectors(d):
    """Deterministic set of ``8 d`` unit vectors in ``R^d``."""
    m = 8 * d
    if d == 2:
        a = 2 * np.pi * np.arange(m) / m
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    # Fibonacci sphere
    i = np.arange(m) + 0.5
    z = 1 - 2 * i / m
    phi = np.pi * (1 + 5 ** 0.5) * i
    rho = np.sqrt(1 - z * z)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


class EllipticMatrixField:
    """A matrix field ``A(y, s)`` on the upper half space.

    Parameters
    ----------
    n : int
        Boundary dimension; matrices are ``(n+1) x (n+1)``.
    func : callable
        Maps points ``(..., n+1)`` to matrices ``(..., n+1, n+1)``.
    lam : float, optional
        Ellipticity constant.  When omitted it is estimated from the samples
        the field is evaluated on.
    grad_norm : callable, optional
        Maps points to the Frobenius norm of the derivative tensor of ``A``.
    family : str
        Family tag recorded in outputs.
    params : dict
        Family parameters recorded in outputs.
    """

    def __init__(self, n, func, lam=None, grad_norm=None, family="user-defined",
                 params=None):
        self.n = int(n)
        self.func = func
        self.lam_given = None if lam is None else float(lam)
        self.lam_estimate = None
        self.grad_norm = grad_norm
        self.family = family
        self.params = dict(params or {})
        self._cells = {}

    @property
    def dim(self):
        return self.n + 1

    @property
    def lam(self):
        """Given ellipticity constant, else the largest estimate seen so far."""
        return self.lam_given if self.lam_given is not None else self.lam_estimate

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        out = np.asarray(self.func(pts), dtype=float)
        return np.broadcast_to(out, pts.shape[:-1] + (self.dim, self.dim))

    def transpose(self) -> "EllipticMatrixField":
        f = self.func
        out = EllipticMatrixField(self.n, lambda p: np.swapaxes(np.asarray(f(p), dtype=float), -1, -2),
                                  self.lam_given, self.grad_norm, self.family,
                                  dict(self.params, transposed=not self.params.get("transposed", False)))
        return out

    def describe(self) -> dict:
        return {"family": self.family, "params": self.params, "lambda": self.lam}

    def check_samples(self, mats, where="samples") -> float:
        """Validate sampled matrices; return the smallest admissible ``Λ``.

        Raises on non-finite entries or, when ``lam`` is set, on a violation
        of ``<A xi, xi> >= |xi|^2 / lam`` or ``max |a_ij| <= lam``.
        """
        m = np.asarray(mats).reshape(-1, self.dim, self.dim)
        if not np.all(np.isfinite(m)):
            bad = int(np.argmax(~np.all(np.isfinite(m), axis=(1, 2))))
            raise ValueError(f"non-finite coefficient sample in {where} (sample {bad})")
        xi = _test_vectors(self.dim)
        q = np.einsum("ki,mij,kj->mk", xi, m, xi)
        qmin = float(q.min())
        if qmin <= 0:
            raise ValueError(f"coefficient field is not elliptic on {where}: min <A xi, xi> = {qmin:.3g}")
        need = max(1.0, float(np.abs(m).max()), 1.0 / qmin)
        if self.lam_given is not None and need > self.lam_given * (1 + 1e-12):
            raise ValueError(f"ellipticity constant {self.lam_given} violated on {where} (need {need:.6g})")
        self.lam_estimate = max(need, self.lam_estimate or 1.0)
        return need

    def cell_values(self, grid: HalfSpaceGrid) -> np.ndarray:
        """Matrices at cell centres, cached per grid and validated once."""
        key = (grid.n, grid.h, grid.x_max, grid.t_max)
        if key not in self._cells:
            if grid.n != self.n:
                raise ValueError("grid and coefficient dimensions differ")
            vals = np.ascontiguousarray(self(grid.cell_centers()))
            self.check_samples(vals, "grid cell centres")
            self._cells = {key: vals}
        return self._cells[key]

    def ellipticity(self, grid) -> float:
        return self.check_samples(self.cell_values(grid))


def _const_func(A0, n):
    A0 = np.asarray(A0, dtype=float)

    def f(p):
        return np.broadcast_to(A0, np.shape(p)[:-1] + A0.shape)
    return f


def constant_field(A0, lam=None) -> EllipticMatrixField:
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    n = A0.shape[0] - 1
    return EllipticMatrixField(n, _const_func(A0, n), lam,
                               lambda p: np.zeros(np.shape(p)[:-1]),
                               "constant", {"matrix": A0.tolist()})


def identity_field(n) -> EllipticMatrixField:
    f = constant_field(np.eye(n + 1), lam=1.0)
    f.family = "identity"
    f.params = {}
    return f


_PROFILES = {
    # name: (value, derivative)
    "linear": (lambda s: s, lambda s: np.ones_like(s)),
    "sqrt": (lambda s: np.sqrt(s), lambda s: 0.5 / np.sqrt(s)),
    "logsine": (lambda s: np.sin(np.log(1.0 / s)), lambda s: -np.cos(np.log(1.0 / s)) / s),
}


def diagonal_profile(n, coefficient, profile="linear", entry=0, cap=None, lam=None,
                     family="diagonal-profile") -> EllipticMatrixField:
    """``A = I + coefficient * rho(min(s, cap)) E_{entry,entry}``.

    ``profile`` is one of ``linear`` (``rho = s``), ``sqrt`` and ``logsine``
    (``rho = sin(log(1/s))``).
    """
    if profile not in _PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    rho, drho = _PROFILES[profile]
    d = n + 1
    c = float(coefficient)
    cap = None if cap is None else float(cap)

    def func(p):
        s = p[..., -1]
        if cap is not None:
            s = np.minimum(s, cap)
        out = np.zeros(p.shape[:-1] + (d, d))
        out[...] = np.eye(d)
        out[..., entry, entry] += c * rho(s)
        return out

    def grad(p):
        s = p[..., -1]
        g = np.abs(c * drho(s))
        if cap is not None:
            g = np.where(s > cap, 0.0, g)
        return g

    return EllipticMatrixField(n, func, lam, grad, family,
                               {"coefficient": c, "profile": profile, "entry": entry, "cap": cap})


def dkp_family(n, eps, decay="sqrt", cap=None, lam=None) -> EllipticMatrixField:
    """``I + eps * s^{1/2} E_11`` (``decay='sqrt'``) or ``I + eps sin(log 1/s) E_11``."""
    f = diagonal_profile(n, eps, decay, 0, cap, lam, family="dkp-family")
    f.params = {"eps": float(eps), "decay": decay, "cap": cap}
    return f


def sine_shear(n=1, amplitude=1.0, frequency=10.0) -> EllipticMatrixField:
    """Non-symmetric ``I + amplitude sin(frequency y_1) E_{1,n+1}``."""
    d = n + 1

    def func(p):
        out = np.zeros(p.shape[:-1] + (d, d))
        out[...] = np.eye(d)
        out[..., 0, d - 1] = amplitude * np.sin(frequency * p[..., 0])
        return out

    def grad(p):
        return np.abs(amplitude * frequency * np.cos(frequency * p[..., 0]))

    return EllipticMatrixField(n, func, None, grad, "user-defined",
                               {"name": "sine-shear", "amplitude": amplitude, "frequency": frequency})


def make_field(spec: dict, n: int) -> EllipticMatrixField:
    """Build a field from a config mapping ``{family: ..., params: {...}}``."""
    fam = spec.get("family", "identity")
    p = dict(spec.get("params") or {})
    if fam == "identity":
        return identity_field(n)
    if fam == "constant":
        return constant_field(p["matrix"], p.get("lambda"))
    if fam == "dkp-family":
        return dkp_family(n, p.get("eps", 0.1), p.get("decay", "sqrt"), p.get("cap"), p.get("lambda"))
    if fam == "diagonal-profile":
        return diagonal_profile(n, p.get("coefficient", 1.0), p.get("profile", "linear"),
                                p.get("entry", 0), p.get("cap"), p.get("lambda"))
    if fam == "sine-shear":
        return sine_shear(n, p.get("amplitude", 1.0), p.get("frequency", 10.0))
    raise ValueError(f"unknown coefficient family {fam!r}")


@dataclass
class OscillationReport:
    """Oscillation numbers of a field on the window ``(x, r)``."""

    x: tuple
    r: float
    alpha2: float
    alphaInf: float
    gamma: float
    alphaTilde: Optional[float]
    A0: np.ndarray

    def row(self):
        at = np.nan if self.alphaTilde is None else self.alphaTilde
        return list(self.x) + [self.r, self.alpha2, self.alphaInf, at, self.gamma]


def best_constant_matrix(A: EllipticMatrixField, region: Region, grid: HalfSpaceGrid):
    """Entrywise region mean of ``A``: the L2-closest constant matrix."""
    return region_average(A, region, grid)


def _region_cells(A, region, grid):
    sl, mask = region.cell_block(grid)
    if not mask.any():
        raise ValueError(f"region {region} contains no cell centres")
    return A.cell_values(grid)[sl][mask]


def _deviation(vals, A0):
    return np.sqrt(np.sum((vals - A0) ** 2, axis=(-2, -1)))


def _require_window(grid, x, r):
    if r < 4 * grid.h - 1e-12:
        raise ValueError(f"window radius {r} below the resolvable minimum {4 * grid.h}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(np.abs(x) + r > grid.x_max + 1e-12) or r > grid.t_max + 1e-12:
        raise ValueError(f"window (x={tuple(x)}, r={r}) leaves the truncation box")


def oscillation(A: EllipticMatrixField, x, r, grid: HalfSpaceGrid) -> OscillationReport:
    """``alpha2, alphaInf, gamma`` (and ``alphaTilde`` when a gradient is known) at ``(x, r)``.

    All three use the region mean as minimiser; ``alphaInf`` is therefore an
    upper bound for the infimum over constant matrices.
    """
    _require_window(grid, x, r)
    x = tuple(np.atleast_1d(np.asarray(x, dtype=float)))
    W = whitney(x, r)
    wv = _region_cells(A, W, grid)
    A0 = wv.mean(axis=0)
    dev = _deviation(wv, A0)
    tv = _region_cells(A, carleson(x, r), grid)
    gamma = float(np.sqrt(np.mean(_deviation(tv, tv.mean(axis=0)) ** 2)))
    at = None
    if A.grad_norm is not None:
        sl, mask = W.cell_block(grid)
        pts = grid.cell_centers()[sl][mask]
        at = float(r * np.max(A.grad_norm(pts)))
    return OscillationReport(x, float(r), float(np.sqrt(np.mean(dev ** 2))), float(dev.max()),
                             gamma, at, A0)


def dkp_measure(A: EllipticMatrixField, windows: DyadicWindowSet, grid: HalfSpaceGrid,
                workers=1) -> DyadicCarlesonMeasure:
    """Carleson measure with density ``alpha2^2`` and variants ``gamma2``, ``alpha_tilde2``."""
    windows.check(grid)
    reps = _map(lambda w: oscillation(A, w[0], w[1], grid), list(windows), workers)
    a2 = np.array([q.alpha2 ** 2 for q in reps])
    variants = {"gamma2": DyadicCarlesonMeasure(windows, np.array([q.gamma ** 2 for q in reps]), "gamma2")}
    if all(q.alphaTilde is not None for q in reps):
        variants["alpha_tilde2"] = DyadicCarlesonMeasure(
            windows, np.array([q.alphaTilde ** 2 for q in reps]), "alpha_tilde2")
    m = DyadicCarlesonMeasure(windows, a2, "alpha2", variants)
    m.reports = reps
    return m


def local_norm_ratio(measure: DyadicCarlesonMeasure, center, radius) -> float:
    """``||gamma^2||_C(Delta) / ||alpha2^2||_C(3 Delta)`` (0/0 read as 0)."""
    g = measure.variants["gamma2"].local_norm(center, radius)
    a = measure.local_norm(center, 3 * radius)
    if a == 0:
        return 0.0 if g == 0 else np.inf
    return g / a


def _map(fn, items, workers):
    if workers and workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


@dataclass
class ExtensionSpec:
    """Data of the localisation extension around ``x0`` at scale ``R0``."""

    x0: tuple
    R0: float
    c: float
    A0: np.ndarray = field(repr=False)

    @property
    def R(self) -> float:
        return 2 * self.c * self.R0

    def f(self, a):
        """Blend weight: 0 on ``[0, R/2]``, linear, 1 on ``[R, inf)``."""
        a = np.asarray(a, dtype=float)
        R = self.R
        return np.clip((2.0 / R) * (a - 0.5 * R), 0.0, 1.0)

    def to_dict(self):
        return {"x0": list(self.x0), "R0": self.R0, "c": self.c, "R": self.R,
                "A0": np.asarray(self.A0).tolist()}


DEFAULT_EXTENSION_C = 0.01


def extend_coefficients(A: EllipticMatrixField, x0, R0, grid: HalfSpaceGrid, lam=None,
                        c=DEFAULT_EXTENSION_C) -> EllipticMatrixField:
    """Globalise ``A`` from ``Γ(x0, c R0)`` by blending into a constant matrix.

    With ``R = 2 c R0`` and ``A0`` the mean of ``A`` over ``T(x0, 50R)``,
    the result equals ``(1 - f(|y - x0|)) A + f(|y - x0|) A0`` on ``Γ(x0, R)``
    and ``A0`` elsewhere.  The returned field carries the
    :class:`ExtensionSpec` as ``.extension``.
    """
    x0 = tuple(np.atleast_1d(np.asarray(x0, dtype=float)))
    if not 0 < c:
        raise ValueError("c must be positive")
    R = 2 * c * R0
    big = carleson(x0, 50 * R)
    if not big.fits(grid):
        raise ValueError(f"T(x0, 50R) with R={R} does not fit in the box; reduce c or R0")
    vals = _region_cells(A, big, grid)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite coefficients on T(x0, 50R)")
    A0 = vals.mean(axis=0)
    spec = ExtensionSpec(x0, float(R0), float(c), A0)
    c0 = np.asarray(x0)
    dim = A.dim

    def func(p):
        p = np.asarray(p, dtype=float)
        out = np.empty(p.shape[:-1] + (dim, dim))
        out[...] = A0
        dy = np.sqrt(np.sum((p[..., :-1] - c0) ** 2, axis=-1))
        s = p[..., -1]
        inside = (dy < R) & (s > 0) & (s < R)
        if inside.any():
            fa = spec.f(dy[inside])[:, None, None]
            out[inside] = (1 - fa) * A(p[inside]) + fa * A0
        return out

    lam = lam if lam is not None else A.lam_given
    ext = EllipticMatrixField(A.n, func, lam, None, "extended",
                              {"source": A.describe(), **spec.to_dict()})
    ext.extension = spec
    return ext
