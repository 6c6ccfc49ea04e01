"""Uniform nodal grids on a truncated upper half space and the region algebra.

The truncated box is ``[-x_max, x_max]^n x [0, t_max]`` with nodes on the
lattice ``h Z^{n+1}``.  Quadrature is the midpoint rule on the ``h``-cells;
a cell belongs to a region when its centre does.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

NODE_CAP = 4096

SURFACE_BALL = "surface_ball"
WHITNEY = "whitney"
CARLESON = "carleson"
CYLINDER = "cylinder"
REGION_KINDS = (SURFACE_BALL, WHITNEY, CARLESON, CYLINDER)


def _steps(length, h, what):
    q = length / h
    k = int(round(q))
    if abs(q - k) > 1e-9 * max(1.0, q):
        raise ValueError(f"{what}={length} is not a multiple of h={h}")
    return k


def _midpoints(v, axis):
    lo = [slice(None)] * v.ndim
    hi = [slice(None)] * v.ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (v[tuple(lo)] + v[tuple(hi)])


@dataclass(frozen=True)
class HalfSpaceGrid:
    """Nodal grid on ``[-x_max, x_max]^n x [0, t_max]``.

    Parameters
    ----------
    n : int
        Boundary dimension (1 or 2).
    h : float
        Mesh width.
    x_max, t_max : float
        Half-width and height of the truncation box; both multiples of ``h``.
    """

    n: int
    h: float
    x_max: float
    t_max: float

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"n must be 1 or 2, got {self.n}")
        if not (self.h > 0 and self.x_max > 0 and self.t_max > 0):
            raise ValueError("h, x_max and t_max must be positive")
        kx = _steps(self.x_max, self.h, "x_max")
        kt = _steps(self.t_max, self.h, "t_max")
        if kx > NODE_CAP or kt > NODE_CAP:
            raise ValueError(
                f"grid too large: x_max/h={kx}, t_max/h={kt} (cap {NODE_CAP})")

    # -- sizes ---------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.n + 1

    @property
    def nx(self) -> int:
        return 2 * _steps(self.x_max, self.h, "x_max") + 1

    @property
    def nt(self) -> int:
        return _steps(self.t_max, self.h, "t_max") + 1

    @property
    def shape(self) -> tuple:
        return (self.nx,) * self.n + (self.nt,)

    @property
    def cell_shape(self) -> tuple:
        return tuple(m - 1 for m in self.shape)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def box_volume(self) -> float:
        return (2 * self.x_max) ** self.n * self.t_max

    # -- coordinates ---------------------------------------------------
    @cached_property
    def x(self) -> np.ndarray:
        """Horizontal node coordinates (shared by every horizontal axis)."""
        return -self.x_max + self.h * np.arange(self.nx)

    @cached_property
    def t(self) -> np.ndarray:
        return self.h * np.arange(self.nt)

    @cached_property
    def xc(self) -> np.ndarray:
        """Horizontal cell-centre coordinates."""
        return self.x[:-1] + 0.5 * self.h

    @cached_property
    def tc(self) -> np.ndarray:
        return self.t[:-1] + 0.5 * self.h

    def axes(self) -> list:
        return [self.x] * self.n + [self.t]

    def cell_axes(self) -> list:
        return [self.xc] * self.n + [self.tc]

    def node_coords(self) -> np.ndarray:
        """Array of shape ``shape + (n+1,)`` with node coordinates."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def cell_centers(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.cell_axes(), indexing="ij"), axis=-1)

    def boundary_coords(self) -> np.ndarray:
        """Boundary node coordinates, shape ``(nx,)*n + (n,)``."""
        return np.stack(np.meshgrid(*([self.x] * self.n), indexing="ij"), axis=-1)

    def boundary_cell_centers(self) -> np.ndarray:
        return np.stack(np.meshgrid(*([self.xc] * self.n), indexing="ij"), axis=-1)

    def boundary_node_weights(self) -> np.ndarray:
        """Trapezoid weights (in units of ``h^n``) of the boundary nodes."""
        w1 = np.ones(self.nx)
        w1[0] = w1[-1] = 0.5
        w = w1
        for _ in range(self.n - 1):
            w = np.multiply.outer(w, w1)
        return w

    @cached_property
    def node_index(self) -> np.ndarray:
        return np.arange(self.num_nodes).reshape(self.shape)

    @cached_property
    def boundary_index(self) -> np.ndarray:
        """Flat indices of the bottom (t = 0) nodes, shape ``(nx,)*n``."""
        return self.node_index[..., 0]

    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[..., 0] = True
        return mask

    # -- point location ----------------------------------------------------
    def node_of(self, point, tol=1e-9) -> tuple:
        """Multi-index of the node at ``point``; raises if it is not a node."""
        p = np.asarray(point, dtype=float)
        if p.shape != (self.dim,):
            raise ValueError(f"point must have {self.dim} coordinates")
        q = np.empty(self.dim, dtype=int)
        q[:-1] = np.rint((p[:-1] + self.x_max) / self.h)
        q[-1] = np.rint(p[-1] / self.h)
        if np.any(q < 0) or np.any(q >= np.array(self.shape)):
            raise ValueError(f"point {tuple(p)} is outside the grid")
        back = np.array([self.x[v] for v in q[:-1]] + [self.t[q[-1]]])
        if np.max(np.abs(back - p)) > tol * max(1.0, self.h):
            raise ValueError(f"point {tuple(p)} is not a grid node")
        return tuple(int(v) for v in q)

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(np.abs(p[:-1]) <= self.x_max) and 0 <= p[-1] <= self.t_max)

    def interpolate(self, values, points) -> np.ndarray:
        """Multilinear interpolation of nodal ``values`` at ``points`` (..., n+1)."""
        from scipy.interpolate import RegularGridInterpolator

        rgi = RegularGridInterpolator(self.axes(), values, method="linear")
        pts = np.asarray(points, dtype=float)
        return rgi(pts.reshape(-1, self.dim)).reshape(pts.shape[:-1])

    # -- nodal -> cell helpers --------------------------------------------
    def cell_average(self, values) -> np.ndarray:
        """Value of the multilinear interpolant at cell centres."""
        v = np.asarray(values, dtype=float)
        for ax in range(self.dim):
            v = _midpoints(v, ax)
        return v

    def cell_gradient(self, values) -> np.ndarray:
        """Gradient of the multilinear interpolant at cell centres.

        Returns an array of shape ``cell_shape + (n+1,)``.  Along each axis
        this is the forward difference averaged over the other axes, so at
        boundary-adjacent cells it is one-sided.
        """
        v = np.asarray(values, dtype=float)
        out = []
        for ax in range(self.dim):
            d = np.diff(v, axis=ax) / self.h
            for other in range(self.dim):
                if other != ax:
                    d = _midpoints(d, other)
            out.append(d)
        return np.stack(out, axis=-1)

    # -- serialisation -----------------------------------------------------
    def to_dict(self) -> dict:
        return {"n": self.n, "h": self.h, "x_max": self.x_max, "t_max": self.t_max}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "HalfSpaceGrid":
        return cls(int(d["n"]), float(d["h"]), float(d["x_max"]), float(d["t_max"]))


def build_grid(n, h, x_max, t_max) -> HalfSpaceGrid:
    """Build a :class:`HalfSpaceGrid`; see the class for the conventions.

    Examples
    --------
    >>> build_grid(1, 0.5, 1, 1).shape
    (5, 3)
    """
    return HalfSpaceGrid(int(n), float(h), float(x_max), float(t_max))


@dataclass(frozen=True)
class Region:
    """One of the four model regions attached to a boundary ball ``Δ(x, r)``.

    ``center`` is a boundary point (length ``n``).  Membership follows the set
    definitions literally: ``W = Δ x (r/2, r]``, ``T = B((x,0), r) ∩ {s > 0}``,
    ``Γ = Δ x (0, r)``.
    """

    kind: str
    center: tuple
    radius: float

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    @property
    def n(self) -> int:
        return len(self.center)

    def contains(self, points) -> np.ndarray:
        """Membership of points ``(..., n+1)`` (or ``(..., n)`` for surface balls)."""
        p = np.asarray(points, dtype=float)
        c = np.asarray(self.center)
        r = self.radius
        if self.kind == SURFACE_BALL:
            y = p[..., :self.n]
            return np.sum((y - c) ** 2, axis=-1) < r * r
        y, s = p[..., :self.n], p[..., self.n]
        d2 = np.sum((y - c) ** 2, axis=-1)
        if self.kind == WHITNEY:
            return (d2 < r * r) & (s > 0.5 * r) & (s <= r)
        if self.kind == CYLINDER:
            return (d2 < r * r) & (s > 0) & (s < r)
        return (d2 + s * s < r * r) & (s > 0)

    def height_range(self) -> tuple:
        if self.kind == WHITNEY:
            return 0.5 * self.radius, self.radius
        return 0.0, self.radius

    def cell_block(self, grid: HalfSpaceGrid):
        """Bounding-box slices into the cell array and the membership mask there."""
        if self.n != grid.n:
            raise ValueError("region and grid dimensions differ")
        h = grid.h
        sl = []
        for c in self.center:
            lo = int(np.floor((c - self.radius + grid.x_max) / h - 0.5)) - 1
            hi = int(np.ceil((c + self.radius + grid.x_max) / h - 0.5)) + 2
            sl.append(slice(max(lo, 0), max(min(hi, grid.nx - 1), 0)))
        if self.kind != SURFACE_BALL:
            a, b = self.height_range()
            lo = int(np.floor(a / h - 0.5)) - 1
            hi = int(np.ceil(b / h - 0.5)) + 2
            sl.append(slice(max(lo, 0), max(min(hi, grid.nt - 1), 0)))
            axes = [grid.xc[s] for s in sl[:-1]] + [grid.tc[sl[-1]]]
        else:
            axes = [grid.xc[s] for s in sl]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return tuple(sl), self.contains(pts)

    def fits(self, grid: HalfSpaceGrid) -> bool:
        """True when the region lies inside the truncation box."""
        c = np.asarray(self.center)
        if np.any(np.abs(c) + self.radius > grid.x_max + 1e-12):
            return False
        return self.kind == SURFACE_BALL or self.radius <= grid.t_max + 1e-12


def surface_ball(x, r) -> Region:
    return Region(SURFACE_BALL, tuple(np.atleast_1d(x)), r)


def whitney(x, r) -> Region:
    return Region(WHITNEY, tuple(np.atleast_1d(x)), r)


def carleson(x, r) -> Region:
    return Region(CARLESON, tuple(np.atleast_1d(x)), r)


def cylinder(x, r) -> Region:
    return Region(CYLINDER, tuple(np.atleast_1d(x)), r)


def region_average(field, region: Region, grid: HalfSpaceGrid):
    """Midpoint-rule average of ``field`` over the cells whose centres lie in ``region``.

    Parameters
    ----------
    field : array, callable or object with ``cell_values(grid)``
        A nodal array of shape ``grid.shape`` (interpolated to cell centres),
        an array already on cells (shape ``grid.cell_shape + ...``), a callable
        of points ``(..., n+1)``, or a coefficient field (averaged entrywise).
        For surface balls the nodal/cell arrays live on the boundary.
    region : Region
    grid : HalfSpaceGrid

    Returns
    -------
    float or ndarray
        The average; matrices are averaged entrywise.
    """
    sl, mask = region.cell_block(grid)
    if not mask.any():
        raise ValueError(f"region {region} contains no cell centres of the grid")
    if region.kind == SURFACE_BALL:
        vals = _boundary_cell_values(field, grid, sl)
    else:
        vals = _cell_values(field, grid, sl)
    return vals[mask].mean(axis=0)


def _cell_values(field, grid, sl):
    if hasattr(field, "cell_values"):
        return field.cell_values(grid)[sl]
    if callable(field):
        axes = [grid.xc[s] for s in sl[:-1]] + [grid.tc[sl[-1]]]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return np.asarray(field(pts), dtype=float)
    arr = np.asarray(field, dtype=float)
    if arr.shape[:grid.dim] == grid.shape:
        arr = grid.cell_average(arr)
    elif arr.shape[:grid.dim] != grid.cell_shape:
        raise ValueError("field shape matches neither nodes nor cells")
    return arr[sl]


def _boundary_cell_values(field, grid, sl):
    if callable(field):
        axes = [grid.xc[s] for s in sl]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return np.asarray(field(pts), dtype=float)
    arr = np.asarray(field, dtype=float)
    bshape = (grid.nx,) * grid.n
    if arr.shape[:grid.n] == bshape:
        for ax in range(grid.n):
            arr = _midpoints(arr, ax)
    return arr[sl]


class DyadicWindowSet:
    """Windows ``(x_j, r_k)`` with ``r_k = r_top 2^{-k}`` and ``x_j`` on a lattice of pitch ``r_k/2``.

    Parameters
    ----------
    n : int
        Boundary dimension.
    r_top : float
        Largest scale ``R_0``.
    levels : int
        Number of scales ``K + 1``.
    center, extent : float or sequence
        Window centres cover the cube ``center ± extent``.
    """

    def __init__(self, n, r_top, levels, center=0.0, extent=1.0):
        if levels < 1:
            raise ValueError("need at least one scale")
        self.n = int(n)
        self.r_top = float(r_top)
        self.levels = int(levels)
        self.center = np.broadcast_to(np.asarray(center, dtype=float), (self.n,)).copy()
        self.extent = float(extent)
        xs, rs, ks = [], [], []
        for k in range(self.levels):
            r = self.r_top * 2.0 ** (-k)
            pitch = 0.5 * r
            m = int(np.floor(self.extent / pitch + 1e-9))
            line = pitch * np.arange(-m, m + 1)
            pts = np.stack(np.meshgrid(*([line] * self.n), indexing="ij"), axis=-1).reshape(-1, self.n)
            xs.append(pts + self.center)
            rs.append(np.full(len(pts), r))
            ks.append(np.full(len(pts), k))
        self.x = np.concatenate(xs)
        self.r = np.concatenate(rs)
        self.k = np.concatenate(ks)

    @classmethod
    def for_grid(cls, grid, r_top, levels=None, center=0.0, extent=None, r_min=None):
        """Window set whose smallest scale is at least ``r_min`` (default ``4h``)."""
        r_min = 4 * grid.h if r_min is None else r_min
        if levels is None:
            levels = int(np.floor(np.log2(r_top / r_min) + 1e-9)) + 1
        if extent is None:
            extent = r_top
        return cls(grid.n, r_top, max(levels, 1), center, extent)

    @property
    def scales(self) -> np.ndarray:
        return self.r_top * 2.0 ** (-np.arange(self.levels))

    def __len__(self):
        return len(self.r)

    def __iter__(self) -> Iterator:
        for x, r in zip(self.x, self.r):
            yield x, float(r)

    def cell_area(self) -> np.ndarray:
        """Boundary area ``(r_k/2)^n`` carried by each window's lattice site."""
        return (0.5 * self.r) ** self.n

    def resolvable(self, grid, kind=CARLESON, factor=1.0) -> np.ndarray:
        """Windows whose ``factor``-dilated region fits in the box with ``r >= 4h``."""
        rr = factor * self.r
        inside = np.all(np.abs(self.x) + rr[:, None] <= grid.x_max + 1e-12, axis=1)
        inside &= rr <= grid.t_max + 1e-12
        return inside & (self.r >= 4 * grid.h - 1e-12)

    def subset(self, mask) -> "DyadicWindowSet":
        out = object.__new__(DyadicWindowSet)
        out.__dict__.update(self.__dict__)
        out.x, out.r, out.k = self.x[mask], self.r[mask], self.k[mask]
        return out

    def check(self, grid, kind=CARLESON, factor=1.0):
        bad = ~self.resolvable(grid, kind, factor)
        if bad.any():
            i = int(np.argmax(bad))
            raise ValueError(
                f"window (x={tuple(self.x[i])}, r={self.r[i]}) is not resolvable on the grid "
                f"(need r >= {4 * grid.h} and the region inside the box)")

    def to_dict(self) -> dict:
        return {"n": self.n, "r_top": self.r_top, "levels": self.levels,
                "center": self.center.tolist(), "extent": self.extent}


def ball_measure(n, radius) -> float:
    """Lebesgue measure of the ``n``-dimensional ball."""
    return 2.0 * radius if n == 1 else np.pi * radius * radius
