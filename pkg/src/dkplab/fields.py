"""Grid functions and boundary weights shared by the solver and the analytics."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grid import HalfSpaceGrid, surface_ball


@dataclass
class DiscreteField:
    """Nodal values on a :class:`HalfSpaceGrid` plus provenance metadata."""

    grid: HalfSpaceGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values have shape {self.values.shape}, grid has {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("discrete field has non-finite values")

    def __call__(self, points):
        return self.grid.interpolate(self.values, points)

    def at(self, point) -> float:
        return float(self.values[self.grid.node_of(point)])

    def boundary(self) -> np.ndarray:
        return self.values[..., 0]

    def scaled(self, c) -> "DiscreteField":
        return DiscreteField(self.grid, c * self.values, dict(self.meta, scale=c))

    def header(self) -> dict:
        return {"grid": self.grid.to_dict(), "dtype": "float64", "order": "C",
                "shape": list(self.values.shape), **self.meta}

    def save(self, stem):
        """Write ``stem.bin`` (raw float64) and ``stem.json`` (header)."""
        self.values.astype("<f8").tofile(f"{stem}.bin")
        with open(f"{stem}.json", "w") as fh:
            json.dump(self.header(), fh, sort_keys=True, indent=2, default=str)

    @classmethod
    def load(cls, stem) -> "DiscreteField":
        with open(f"{stem}.json") as fh:
            hdr = json.load(fh)
        grid = HalfSpaceGrid.from_dict(hdr["grid"])
        vals = np.fromfile(f"{stem}.bin", dtype="<f8").reshape(grid.shape)
        meta = {k: v for k, v in hdr.items() if k not in ("grid", "dtype", "order", "shape")}
        return cls(grid, vals, meta)


class BoundaryWeight:
    """A nonnegative density on the boundary lattice of a grid.

    Parameters
    ----------
    grid : HalfSpaceGrid
        Supplies the boundary lattice (nodes ``x`` and cell centres ``xc``).
    density : array, optional
        Density at the boundary nodes, shape ``(nx,)*n``.
    func : callable, optional
        Analytic density ``w(y)`` on points ``(..., n)``.  When given, ball
        integrals and convolutions sample it at cell centres.
    masses : array, optional
        Node masses (e.g. discrete elliptic measure); the density is derived
        through the trapezoid weights.
    provenance : dict
        ``{"pole": [..]}``, ``{"pole": "infinity"}`` or ``{"source": "analytic"}``.
    """

    def __init__(self, grid: HalfSpaceGrid, density=None, func: Optional[Callable] = None,
                 masses=None, provenance=None, allow_negative=False):
        self.grid = grid
        self.func = func
        self.provenance = dict(provenance or {})
        h_n = grid.h ** grid.n
        nw = grid.boundary_node_weights()
        if masses is not None:
            self._masses = np.asarray(masses, dtype=float)
            density = self._masses / (h_n * nw)
        elif density is None:
            if func is None:
                raise ValueError("need density, masses or func")
            density = np.asarray(func(grid.boundary_coords()), dtype=float)
            self._masses = None
        else:
            self._masses = None
        self.density = np.asarray(density, dtype=float)
        if self.density.shape != (grid.nx,) * grid.n:
            raise ValueError("density must live on the boundary nodes")
        if not np.all(np.isfinite(self.density)):
            raise ValueError("non-finite boundary density")
        if not allow_negative and np.any(self.density < 0):
            raise ValueError(f"negative boundary density (min {self.density.min():.3g})")

    @classmethod
    def analytic(cls, grid, func, provenance=None, allow_negative=False):
        return cls(grid, func=func, provenance=provenance or {"source": "analytic"},
                   allow_negative=allow_negative)

    @property
    def n(self):
        return self.grid.n

    def node_masses(self) -> np.ndarray:
        if self._masses is not None:
            return self._masses
        return self.density * self.grid.h ** self.n * self.grid.boundary_node_weights()

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.node_masses()))

    @property
    def escaped_mass(self) -> Optional[float]:
        """Mass missing from the truncated boundary (finite poles only)."""
        if "pole" in self.provenance and self.provenance["pole"] != "infinity":
            return 1.0 - self.total_mass
        return None

    def cell_values(self) -> np.ndarray:
        """Density at boundary cell centres."""
        if self.func is not None:
            return np.asarray(self.func(self.grid.boundary_cell_centers()), dtype=float)
        v = self.density
        for ax in range(self.n):
            lo = [slice(None)] * self.n
            hi = [slice(None)] * self.n
            lo[ax], hi[ax] = slice(0, -1), slice(1, None)
            v = 0.5 * (v[tuple(lo)] + v[tuple(hi)])
        return v

    def point_masses(self):
        """Points ``(m, n)`` and masses ``(m,)`` used for convolutions."""
        if self.func is not None:
            pts = self.grid.boundary_cell_centers().reshape(-1, self.n)
            return pts, self.cell_values().reshape(-1) * self.grid.h ** self.n
        return self.grid.boundary_coords().reshape(-1, self.n), self.node_masses().reshape(-1)

    def ball_values(self, x, r) -> np.ndarray:
        """Cell-centre densities inside ``Δ(x, r)``."""
        reg = surface_ball(x, r)
        sl, mask = reg.cell_block(self.grid)
        if not mask.any():
            raise ValueError(f"ball Δ({x}, {r}) contains no boundary cells")
        if np.any(np.abs(np.atleast_1d(x)) + r > self.grid.x_max + 1e-12):
            raise ValueError(f"ball Δ({x}, {r}) leaves the truncated boundary")
        cv = self._cv_cache()
        return cv[sl][mask]

    def _cv_cache(self):
        if not hasattr(self, "_cv"):
            self._cv = self.cell_values()
        return self._cv

    def ball_mass(self, x, r) -> float:
        return float(np.sum(self.ball_values(x, r)) * self.grid.h ** self.n)

    def ball_mean(self, x, r, transform=None) -> float:
        v = self.ball_values(x, r)
        if transform is not None:
            v = transform(v)
        return float(np.mean(v))

    def scaled(self, c) -> "BoundaryWeight":
        f = self.func
        return BoundaryWeight(self.grid, c * self.density,
                              func=None if f is None else (lambda p: c * f(p)),
                              masses=None if self._masses is None else c * self._masses,
                              provenance=dict(self.provenance, scale=c))

    def rows(self):
        """``(y..., k)`` rows for CSV export."""
        return np.column_stack([self.grid.boundary_coords().reshape(-1, self.n),
                                self.density.reshape(-1)])
