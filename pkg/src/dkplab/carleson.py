"""Discrete Carleson measures sampled on dyadic windows.

A density ``d(x_j, r_k)`` is read against ``dx dr / r``.  Each window
carries the boundary area ``(r_k/2)^n`` of its lattice site and the
logarithmic shell ``ln 2``, so

    mu(T_Delta) ~ sum_{(x_j, r_k) in T_Delta} d(x_j, r_k) ln2 (r_k/2)^n.

Inclusion in ``T_Delta`` is closed, so a query ball counts its own window.
Localized norms take the supremum over the query balls contained in the
ball of interest.  The query set is every window ball ``Delta(x_j, r_k)``
plus the ball itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import DyadicWindowSet, ball_measure

LN2 = float(np.log(2.0))


@dataclass
class DyadicCarlesonMeasure:
    """Density samples on a :class:`DyadicWindowSet` with localized norms.

    Attributes
    ----------
    windows : DyadicWindowSet
    density : ndarray
        Nonnegative density per window.
    label : str
    variants : dict
        Companion measures on the same windows (e.g. ``gamma2``).
    """

    windows: DyadicWindowSet
    density: np.ndarray
    label: str = ""
    variants: dict = field(default_factory=dict)

    def __post_init__(self):
        self.density = np.asarray(self.density, dtype=float)
        if self.density.shape != (len(self.windows),):
            raise ValueError("one density sample per window is required")
        if not np.all(np.isfinite(self.density)):
            raise ValueError(f"non-finite density samples in {self.label or 'measure'}")
        if np.any(self.density < 0):
            raise ValueError("Carleson densities must be nonnegative")

    @property
    def weights(self) -> np.ndarray:
        return LN2 * self.windows.cell_area()

    def mass(self, center, radius) -> float:
        """``mu(T_Delta)`` for ``Delta = Delta(center, radius)``."""
        c = np.broadcast_to(np.asarray(center, dtype=float), (self.windows.n,))
        d2 = np.sum((self.windows.x - c) ** 2, axis=1) + self.windows.r ** 2
        inside = d2 <= radius * radius * (1 + 1e-12)
        return float(np.sum(self.density[inside] * self.weights[inside]))

    def _masses(self, centers, radii, chunk=2048):
        w = self.density * self.weights
        nz = w > 0
        wx, wr, ww = self.windows.x[nz], self.windows.r[nz], w[nz]
        out = np.zeros(len(radii))
        for a in range(0, len(radii), chunk):
            c = centers[a:a + chunk]
            rho = radii[a:a + chunk]
            d2 = np.sum((c[:, None, :] - wx[None, :, :]) ** 2, axis=2) + wr[None, :] ** 2
            out[a:a + chunk] = (d2 <= rho[:, None] ** 2 * (1 + 1e-12)) @ ww
        return out

    def query_norms(self):
        """Normalized masses ``mu(T_Delta)/|Delta|`` of every window ball."""
        if not hasattr(self, "_qn"):
            x, r = self.windows.x, self.windows.r
            self._qn = self._masses(x, r) / ball_measure(self.windows.n, 1.0) / r ** self.windows.n
        return self._qn

    def local_norm(self, center, radius) -> float:
        """``||mu||_C(Delta(center, radius))``: sup over query balls inside the ball."""
        c = np.broadcast_to(np.asarray(center, dtype=float), (self.windows.n,))
        own = self.mass(c, radius) / ball_measure(self.windows.n, radius)
        dist = np.sqrt(np.sum((self.windows.x - c) ** 2, axis=1))
        inside = dist + self.windows.r <= radius * (1 + 1e-12)
        q = self.query_norms()[inside]
        return float(max(own, q.max() if q.size else 0.0))

    def global_norm(self) -> float:
        q = self.query_norms()
        return float(q.max()) if q.size else 0.0

    def trace_profile(self, r0_values, centers=None) -> np.ndarray:
        """Vanishing-trace profile ``r0 -> sup_x ||mu||_C(Delta(x, r0))``.

        ``centers`` restricts ``x`` to a compact query set (default: all
        window centres).  Only query balls of radius at most ``r0`` count.
        """
        qn = self.query_norms()
        sel = np.ones(len(qn), dtype=bool)
        if centers is not None:
            c0, rad = centers
            c0 = np.broadcast_to(np.asarray(c0, dtype=float), (self.windows.n,))
            sel = np.sqrt(np.sum((self.windows.x - c0) ** 2, axis=1)) <= rad + 1e-12
        out = []
        for r0 in np.atleast_1d(r0_values):
            m = sel & (self.windows.r <= r0 * (1 + 1e-12))
            out.append(float(qn[m].max()) if m.any() else 0.0)
        return np.array(out)

    def rows(self):
        """``(x..., r, density)`` rows for CSV output."""
        return np.column_stack([self.windows.x, self.windows.r, self.density])
