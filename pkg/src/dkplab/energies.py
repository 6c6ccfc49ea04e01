"""Local energies and beta numbers of a solution over Carleson regions.

For a window ``(x, r)`` the averages run over the cells of the discrete
half-ball ``T(x, r)``:

    E   = mean |grad u|^2          E_i = mean |d_i u|^2
    lam = mean d_t u               J   = mean |grad u - lam e_t|^2
    beta = J / E                   beta_i = E_i / E
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .carleson import DyadicCarlesonMeasure
from .coefficients import _map, oscillation
from .fields import BoundaryWeight, DiscreteField
from .grid import DyadicWindowSet, carleson


class ZeroEnergy(ValueError):
    """Raised when ``grad u`` vanishes identically on a region."""


@dataclass
class LocalEnergyRecord:
    x: tuple
    r: float
    E: float
    E_i: np.ndarray
    lam: float
    J: float

    @property
    def beta(self) -> float:
        return self.J / self.E

    @property
    def beta_i(self) -> np.ndarray:
        return self.E_i / self.E

    def row(self):
        return list(self.x) + [self.r, self.E, *self.E_i, self.lam, self.J, self.beta, *self.beta_i]


def energy_columns(n):
    xs = [f"x{i + 1}" for i in range(n)] if n > 1 else ["x"]
    return xs + ["r", "E"] + [f"E_{i + 1}" for i in range(n)] + ["lambda", "J", "beta"] + \
        [f"beta_{i + 1}" for i in range(n)]


def _gradient(u: DiscreteField):
    g = getattr(u, "_grad", None)
    if g is None:
        g = u.grid.cell_gradient(u.values)
        u._grad = g
    return g


def local_energies(u: DiscreteField, x, r) -> LocalEnergyRecord:
    """Energy averages of ``u`` over the discrete half-ball ``T(x, r)``.

    ``J`` is accumulated as ``sum_i E_i + mean (d_t u - lam)^2`` so that
    ``beta_i <= beta`` holds exactly in floating point.

    Raises
    ------
    ZeroEnergy
        If ``E == 0`` on the region.
    """
    grid = u.grid
    if r < 4 * grid.h - 1e-12:
        raise ValueError(f"window radius {r} below the resolvable minimum {4 * grid.h}")
    reg = carleson(x, r)
    if not reg.fits(grid):
        raise ValueError(f"T({reg.center}, {r}) leaves the truncation box")
    sl, mask = reg.cell_block(grid)
    g = _gradient(u)[sl][mask]
    n = grid.n
    sq = g * g
    E_i = sq[:, :n].mean(axis=0)
    E = float(sq.sum(axis=1).mean())
    if E == 0.0:
        raise ZeroEnergy(f"u has zero energy on T({reg.center}, {r})")
    lam = float(g[:, n].mean())
    J = float(np.sum(E_i) + np.mean((g[:, n] - lam) ** 2))
    return LocalEnergyRecord(reg.center, float(r), E, E_i, lam, J)


def _check_windows(u, windows, pole, factor=1.0):
    grid = u.grid
    rr = factor * windows.r
    ok = np.all(np.abs(windows.x) + rr[:, None] <= grid.x_max + 1e-12, axis=1) & (rr <= grid.t_max + 1e-12)
    if not ok.all():
        i = int(np.argmin(ok))
        raise ValueError(f"window (x={tuple(windows.x[i])}, r={windows.r[i]}) touches the box faces")
    if pole is not None:
        p = np.asarray(pole, dtype=float)
        d2 = np.sum((windows.x - p[:-1]) ** 2, axis=1) + p[-1] ** 2
        bad = d2 <= (factor * windows.r + 2 * grid.h) ** 2
        if bad.any():
            i = int(np.argmax(bad))
            raise ValueError(f"window (x={tuple(windows.x[i])}, r={windows.r[i]}) contains the pole {tuple(p)}")


def beta_carleson_profile(u: DiscreteField, windows: DyadicWindowSet, pole=None,
                          workers=1) -> DyadicCarlesonMeasure:
    """Carleson measure with density ``beta_u`` and variants ``beta_i``.

    The records are attached as ``.records``.
    """
    _check_windows(u, windows, pole)
    recs = _map(lambda w: local_energies(u, w[0], w[1]), list(windows), workers)
    n = u.grid.n
    variants = {f"beta_{i + 1}": DyadicCarlesonMeasure(windows, np.array([q.beta_i[i] for q in recs]),
                                                       f"beta_{i + 1}") for i in range(n)}
    m = DyadicCarlesonMeasure(windows, np.array([q.beta for q in recs]), "beta", variants)
    m.records = recs
    return m


@dataclass
class EtaFit:
    """Least-squares fit ``log ||beta||_C(tau R) = c + eta log tau``."""

    tau: np.ndarray
    norms: np.ndarray
    eta: float
    intercept: float
    residual: float
    dkp_norm: float


def theorem_probe(beta: DyadicCarlesonMeasure, dkp: DyadicCarlesonMeasure, center, R, taus) -> EtaFit:
    """Local beta norms on ``Δ(center, tau R)`` against the DKP norm on ``Δ(center, R)``.

    ``eta`` is a regression estimate, not a certified exponent.
    """
    taus = np.asarray(taus, dtype=float)
    norms = np.array([beta.local_norm(center, t * R) for t in taus])
    pos = norms > 0
    if pos.sum() >= 2:
        A = np.column_stack([np.ones(pos.sum()), np.log(taus[pos])])
        coef, *_ = np.linalg.lstsq(A, np.log(norms[pos]), rcond=None)
        res = float(np.sqrt(np.mean((A @ coef - np.log(norms[pos])) ** 2)))
        c, eta = float(coef[0]), float(coef[1])
    else:
        c = eta = res = np.nan
    return EtaFit(taus, norms, eta, c, res, dkp.local_norm(center, R))


# |ω * ψ_r|^2 below this multiple of |ω * φ_r|^2 is cancellation noise
ROUNDOFF = 1e-24


@dataclass
class ClaimRow:
    x: tuple
    r: float
    lhs: float
    rhs: float
    gamma2: float
    E: float
    E_sum: float
    nu_density: float
    beta_sum: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else (0.0 if self.lhs == 0 else np.inf)

    @property
    def density_ratio(self) -> float:
        b = self.gamma2 + self.beta_sum
        return self.nu_density / b if b > 0 else (0.0 if self.nu_density == 0 else np.inf)

    def row(self):
        return list(self.x) + [self.r, self.lhs, self.rhs, self.ratio, self.nu_density,
                               self.gamma2 + self.beta_sum, self.density_ratio]


CLAIM_COLUMNS_TAIL = ["r", "lhs", "rhs", "ratio", "nu_density", "gamma2_plus_beta", "density_ratio"]


@dataclass
class ClaimProbe:
    rows: list

    @property
    def max_ratio(self) -> float:
        return max(r.ratio for r in self.rows)

    @property
    def max_density_ratio(self) -> float:
        return max(r.density_ratio for r in self.rows)


def claim_probe(A, G: DiscreteField, k: BoundaryWeight, mollifier, windows: DyadicWindowSet,
                pole=None, workers=1) -> ClaimProbe:
    """Pointwise numerator bound for the FKP density, window by window.

    ``LHS = |ω * ψ_r(x)|^2`` against
    ``RHS = gamma(x, 2r)^2 E_G(x, 2r) + sum_l E_{G,l}(x, 2r)``, with ``G``
    the Green function (or ``U``) that produced ``k``.
    """
    from .weights import mollified

    if pole is None and "pole" in G.meta and G.meta["pole"] != "infinity":
        pole = G.meta["pole"]
    _check_windows(G, windows, pole, factor=2.0)
    reach = mollifier.support * windows.r
    if np.any(np.abs(windows.x) + reach[:, None] > G.grid.x_max + 1e-12):
        raise ValueError("mollifier support leaves the truncated boundary")
    num, den = mollified(k, mollifier, windows.x, windows.r)

    def one(i):
        x, r = windows.x[i], float(windows.r[i])
        rec = local_energies(G, x, 2 * r)
        g2 = oscillation(A, x, 2 * r, G.grid).gamma ** 2
        lhs = float(np.sum(num[i] ** 2))
        if lhs <= ROUNDOFF * den[i] ** 2:
            lhs = 0.0
        return ClaimRow(tuple(x), r, lhs, g2 * rec.E + float(np.sum(rec.E_i)), g2, rec.E,
                        float(np.sum(rec.E_i)), lhs / den[i] ** 2, float(np.sum(rec.beta_i)))
    return ClaimProbe(_map(one, range(len(windows)), workers))
