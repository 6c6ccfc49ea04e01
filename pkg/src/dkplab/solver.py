"""Divergence-form elliptic solves on the truncated half space.

Discretization
--------------
Nodal unknowns with the multilinear (Q1) Galerkin form

    M[a, b] = sum_cells  A_cell : (grad phi_b  grad phi_a)

where ``A`` is sampled at cell centres.  ``M(A^T) = M(A)^T`` holds
exactly, so transpose duality of discrete Green functions is an algebraic
identity.  The scheme is exact on affine functions.

The bottom face carries Dirichlet data.  The artificial faces follow one of
three policies:

``dirichlet``
    Dirichlet data on every face (zero for Green functions).
``farfield``
    A Robin condition matching the decay ``s / q(Y)^{(n+1)/2}`` of a
    half-space Green function, with ``q(Y) = Y^T S^{-1} Y`` for a reference
    matrix ``S``.  This is the default for Green functions.
``neumann``
    Zero conormal flux on the lateral faces and Dirichlet on the top; used
    for the pole at infinity.

Elliptic measure masses are the discrete conormal fluxes ``-(M^T G)`` on
bottom nodes.  By the discrete Riesz identity they coincide with the
values at the pole of the Dirichlet solutions with nodal indicator data.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import EllipticMatrixField
from .fields import BoundaryWeight, DiscreteField
from .grid import HalfSpaceGrid, ball_measure, carleson, whitney

log = logging.getLogger(__name__)

POLICIES = ("dirichlet", "farfield", "neumann")
DIRECT_LIMIT = 200_000
RESIDUAL_TARGET = 1e-10


class SolverError(RuntimeError):
    """Raised when a linear solve misses the residual target."""


def _ref_stiffness(d):
    """``R[k, l, a, b] = int_{[0,1]^d} d_k phi_a d_l phi_b`` for Q1 shape functions."""
    corners = np.array(list(itertools.product((0, 1), repeat=d)))
    g = np.array([0.5 - 0.5 / np.sqrt(3), 0.5 + 0.5 / np.sqrt(3)])
    R = np.zeros((d, d, 2 ** d, 2 ** d))
    for q in itertools.product(range(2), repeat=d):
        xi = g[list(q)]
        # values and derivatives of each 1-D factor at the Gauss point
        val = np.where(corners == 1, xi, 1 - xi)
        der = np.where(corners == 1, 1.0, -1.0)
        grads = np.empty((2 ** d, d))
        for k in range(d):
            other = np.prod(np.delete(val, k, axis=1), axis=1)
            grads[:, k] = der[:, k] * other
        R += np.einsum("ak,bl->klab", grads, grads) / 2 ** d
    return R, corners


def _cell_nodes(shape):
    """Flat node index of each corner of each cell, shape ``(cells, 2^d)``."""
    d = len(shape)
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    base = idx[tuple(slice(0, m - 1) for m in shape)].reshape(-1)
    strides = np.array([int(np.prod(shape[k + 1:])) for k in range(d)])
    _, corners = _ref_stiffness(d) if d <= 3 else (None, None)
    return base[:, None] + (corners @ strides)[None, :]


def assemble_stiffness(grid: HalfSpaceGrid, Acells: np.ndarray) -> sp.csr_matrix:
    """Global Q1 stiffness for cell-constant coefficients ``Acells``."""
    d = grid.dim
    R, _ = _ref_stiffness(d)
    A = Acells.reshape(-1, d, d)
    K = np.einsum("ckl,klab->cab", A, R) * grid.h ** (d - 2)
    nodes = _cell_nodes(grid.shape)
    m = 2 ** d
    rows = np.repeat(nodes, m, axis=1).reshape(-1)
    cols = np.tile(nodes, (1, m)).reshape(-1)
    N = grid.num_nodes
    return sp.csr_matrix((K.reshape(-1), (rows, cols)), shape=(N, N))


def _faces(grid, policy):
    """Artificial faces ``(axis, side)`` that carry Robin terms under ``policy``."""
    if policy != "farfield":
        return []
    faces = [(a, side) for a in range(grid.n) for side in (0, 1)]
    return faces + [(grid.n, 1)]


def _robin_matrix(grid, faces, S, center):
    """Face mass terms ``int beta u v`` for the far-field Robin condition."""
    d, n, h = grid.dim, grid.n, grid.h
    Sinv = np.linalg.inv(S)
    m1 = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
    corners = np.array(list(itertools.product((0, 1), repeat=n)))
    mref = np.ones((2 ** n, 2 ** n))
    for j in range(n):
        mref = mref * m1[corners[:, j][:, None], corners[:, j][None, :]]
    mref *= h ** n
    idx = grid.node_index
    rows, cols, vals = [], [], []
    axes = grid.axes()
    for axis, side in faces:
        others = [k for k in range(d) if k != axis]
        sl = [slice(None)] * d
        sl[axis] = 0 if side == 0 else grid.shape[axis] - 1
        fidx = idx[tuple(sl)]                       # node ids on the face, shape over `others`
        fshape = fidx.shape
        strides = np.array([int(np.prod(fshape[k + 1:])) for k in range(n)])
        off = corners @ strides
        flat = fidx.reshape(-1)
        cnodes = flat[_face_positions(fshape)[:, None] + off[None, :]]
        # face-cell centres
        mids = [0.5 * (axes[k][:-1] + axes[k][1:]) for k in others]
        C = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1).reshape(-1, n)
        Y = np.empty((C.shape[0], d))
        Y[:, others] = C
        Y[:, axis] = axes[axis][0 if side == 0 else -1]
        Y[:, :n] -= center
        nu = np.zeros(d)
        nu[axis] = 1.0 if side == 1 else -1.0
        q = np.einsum("ci,ij,cj->c", Y, Sinv, Y)
        beta = (n + 1) * (Y @ nu) / q - (S[:, -1] @ nu) / Y[:, -1]
        beta = np.maximum(beta, 0.0)
        K = beta[:, None, None] * mref[None]
        m = 2 ** n
        rows.append(np.repeat(cnodes, m, axis=1).reshape(-1))
        cols.append(np.tile(cnodes, (1, m)).reshape(-1))
        vals.append(K.reshape(-1))
    N = grid.num_nodes
    if not rows:
        return sp.csr_matrix((N, N))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(N, N))


def _face_positions(fshape):
    """Flat positions (within a face array) of the lower corner of each face cell."""
    pos = np.arange(int(np.prod(fshape))).reshape(fshape)
    return pos[tuple(slice(0, m - 1) for m in fshape)].reshape(-1)


def _dirichlet_mask(grid, policy):
    mask = np.zeros(grid.shape, dtype=bool)
    mask[..., 0] = True
    if policy == "dirichlet":
        for a in range(grid.n):
            sl = [slice(None)] * grid.dim
            sl[a] = 0
            mask[tuple(sl)] = True
            sl[a] = -1
            mask[tuple(sl)] = True
        mask[..., -1] = True
    elif policy == "neumann":
        mask[..., -1] = True
    return mask.reshape(-1)


class _LinearSolver:
    """Direct (SuperLU) below ``DIRECT_LIMIT`` unknowns, AMG-preconditioned Krylov above."""

    def __init__(self, M: sp.csr_matrix, method="auto"):
        self.M = M.tocsr()
        self.N = M.shape[0]
        if method == "auto":
            method = "direct" if self.N <= DIRECT_LIMIT else "amg"
        self.method = method
        self._lu = None
        self._amg = {}
        self.symmetric = abs(self.M - self.M.T).max() <= 1e-14 * abs(self.M).max() if self.N else True

    def _direct(self):
        if self._lu is None:
            self._lu = spla.splu(self.M.tocsc())
        return self._lu

    def solve(self, b, trans=False):
        b = np.asarray(b, dtype=float)
        if self.method == "direct":
            x = self._direct().solve(b, trans="T" if trans else "N")
        else:
            x = self._iterative(b, trans)
        self._check(x, b, trans)
        return x

    def _iterative(self, b, trans):
        import pyamg

        key = bool(trans and not self.symmetric)
        if key not in self._amg:
            Mat = self.M.T.tocsr() if key else self.M
            self._amg[key] = (Mat, pyamg.smoothed_aggregation_solver(Mat, symmetry="symmetric" if self.symmetric else "nonsymmetric"))
        Mat, ml = self._amg[key]
        accel = "cg" if self.symmetric else "gmres"
        cols = b.reshape(self.N, -1)
        out = np.empty_like(cols)
        for j in range(cols.shape[1]):
            out[:, j] = ml.solve(cols[:, j], tol=1e-13, accel=accel, maxiter=500)
        return out.reshape(b.shape)

    def _check(self, x, b, trans):
        Mat = self.M.T if trans else self.M
        r = Mat @ x - b
        nb = np.linalg.norm(b)
        rel = np.linalg.norm(r) / nb if nb > 0 else np.linalg.norm(r)
        if not np.isfinite(rel) or rel > RESIDUAL_TARGET:
            raise SolverError(f"linear solve missed the residual target: {rel:.3g} > {RESIDUAL_TARGET}")


class DiscreteOperator:
    """Assembled operator ``L = -div A grad`` on a grid under a face policy.

    Parameters
    ----------
    A : EllipticMatrixField
    grid : HalfSpaceGrid
    policy : str
        ``dirichlet``, ``farfield`` or ``neumann``.
    farfield_matrix : array, optional
        Reference matrix ``S`` of the far-field condition.  Defaults to the
        symmetric part of the mean of ``A`` on the cells touching the Robin
        faces.
    farfield_center : sequence, optional
        Boundary point used as the dipole origin (default 0).
    backend : str
        ``auto``, ``direct`` or ``amg``.
    """

    def __init__(self, A: EllipticMatrixField, grid: HalfSpaceGrid, policy="farfield",
                 farfield_matrix=None, farfield_center=None, backend="auto"):
        if policy not in POLICIES:
            raise ValueError(f"unknown lateral policy {policy!r}; expected one of {POLICIES}")
        self.A, self.grid, self.policy = A, grid, policy
        Ac = A.cell_values(grid)
        M = assemble_stiffness(grid, Ac)
        faces = _faces(grid, policy)
        self.farfield_matrix = None
        if faces:
            S = farfield_matrix
            if S is None:
                S = _face_mean(Ac, grid)
            S = np.asarray(S, dtype=float)
            S = 0.5 * (S + S.T)
            c = np.zeros(grid.n) if farfield_center is None else np.asarray(farfield_center, float)
            M = M + _robin_matrix(grid, faces, S, c)
            self.farfield_matrix = S
        self.M = M.tocsr()
        self.dmask = _dirichlet_mask(grid, policy)
        self.I = np.flatnonzero(~self.dmask)
        self.D = np.flatnonzero(self.dmask)
        self.pos = -np.ones(grid.num_nodes, dtype=np.int64)
        self.pos[self.I] = np.arange(len(self.I))
        self.MII = self.M[self.I][:, self.I].tocsr()
        self.MID = self.M[self.I][:, self.D].tocsr()
        self.bottom = grid.boundary_index.reshape(-1)
        self._solver = _LinearSolver(self.MII, backend)

    @property
    def num_unknowns(self):
        return len(self.I)

    def describe(self) -> dict:
        d = {"policy": self.policy, "operator": self.A.describe()}
        if self.farfield_matrix is not None:
            d["farfield_matrix"] = self.farfield_matrix.tolist()
        return d

    # -- solves -----------------------------------------------------------
    def solve_interior(self, rhs, transpose=False):
        return self._solver.solve(rhs, trans=transpose)

    def dirichlet(self, values_D) -> np.ndarray:
        """Full nodal solution with Dirichlet values on ``self.D``."""
        u = np.zeros(self.grid.num_nodes)
        u[self.D] = values_D
        u[self.I] = self.solve_interior(-(self.MID @ values_D))
        return u

    def check_pole(self, X0):
        g = self.grid
        idx = g.node_of(X0)
        h = g.h
        X0 = np.asarray(X0, dtype=float)
        if X0[-1] < 2 * h - 1e-12:
            raise ValueError(f"pole {tuple(X0)} is on or adjacent to the boundary")
        if np.any(np.abs(X0[:-1]) > g.x_max - 2 * h + 1e-12) or X0[-1] > g.t_max - 2 * h + 1e-12:
            raise ValueError(f"pole {tuple(X0)} is on or adjacent to an artificial face")
        return int(g.node_index[idx])

    def green_vectors(self, poles, transpose=False) -> np.ndarray:
        """Columns ``G(X0_j, .)`` (full nodal vectors) for a list of poles.

        ``transpose=False`` gives ``G_L(X0, .)`` (the transposed system is
        solved); ``transpose=True`` gives ``G_{L^T}(X0, .)``.
        """
        ids = [self.pos[self.check_pole(p)] for p in poles]
        E = np.zeros((len(self.I), len(ids)))
        E[ids, np.arange(len(ids))] = 1.0
        g = self.solve_interior(E if len(ids) > 1 else E[:, 0], transpose=not transpose)
        out = np.zeros((self.grid.num_nodes, len(ids)))
        out[self.I] = g.reshape(len(self.I), -1)
        return out

    def flux_masses(self, G_full) -> np.ndarray:
        """Boundary masses ``-(M^T G)`` on the bottom nodes (conormal flux of ``G``)."""
        return -(self.M.T @ G_full)[self.bottom]

    def flux_masses_transposed(self, G_full) -> np.ndarray:
        return -(self.M @ G_full)[self.bottom]


def _face_mean(Ac, grid):
    d = grid.dim
    sel = np.zeros(grid.cell_shape, dtype=bool)
    for a in range(grid.n):
        sl = [slice(None)] * d
        sl[a] = 0
        sel[tuple(sl)] = True
        sl[a] = -1
        sel[tuple(sl)] = True
    sel[..., -1] = True
    return Ac[sel].mean(axis=0)


_CACHE: dict = {}
_CACHE_SIZE = 4


def get_operator(A, grid, policy="farfield", **kw) -> DiscreteOperator:
    """Cached :class:`DiscreteOperator` (a few most recent, keyed on object identity)."""
    key = (id(A), grid.n, grid.h, grid.x_max, grid.t_max, policy,
           tuple(sorted((k, repr(v)) for k, v in kw.items())))
    hit = _CACHE.get(key)
    if hit is not None and hit.A is A:
        return hit
    op = DiscreteOperator(A, grid, policy, **kw)
    if len(_CACHE) >= _CACHE_SIZE:
        _CACHE.pop(next(iter(_CACHE)))
    _CACHE[key] = op
    return op


def clear_cache():
    _CACHE.clear()


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def solve_dirichlet(A, grid, boundary_data, lateral_policy="dirichlet", **kw) -> DiscreteField:
    """Solve ``-div A grad u = 0`` with Dirichlet data.

    Parameters
    ----------
    A : EllipticMatrixField
    grid : HalfSpaceGrid
    boundary_data : callable or array
        Callable on points ``(..., n+1)`` evaluated at every Dirichlet node,
        or an array on the bottom nodes (other Dirichlet nodes get 0).
    lateral_policy : str
        Face policy, see module docstring.

    Returns
    -------
    DiscreteField
        ``meta['max_principle_violation']`` records how far the solution
        leaves ``[min data, max data]`` (0 if it does not).
    """
    op = get_operator(A, grid, lateral_policy, **kw)
    coords = grid.node_coords().reshape(-1, grid.dim)
    if callable(boundary_data):
        vD = np.asarray(boundary_data(coords[op.D]), dtype=float)
    else:
        full = np.zeros(grid.num_nodes)
        full[op.bottom] = np.asarray(boundary_data, dtype=float).reshape(-1)
        vD = full[op.D]
    if not np.all(np.isfinite(vD)):
        raise ValueError("boundary data must be finite")
    u = op.dirichlet(vD)
    lo, hi = vD.min(), vD.max()
    if lateral_policy != "dirichlet":
        lo, hi = min(lo, 0.0), max(hi, 0.0)
    viol = float(max(0.0, u.max() - hi, lo - u.min()))
    if viol > 1e-9:
        log.warning("discrete maximum principle violated by %.3g", viol)
    return DiscreteField(grid, u.reshape(grid.shape),
                         {"kind": "dirichlet", "max_principle_violation": viol, **op.describe()})


def green_function(A, grid, X0, lateral_policy="farfield", transpose=False, **kw) -> DiscreteField:
    """Discrete Green function ``Y -> G_L(X0, Y)`` (unit point mass at ``X0``).

    ``transpose=True`` returns ``Y -> G_{L^T}(X0, Y)`` from the forward system.
    """
    op = get_operator(A, grid, lateral_policy, **kw)
    g = op.green_vectors([X0], transpose=transpose)[:, 0]
    return DiscreteField(grid, g.reshape(grid.shape),
                         {"kind": "green", "pole": [float(v) for v in X0],
                          "transpose": transpose, **op.describe()})


def elliptic_measure_density(A, grid, X0, method="flux", lateral_policy="farfield",
                             G: Optional[DiscreteField] = None, **kw) -> BoundaryWeight:
    """Elliptic-measure density ``k^{X0}`` on the boundary nodes.

    ``method='flux'`` takes the conormal flux of the Green function;
    ``method='many-solve'`` evaluates at ``X0`` the Dirichlet solutions with
    nodal indicator data, one per boundary node (coarse grids only).
    """
    op = get_operator(A, grid, lateral_policy, **kw)
    if method == "flux":
        if G is None:
            G = green_function(A, grid, X0, lateral_policy, **kw)
        masses = op.flux_masses(G.values.reshape(-1))
    elif method == "many-solve":
        p = op.pos[op.check_pole(X0)]
        bpos = np.searchsorted(op.D, op.bottom)
        masses = np.empty(len(op.bottom))
        chunk = 256
        for a in range(0, len(op.bottom), chunk):
            cols = op.MID[:, bpos[a:a + chunk]].toarray()
            U = op.solve_interior(-cols if cols.shape[1] > 1 else -cols[:, 0])
            masses[a:a + chunk] = np.atleast_2d(U.reshape(len(op.I), -1))[p]
    else:
        raise ValueError(f"unknown method {method!r}")
    masses = masses.reshape((grid.nx,) * grid.n)
    return BoundaryWeight(grid, masses=masses, allow_negative=True,
                          provenance={"pole": [float(v) for v in X0], "method": method,
                                      **op.describe()})


@dataclass
class InfinityResult:
    """Green function with pole at infinity and its boundary measure."""

    U: DiscreteField
    k: BoundaryWeight
    history: list
    converged: bool
    k_used: int


def green_at_infinity(A, grid, window=None, tol=1e-3, strict=True, **kw) -> InfinityResult:
    """Normalized receding-pole limit ``U`` with ``U(0, 1) = 1`` and its density ``k_inf``.

    Iterates ``u_k = G((0, 2^k), .) / G((0, 2^k), (0, 1))`` for
    ``2^k <= T_max/4`` on a box with natural lateral faces, stopping when the
    relative sup-difference on ``window`` (default ``|y| <= X_max/2``,
    ``s <= 1``) drops below ``tol``.
    """
    if grid.t_max < 4 * grid.x_max - 1e-12:
        raise ValueError("pole at infinity needs a tall box (t_max >= 4 x_max)")
    kmax = int(np.floor(np.log2(grid.t_max / 4) + 1e-12))
    if kmax < 2:
        raise ValueError("box too short for the receding-pole iteration")
    op = get_operator(A, grid, "neumann", **kw)
    # k = 0 would put the pole on the normalisation point (0, 1)
    ks = list(range(1, kmax + 1))
    poles = [np.r_[np.zeros(grid.n), 2.0 ** k] for k in ks]
    Gs = op.green_vectors(poles)
    ref = grid.node_index[grid.node_of(np.r_[np.zeros(grid.n), 1.0])]
    U = Gs / Gs[ref][None, :]
    coords = grid.node_coords().reshape(-1, grid.dim)
    if window is None:
        wx, wt = 0.5 * grid.x_max, min(1.0, grid.t_max)
    else:
        wx, wt = window
    wm = np.all(np.abs(coords[:, :-1]) <= wx + 1e-12, axis=1) & (coords[:, -1] <= wt + 1e-12)
    history = []
    used, ok = len(ks) - 1, False
    for j in range(1, len(ks)):
        diff = np.max(np.abs(U[wm, j] - U[wm, j - 1])) / np.max(np.abs(U[wm, j]))
        history.append({"k": ks[j], "pole_height": 2.0 ** ks[j], "rel_sup_diff": float(diff)})
        if diff <= tol:
            used, ok = j, True
            break
    if not ok:
        msg = f"pole-at-infinity iteration did not converge: last difference {history[-1]['rel_sup_diff']:.3g} > {tol}"
        if strict:
            raise SolverError(msg)
        log.warning(msg)
    u = U[:, used]
    masses = op.flux_masses(u).reshape((grid.nx,) * grid.n)
    meta = {"kind": "green_at_infinity", "k": ks[used], **op.describe()}
    return InfinityResult(DiscreteField(grid, u.reshape(grid.shape), meta),
                          BoundaryWeight(grid, masses=masses, allow_negative=True,
                                         provenance={"pole": "infinity", **op.describe()}),
                          history, ok, ks[used])


# ---------------------------------------------------------------------------
# Riesz formula residuals
# ---------------------------------------------------------------------------

def smoothstep(t):
    """Quintic smoothstep clipped to ``[0, 1]``."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10 - 15 * t + 6 * t * t)


def dsmoothstep(t):
    inside = (t > 0) & (t < 1)
    return np.where(inside, 30 * t * t * (1 - t) ** 2, 0.0)


@dataclass
class RieszTest:
    """Test pair ``f(y) = exp(-|y-c|^2/w^2)``, ``F = f(y) chi(s / s_c)``."""

    center: tuple
    width: float
    s_cut: float

    def f(self, y):
        c = np.asarray(self.center)
        return np.exp(-np.sum((y - c) ** 2, axis=-1) / self.width ** 2)

    def grad_F(self, p):
        y, s = p[..., :-1], p[..., -1]
        c = np.asarray(self.center)
        f = self.f(y)
        chi = 1 - smoothstep(s / self.s_cut)
        g = np.empty(p.shape)
        g[..., :-1] = (-2 * (y - c) / self.width ** 2) * (f * chi)[..., None]
        g[..., -1] = -f * dsmoothstep(s / self.s_cut) / self.s_cut
        return g


def default_riesz_suite(n, s_cut, centers=(-0.5, 0.0, 0.5), widths=(0.25, 0.5)):
    out = []
    for c in centers:
        for w in widths:
            out.append(RieszTest(tuple([c] + [0.0] * (n - 1)), w, s_cut))
    return out


@dataclass
class RieszResult:
    max_rel: float
    rows: list = field(default_factory=list)


def riesz_residual(A, G: DiscreteField, k: BoundaryWeight, suite=None, pole=None) -> RieszResult:
    """Max relative residual of ``int f k dy = -iint A^T grad G . grad F`` over a test suite.

    The right side uses midpoint quadrature with the cell gradient of ``G``
    and the analytic gradient of ``F``; the left side uses the node masses
    of ``k``.  ``suite=[]`` (no tests, i.e. ``f = F = 0``) returns 0.
    """
    grid = G.grid
    if k.grid != grid:
        raise ValueError("G and k must live on the same grid")
    if pole is None:
        pole = G.meta.get("pole")
    if suite is None:
        t0 = np.inf if pole in (None, "infinity") else float(pole[-1])
        suite = default_riesz_suite(grid.n, min(1.0, 0.5 * t0, 0.5 * grid.t_max))
    rows = []
    if not suite:
        return RieszResult(0.0, rows)
    Ac = A.cell_values(grid)
    gradG = grid.cell_gradient(G.values)
    flux = np.einsum("...lk,...l->...k", Ac, gradG)      # A^T grad G
    centers = grid.cell_centers()
    ypts = grid.boundary_coords()
    masses = k.node_masses()
    vol = grid.cell_volume
    worst = 0.0
    for test in suite:
        c = np.asarray(test.center)
        if np.any(np.abs(c) + 6 * test.width > grid.x_max) or test.s_cut > grid.t_max:
            raise ValueError(f"test support of {test} exits the box")
        if pole not in (None, "infinity") and test.s_cut >= float(pole[-1]):
            raise ValueError("test function must vanish near the pole")
        lhs = float(np.sum(test.f(ypts) * masses))
        smask = centers[..., -1] < test.s_cut
        gF = test.grad_F(centers[smask])
        rhs = -float(np.sum(flux[smask] * gF) * vol)
        rel = abs(lhs - rhs) / abs(lhs) if lhs != 0 else (0.0 if rhs == 0 else np.inf)
        rows.append({"center": list(test.center), "width": test.width, "lhs": lhs, "rhs": rhs, "rel": rel})
        worst = max(worst, rel)
    return RieszResult(worst, rows)


# ---------------------------------------------------------------------------
# comparability of measure, Green function and energy
# ---------------------------------------------------------------------------

def comparability_report(A, grid, pole, windows, G: Optional[DiscreteField] = None,
                         k: Optional[BoundaryWeight] = None, lateral_policy="farfield"):
    """Per-window CFMS, energy, doubling and energy/measure ratios.

    Parameters
    ----------
    pole : sequence or "infinity"
    windows : iterable of ``(x, r)``

    Returns
    -------
    rows : list of dict
    summary : dict
        ``{ratio: (min, max)}`` over the sweep.
    """
    if G is None or k is None:
        if pole == "infinity":
            res = green_at_infinity(A, grid, strict=False)
            G, k = res.U, res.k
        else:
            G = green_function(A, grid, pole, lateral_policy)
            k = elliptic_measure_density(A, grid, pole, G=G, lateral_policy=lateral_policy)
    gradsq = np.sum(grid.cell_gradient(G.values) ** 2, axis=-1)
    rows = []
    for x, r in windows:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if pole != "infinity":
            P = np.asarray(pole, dtype=float)
            if np.sum((P[:-1] - x) ** 2) + P[-1] ** 2 < (4 * r) ** 2:
                raise ValueError(f"pole {tuple(P)} lies in T({tuple(x)}, {4 * r})")
        if np.any(np.abs(x) + 2 * r > grid.x_max) or r > grid.t_max:
            raise ValueError(f"window ({tuple(x)}, {r}) leaves the box")
        wball = k.ball_mass(x, r)
        w2 = k.ball_mass(x, 2 * r)
        area = ball_measure(grid.n, r)
        Gxr = float(G(np.r_[x, r]))
        sl, mask = carleson(x, r).cell_block(grid)
        E = float(gradsq[sl][mask].mean())
        wsl, wmask = whitney(x, r).cell_block(grid)
        wv = grid.cell_average(G.values)[wsl][wmask]
        rows.append({
            "x": x.tolist(), "r": r,
            "cfms": (wball / area) / (Gxr / r),
            "energy": E / (Gxr ** 2 / r ** 2),
            "doubling": w2 / wball,
            "energy_measure": (wball / area) / np.sqrt(E),
            "harnack": float(wv.max() / wv.min()),
        })
    keys = ("cfms", "energy", "doubling", "energy_measure", "harnack")
    summary = {key: (min(r_[key] for r_ in rows), max(r_[key] for r_ in rows)) for key in keys} if rows else {}
    return rows, summary
