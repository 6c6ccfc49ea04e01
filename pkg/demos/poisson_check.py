"""Elliptic measure of the Laplacian against the half-plane Poisson kernel.

Run with ``python demos/poisson_check.py``.  The discrete density is the
conormal flux of the Green function, divided by the node spacing.
"""
import numpy as np

from dkplab.coefficients import identity_field
from dkplab.grid import build_grid
from dkplab.scenarios import poisson_kernel
from dkplab.solver import elliptic_measure_density

X0 = [0.0, 1.0]

for h in (0.04, 0.02, 0.01):
    g = build_grid(1, h, 2.0, 4.0)
    k = elliptic_measure_density(identity_field(1), g, X0)
    y = g.boundary_coords()
    m = np.abs(y[..., 0]) <= 1.0
    exact = poisson_kernel(1, X0, y[m])
    dens = k.node_masses()[m] / h
    err = np.max(np.abs(dens - exact) / exact)
    # total mass should approach the harmonic measure of [-2, 2]
    print(f"h={h:<5} max rel err on |y|<=1: {err:.4f}   "
          f"mass {k.node_masses().sum():.4f} vs {2 / np.pi * np.arctan(2.0):.4f}")
