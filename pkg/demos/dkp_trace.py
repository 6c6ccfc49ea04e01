"""Vanishing versus persistent Carleson traces of coefficient oscillation.

The ``sqrt`` family oscillates like ``eps s^{1/2}`` and its DKP trace
decays with the window size; the ``logsine`` family keeps a fixed
amount of oscillation at every scale.
"""
from dkplab.coefficients import dkp_family, dkp_measure
from dkplab.grid import DyadicWindowSet, build_grid

g = build_grid(1, 0.005, 1.0, 1.0)
ws = DyadicWindowSet(1, 0.32, 5, 0.0, 0.4)
r0 = [0.32, 0.16, 0.08]

for decay in ("sqrt", "logsine"):
    m = dkp_measure(dkp_family(1, 0.2, decay=decay), ws, g)
    prof = m.trace_profile(r0)
    print(f"{decay:>8}: " + "  ".join(f"r0={r:.2f}: {p:.3e}" for r, p in zip(r0, prof)))
