"""Square-Dini integral of a gradient modulus sampled from a graph.

For ``phi(y) = |y|^{3/2}/(3/2)`` the gradient modulus is ``sqrt(2r)``, so
the integral of ``theta(r)^2 / r`` over ``(0, 1]`` equals 2.  The sampled
modulus is extended below the finest lag by its fitted power law.
"""
from dkplab.graphdomain import power_graph, square_dini_integral

th = power_graph(0.5).theta(1.0, 0.005, 1.0)
d = square_dini_integral(th, 1.0)
print(f"fitted exponent {th.exponent:.4f}")
print(f"square-Dini integral {d.value:.4f} (tail {d.tail:.4f}), exact 2")
