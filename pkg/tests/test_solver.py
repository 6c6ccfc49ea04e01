import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dkplab.coefficients import constant_field, dkp_family, identity_field, sine_shear
from dkplab.grid import build_grid
from dkplab.scenarios import green_half_space, poisson_kernel
from dkplab.solver import (SolverError, default_riesz_suite, elliptic_measure_density, get_operator,
                           green_at_infinity, green_function, riesz_residual, solve_dirichlet)

COARSE = build_grid(1, 0.1, 1.0, 1.0)


def test_bilinear_harmonic_reproduced_exactly():
    g = build_grid(1, 0.05, 1.0, 1.0)
    u = solve_dirichlet(identity_field(1), g, lambda p: 1 + 2 * p[..., 0] - p[..., 1] + p[..., 0] * p[..., 1])
    P = g.node_coords()
    exact = 1 + 2 * P[..., 0] - P[..., 1] + P[..., 0] * P[..., 1]
    assert np.max(np.abs(u.values - exact)) < 1e-12


def test_linear_solution_for_constant_matrix():
    # s is A-harmonic for any constant A
    g = build_grid(1, 0.05, 1.0, 1.0)
    A = constant_field([[2.0, 0.7], [-0.4, 1.0]])
    u = solve_dirichlet(A, g, lambda p: p[..., 1])
    assert np.max(np.abs(u.values - g.node_coords()[..., 1])) < 1e-12


def test_dirichlet_indicator_half_plane_value():
    # half-plane Poisson integral of the indicator of |y| <= 1/2, seen from (0, 1)
    g = build_grid(1, 0.01, 4.0, 8.0)
    u = solve_dirichlet(identity_field(1), g, lambda p: ((np.abs(p[..., 0]) <= 0.5 + 1e-9) & (p[..., 1] == 0)) * 1.0,
                        lateral_policy="farfield")
    exact = 2 * np.arctan(0.5) / np.pi
    assert u.values[g.node_of([0.0, 1.0])] == pytest.approx(exact, rel=0.02)


def test_constants_are_solutions():
    u = solve_dirichlet(sine_shear(1, 0.5, 3.0), COARSE, lambda p: np.ones(p.shape[:-1]))
    assert np.allclose(u.values, 1.0, atol=1e-12)


def test_green_reflection_formula():
    g = build_grid(1, 0.02, 3.0, 6.0)
    G = green_function(identity_field(1), g, [0.0, 1.0])
    P = g.node_coords()
    d = np.hypot(P[..., 0], P[..., 1] - 1.0)
    m = (d > 0.3) & (np.abs(P[..., 0]) <= 1.0) & (P[..., 1] <= 2.0) & (P[..., 1] > 0)
    exact = green_half_space(1, [0.0, 1.0], P[m])
    assert np.max(np.abs(G.values[m] - exact) / exact) < 0.03


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=21, max_size=21))
def test_maximum_principle(data):
    u = solve_dirichlet(identity_field(1), COARSE, np.array(data))
    assert u.meta["max_principle_violation"] <= 1e-12
    assert u.values.max() <= max(data) + 1e-12 and u.values.min() >= -1e-12


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=21, max_size=21), st.lists(st.floats(-1, 1), min_size=21, max_size=21),
       st.floats(-2, 2))
def test_dirichlet_linearity(a, b, c):
    A = sine_shear(1, 0.5, 3.0)
    a, b = np.array(a), np.array(b)
    ua = solve_dirichlet(A, COARSE, a).values
    ub = solve_dirichlet(A, COARSE, b).values
    uab = solve_dirichlet(A, COARSE, a + c * b).values
    assert np.allclose(uab, ua + c * ub, atol=1e-10)


def test_green_transpose_symmetry():
    A = sine_shear(1, 0.5, 3.0)
    X, Y = [0.1, 0.5], [0.3, 0.7]
    G = green_function(A, COARSE, X)
    Gt = green_function(A, COARSE, Y, transpose=True)
    assert G.values[COARSE.node_of(Y)] == pytest.approx(Gt.values[COARSE.node_of(X)], rel=1e-12)


def test_green_positive_and_vanishes_on_bottom():
    G = green_function(dkp_family(1, 0.2), build_grid(1, 0.05, 1.0, 2.0), [0.0, 0.5])
    assert np.all(G.values[..., 0] == 0)
    assert np.all(G.values[..., 1:] > 0)


def test_flux_matches_many_solve():
    # 81 x 41 nodes
    g = build_grid(1, 0.05, 2.0, 2.0)
    A = sine_shear(1, 0.5, 3.0)
    k1 = elliptic_measure_density(A, g, [0.1, 0.5])
    k2 = elliptic_measure_density(A, g, [0.1, 0.5], method="many-solve")
    assert np.max(np.abs(k1.node_masses() - k2.node_masses())) <= 0.01 * np.max(k2.node_masses())
    assert np.max(np.abs(k1.node_masses() - k2.node_masses())) < 1e-10


def test_poisson_kernel_one_percent():
    g = build_grid(1, 0.01, 2.0, 4.0)
    k = elliptic_measure_density(identity_field(1), g, [0.0, 1.0])
    y = g.boundary_coords()
    m = np.abs(y[..., 0]) <= 1.0
    exact = poisson_kernel(1, [0.0, 1.0], y[m])
    dens = k.node_masses()[m] / g.h
    assert np.max(np.abs(dens - exact) / exact) < 0.02


def test_total_mass_close_to_halfspace():
    g = build_grid(1, 0.02, 2.0, 4.0)
    k = elliptic_measure_density(identity_field(1), g, [0.0, 1.0])
    # half-space harmonic measure of [-2, 2] seen from (0, 1)
    assert k.node_masses().sum() == pytest.approx(2 / np.pi * np.arctan(2.0), abs=0.01)


def test_riesz_residual_finite_pole():
    g = build_grid(1, 0.02, 2.0, 4.0)
    A = sine_shear(1, 0.5, 3.0)
    G = green_function(A, g, [0.0, 2.0])
    k = elliptic_measure_density(A, g, [0.0, 2.0], G=G)
    suite = default_riesz_suite(1, 1.0, widths=(0.2,))
    assert riesz_residual(A, G, k, suite).max_rel < 1e-3
    assert riesz_residual(A, G, k, []).max_rel == 0.0


def test_riesz_support_must_fit():
    g = build_grid(1, 0.05, 1.0, 2.0)
    G = green_function(identity_field(1), g, [0.0, 1.5])
    k = elliptic_measure_density(identity_field(1), g, [0.0, 1.5], G=G)
    with pytest.raises(ValueError, match="exits the box"):
        riesz_residual(identity_field(1), G, k, default_riesz_suite(1, 0.5, widths=(0.5,)))


def test_infinity_identity_is_height():
    g = build_grid(1, 0.05, 1.0, 64.0)
    res = green_at_infinity(dkp_family(1, 0.3), g, strict=False)
    P = g.node_coords()
    low = P[..., 1] <= 1.0
    assert np.max(np.abs(res.U.values[low] - P[..., 1][low])) < 1e-2
    # constant density: interior masses equal h
    m = res.k.node_masses()
    assert np.allclose(m[1:-1], g.h, rtol=1e-2)


def test_infinity_needs_tall_box():
    with pytest.raises(ValueError, match="tall"):
        green_at_infinity(identity_field(1), build_grid(1, 0.1, 2.0, 4.0))


def test_infinity_strict_raises():
    g = build_grid(1, 0.05, 1.0, 16.0)
    with pytest.raises(SolverError, match="did not converge"):
        green_at_infinity(sine_shear(1, 0.5, 3.0), g, tol=1e-12)


@pytest.mark.parametrize("pole,msg", [([0.0, 0.1], "boundary"), ([0.0, 0.9], "face"), ([0.9, 0.5], "face")])
def test_pole_validation(pole, msg):
    with pytest.raises(ValueError, match=msg):
        green_function(identity_field(1), COARSE, pole)


def test_unknown_policy():
    with pytest.raises(ValueError, match="policy"):
        get_operator(identity_field(1), COARSE, "periodic")


def test_amg_backend_agrees_with_direct():
    g = build_grid(1, 0.05, 1.0, 1.0)
    A = sine_shear(1, 0.5, 3.0)
    a = green_function(A, g, [0.0, 0.5], backend="direct").values
    b = green_function(A, g, [0.0, 0.5], backend="amg").values
    assert np.max(np.abs(a - b)) <= 1e-8 * np.max(np.abs(a))


def test_two_dimensional_boundary_mass():
    g = build_grid(2, 0.1, 1.0, 2.0)
    k = elliptic_measure_density(identity_field(2), g, [0.0, 0.0, 0.5])
    m = k.node_masses()
    assert m.shape == (g.nx, g.nx)
    assert 0.5 < m.sum() <= 1.0 + 1e-9
