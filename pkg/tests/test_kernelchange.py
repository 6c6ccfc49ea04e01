import numpy as np
import pytest

from dkplab.coefficients import constant_field, dkp_family, identity_field, sine_shear
from dkplab.fields import BoundaryWeight, DiscreteField
from dkplab.grid import build_grid
from dkplab.kernelchange import (KernelFunction, QuotientNotStabilized, _stable, change_of_pole_vmo_check, comparison_band, kernel_function,
                                 kernel_function_infinity, ratio_symmetry)
from dkplab.scenarios import poisson_kernel
from dkplab.solver import InfinityResult, elliptic_measure_density, green_at_infinity, green_function

FIN = build_grid(1, 0.02, 4.0, 8.0)
TALL = build_grid(1, 0.025, 3.0, 64.0)
W = (np.array([0.0]), 1.0)


@pytest.fixture(scope="module")
def inf_identity():
    return green_at_infinity(identity_field(1), TALL)


def test_same_pole_is_one():
    kf = kernel_function(sine_shear(1, 0.5, 3.0), FIN, [0.0, 1.0], [0.0, 1.0], W)
    assert np.all(kf.H == 1.0)


def test_identity_kernel_is_poisson_ratio():
    X0, X1 = [0.0, 1.0], [0.5, 2.0]
    kf = kernel_function(identity_field(1), FIN, X0, X1, W)
    exact = poisson_kernel(1, X0, kf.z) / poisson_kernel(1, X1, kf.z)
    assert np.max(np.abs(kf.H / exact - 1)) < 0.03
    assert kf.band_constant >= 1


def test_ratio_symmetry():
    assert ratio_symmetry(sine_shear(1, 0.5, 3.0), FIN, [0.0, 1.0], [0.5, 2.0], W) < 1e-12


def test_poles_too_low():
    with pytest.raises(ValueError, match="too low"):
        kernel_function(identity_field(1), FIN, [0.0, 0.2], [0.5, 2.0], W)


def test_unstabilized_quotient_raises():
    z = np.zeros((3, 1))
    kf = KernelFunction(z, np.ones(3), np.array([1.0, 1.1, 1.0]), ([0, 1], [0, 2]), 0.04, np.ones(3))
    assert kf.stability == pytest.approx(0.1)
    with pytest.raises(QuotientNotStabilized):
        _stable(kf, strict=True)
    assert _stable(kf, strict=False) is kf


def test_infinity_identity_is_poisson(inf_identity):
    X0 = [0.0, 0.5]
    kf = kernel_function_infinity(identity_field(1), TALL, X0, inf_identity, window=(np.array([0.0]), 2.0))
    assert np.max(np.abs(kf.H / poisson_kernel(1, X0, kf.z) - 1)) < 0.03
    assert kf.meta["radon_nikodym"]["rel_err"] < 0.03


def test_infinity_flat_for_high_pole(inf_identity):
    r = 0.25
    kf = kernel_function_infinity(identity_field(1), TALL, [0.0, 8 * r], inf_identity, window=(np.array([0.0]), r))
    assert kf.H.max() / kf.H.min() - 1 <= 0.05


def test_infinity_renormalization_invariant(inf_identity):
    c = 3.7
    scaled = InfinityResult(DiscreteField(TALL, c * inf_identity.U.values),
                            BoundaryWeight(TALL, masses=c * inf_identity.k.node_masses(), allow_negative=True),
                            inf_identity.history, inf_identity.converged, inf_identity.k_used)
    a = kernel_function_infinity(identity_field(1), TALL, [0.0, 0.5], inf_identity, window=W)
    b = kernel_function_infinity(identity_field(1), TALL, [0.0, 0.5], scaled, window=W)
    ka = inf_identity.k.node_masses()
    idx = np.searchsorted(TALL.boundary_coords()[..., 0], a.z[:, 0])
    assert np.allclose(a.H * ka[idx], b.H * c * ka[idx], rtol=1e-10)


def test_infinity_requires_u():
    with pytest.raises(ValueError, match="infinity"):
        kernel_function_infinity(identity_field(1), TALL, [0.0, 0.5], None)


def test_comparison_band_finite():
    A = sine_shear(1, 0.5, 3.0)
    u = green_function(A, FIN, [0.0, 3.0])
    v = green_function(A, FIN, [1.0, 4.0])
    lo, hi = comparison_band(u, v, 0.0, 0.5)
    assert 0 < lo <= 1 <= hi < np.inf


def test_change_of_pole_identity_factorization(inf_identity):
    X0 = [0.0, 0.5]
    kf = kernel_function_infinity(identity_field(1), TALL, X0, inf_identity, window=(np.array([0.0]), 2.0))
    rep = change_of_pole_vmo_check(kf.meta["k_X0"], inf_identity.k, X0, 0.5, 0.05, [0.25, 0.125, 0.0625],
                                   holder=kf.meta["holder"])
    assert rep.max_violation <= 1e-12
    prof = rep.profile("rh_k0", [0.25, 0.125, 0.0625])
    assert np.all(np.diff(prof) < 0) and prof[-1] - 1 < 0.25 * (prof[0] - 1)


def test_change_of_pole_constant_matrix():
    # y -> y - a s straightens a constant matrix with a12 + a21 = 2a a22, so both kernels stay smooth
    A = constant_field([[1.5, 0.4], [0.4, 1.0]])
    inf = green_at_infinity(A, TALL, strict=False)
    X0 = [0.0, 0.5]
    k0 = elliptic_measure_density(A, TALL, X0)
    rep = change_of_pole_vmo_check(k0, inf.k, X0, 0.5, 0.05, [0.25, 0.125, 0.0625])
    assert rep.max_violation <= 1e-12
    prof = rep.profile("rh_k0", [0.25, 0.125, 0.0625])
    assert np.all(np.diff(prof) < 0) and prof[-1] - 1 < 0.25 * (prof[0] - 1)


def test_change_of_pole_dkp_family_profiles_agree():
    A = dkp_family(1, 0.05)
    inf = green_at_infinity(A, TALL, strict=False)
    X0, R = [0.0, 0.5], 2.0
    k0 = elliptic_measure_density(A, TALL, X0)
    r = R / 64
    rep = change_of_pole_vmo_check(k0, inf.k, X0, R, 0.05, [r])
    a, b = rep.profile("rh_k0", [r])[0], rep.profile("rh_kinf", [r])[0]
    assert abs(a - b) <= 0.1 * b
