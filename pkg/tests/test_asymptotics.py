import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import chebyshev as C
from scipy import integrate

from betacut.asymptotics import (
    FreeEnergyExpansion,
    InterpolationError,
    clt,
    clt_covariance,
    clt_mean,
    free_energy_coeffs,
    gaussian_lnZ,
    lnZ_prediction,
    selberg_lnZ,
)
from betacut.equilibrium import equilibrium, equilibrium_energy
from betacut.operators import hard_edge_data
from betacut.potential import EdgeConfig, PotentialSpec, gaussian_reference

from conftest import ARCSINE, GAUSS, QUARTIC, SOFT3, SOFT4


def test_selberg_one_particle():
    for beta in (0.5, 1.0, 2.0, 4.0):
        assert selberg_lnZ(1, beta) == pytest.approx(0.5 * math.log(4 * math.pi / beta), abs=1e-14)


def test_selberg_two_particles():
    beta, N = 2.0, 2
    f = lambda y, x: abs(x - y) ** beta * math.exp(-N * beta * (x * x + y * y) / 4)
    val, _ = integrate.dblquad(f, -8, 8, -8, lambda x: x, epsabs=1e-13, epsrel=1e-12)
    val *= 2
    assert selberg_lnZ(N, beta) == pytest.approx(math.log(val), abs=1e-8)


def test_gaussian_lnZ_shifted():
    # semicircle on (0, 4): V(x) = (x - 2)^2 / 2
    beta, N = 1.0, 2
    f = lambda y, x: abs(x - y) ** beta * math.exp(-N * beta * ((x - 2) ** 2 + (y - 2) ** 2) / 4)
    # ordered pairs y < x, so the integrand is smooth
    val, _ = integrate.dblquad(f, -8, 12, -8, lambda x: x, epsabs=1e-13, epsrel=1e-12)
    val *= 2
    assert gaussian_lnZ(N, beta, 0.0, 4.0) == pytest.approx(math.log(val), abs=1e-8)


@given(st.integers(1, 400), st.floats(0.2, 6.0))
def test_gaussian_second_moment(N, beta):
    """E sum lambda^2 = -(4/(N beta)) d lnZ / d(scale) reproduces N + 2/beta - 1."""
    eps = 1e-6
    # widening the support by (1 + eps) rescales lambda
    d = (gaussian_lnZ(N, beta, -2 * (1 + eps), 2 * (1 + eps)) - gaussian_lnZ(N, beta, -2 * (1 - eps), 2 * (1 - eps))) / (2 * eps)
    expo = N + beta * N * (N - 1) / 2
    assert d == pytest.approx(expo, rel=1e-6)


def test_free_energy_gaussian_only_constant():
    # 0.5 (x - 0.2)^2 + 0.48: only the additive constant differs from the reference
    fe = free_energy_coeffs(PotentialSpec(orders=((0.5, -0.2, 0.5),)), SOFT4, 1.0, 1)
    assert fe[-2] == pytest.approx(-0.5 * 0.48, abs=1e-12)
    assert all(fe[k] == 0.0 for k in (-1, 0, 1))
    fe = free_energy_coeffs(PotentialSpec(orders=((0.02, -0.2, 0.5),)), SOFT4, 1.0, 1)
    assert all(abs(v) < 1e-12 for v in fe.coeffs.values())
    assert fe.reference["alpha_minus"] == pytest.approx(-1.8, abs=1e-10)


def test_free_energy_rejects_hard_edges():
    with pytest.raises(ValueError):
        free_energy_coeffs(*ARCSINE, 2.0, 0)


@pytest.mark.slow
def test_free_energy_quartic_beta2():
    fe = free_energy_coeffs(QUARTIC, SOFT4, 2.0, 0)
    eq = equilibrium(QUARTIC, SOFT4)
    ref = equilibrium(gaussian_reference(eq.support.alpha_minus, eq.support.alpha_plus), SOFT4)
    assert fe[-2] == pytest.approx(-(equilibrium_energy(eq) - equilibrium_energy(ref)), abs=1e-10)
    assert fe[-1] == pytest.approx(0.0, abs=1e-10)
    # genus-one free energy of the quartic matrix model, 12 g a^4 + a^2 = 1
    g = 0.1
    a2 = (math.sqrt(1 + 48 * g) - 1) / (24 * g)
    assert fe[0] == pytest.approx(-math.log(2 - a2) / 12, abs=1e-7)


def test_lnZ_prediction_truncation():
    fe = FreeEnergyExpansion({-2: 0.5, -1: 0.25, 0: 0.1}, {"alpha_minus": -2.0, "alpha_plus": 2.0, "beta": 2.0})
    base = selberg_lnZ(10, 2.0)
    assert lnZ_prediction(fe, 10) == pytest.approx(base + 50 + 2.5 + 0.1, abs=1e-10)
    assert lnZ_prediction(fe, 10, -1) == pytest.approx(base + 52.5, abs=1e-10)
    with pytest.raises(ValueError):
        lnZ_prediction(fe, 10, 1)


def test_interpolation_error():
    # the straight path to a double well leaves the one-cut class
    spec = PotentialSpec(orders=((0.0, 0.0, -0.2, 0.0, 0.05),))
    try:
        equilibrium(spec, SOFT4)
    except Exception:
        pytest.skip("endpoint itself is not one-cut")
    with pytest.raises(InterpolationError):
        free_energy_coeffs(spec, SOFT4, 2.0, -2)


@pytest.mark.parametrize("beta", [1.0, 2.0, 4.0])
def test_clt_gaussian(gauss_eq, beta):
    e = hard_edge_data(SOFT3)
    assert clt_mean(gauss_eq, e, beta, [0, 1]) == pytest.approx(0.0, abs=1e-12)
    assert clt_mean(gauss_eq, e, beta, [0, 0, 1]) == pytest.approx(2 / beta - 1, abs=1e-10)
    assert clt_covariance(gauss_eq, e, beta, [0, 1]) == pytest.approx(2 / beta, abs=1e-10)
    assert clt_covariance(gauss_eq, e, beta, [0, 0, 1]) == pytest.approx(4 / beta, abs=1e-10)


def _chebyshev_variance(h, a, b, beta):
    """(1 / (2 beta)) sum_k k c_k^2 for h expanded in T_k on [a, b]."""
    r, c = (b - a) / 2, (b + a) / 2
    hs = np.polynomial.polynomial.Polynomial(h)(np.polynomial.polynomial.Polynomial([c, r]))
    ck = C.poly2cheb(hs.coef)
    return sum(k * ck[k] ** 2 for k in range(len(ck))) / (2 * beta)


hpoly = st.lists(st.floats(-2.0, 2.0), min_size=2, max_size=5)


@given(h=hpoly, beta=st.floats(0.5, 4.0))
def test_clt_covariance_universal_soft(quartic_eq, h, beta):
    e = hard_edge_data(SOFT4)
    a, b = quartic_eq.support.alpha_minus, quartic_eq.support.alpha_plus
    want = _chebyshev_variance(h, a, b, beta)
    assert clt_covariance(quartic_eq, e, beta, h) == pytest.approx(want, rel=1e-8, abs=1e-10)


@given(h=hpoly, beta=st.floats(0.5, 4.0))
def test_clt_covariance_universal_hard(h, beta):
    spec, edges = PotentialSpec(orders=((0.0, 0.3, 0.2),)), EdgeConfig(-1.0, 1.0, "hard", "hard")
    eq = equilibrium(spec, edges)
    want = _chebyshev_variance(h, -1.0, 1.0, beta)
    assert clt_covariance(eq, hard_edge_data(edges), beta, h) == pytest.approx(want, rel=1e-8, abs=1e-10)


@given(h=hpoly, beta=st.floats(0.5, 4.0), c=st.floats(-3.0, 3.0))
def test_clt_constant_shift(quartic_eq, h, beta, c):
    e = hard_edge_data(SOFT4)
    base = clt(quartic_eq, e, beta, h)
    h2 = [h[0] + c] + list(h[1:])
    shifted = clt(quartic_eq, e, beta, h2)
    assert shifted.covariance == pytest.approx(base.covariance, rel=1e-10, abs=1e-12)
    assert shifted.mean == pytest.approx(base.mean, abs=1e-10)


def test_clt_mean_beta2_soft_vanishes(quartic_eq):
    assert clt_mean(quartic_eq, hard_edge_data(SOFT4), 2.0, [0, 1, 1, 1]) == 0.0
