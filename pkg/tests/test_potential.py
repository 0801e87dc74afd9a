import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from betacut.potential import (
    EdgeConfig,
    PotentialSpec,
    derivative,
    evaluate,
    gaussian_reference,
    interpolate,
    is_confining,
    resum,
)

coef = st.floats(-5, 5, allow_nan=False)
poly = st.lists(coef, min_size=1, max_size=6)


def test_evaluate_values():
    assert evaluate(PotentialSpec(((0, 0, 0.5),)), 0, 2.0) == pytest.approx(2.0)
    assert evaluate(PotentialSpec(((0, 0, 0.5, 0, 0.1),)), 0, 1.0) == pytest.approx(0.6)


def test_evaluate_missing_order():
    with pytest.raises(KeyError, match="order absent"):
        evaluate(PotentialSpec(((0, 0, 0.5),)), 1, 1.0)


def test_derivative_examples():
    assert np.allclose(derivative(PotentialSpec(((0, 0, 0.5),)), 0), [0, 1])
    assert np.allclose(derivative(np.array([3.0])), [0])
    assert np.allclose(derivative(np.array([0, 0, 0, 0, 1.0])), [0, 0, 0, 4])


def test_resum_examples():
    s = PotentialSpec(((0, 0, 1.0), (0, 1.0)))
    assert np.allclose(resum(s, 10), [0, 0.1, 1])
    one = PotentialSpec(((1, 2, 3.0),))
    for N in (1, 5, 1000):
        assert np.allclose(resum(one, N), [1, 2, 3])
    assert np.allclose(resum(s, 10**12), [0, 1e-12, 1], atol=1e-11)
    with pytest.raises(ValueError):
        resum(s, 0)


def test_gaussian_reference_examples():
    assert np.allclose(gaussian_reference(-2, 2).coeffs(0), [0, 0, 0.5])
    assert np.allclose(gaussian_reference(0, 4).coeffs(0), [2, -2, 0.5])
    assert np.allclose(gaussian_reference(-1, 1).coeffs(0), [0, 0, 2])
    with pytest.raises(ValueError):
        gaussian_reference(1, 1)


def test_interpolate_examples():
    a = PotentialSpec(((0, 0, 0.5),))
    b = PotentialSpec(((1, 0, 0.5, 0, 0.1), (0, 2)))
    assert np.allclose(interpolate(a, b, 0).coeffs(0), a.coeffs(0))
    assert np.allclose(interpolate(a, b, 1).coeffs(0), b.coeffs(0))
    assert np.allclose(interpolate(a, b, 1).coeffs(1), b.coeffs(1))
    assert np.allclose(interpolate(a, b, 0.5).coeffs(0), [0.5, 0, 0.5, 0, 0.05])
    with pytest.raises(ValueError, match="mismatched"):
        interpolate(a, PotentialSpec(((0, 0, 1),), interval=(-1, 1)), 0.5)


def test_spec_validation():
    with pytest.raises(ValueError):
        PotentialSpec(())
    with pytest.raises(ValueError):
        PotentialSpec(((0, math.nan),))
    with pytest.raises(ValueError):
        PotentialSpec(((0, 1),), interval=(1, -1))
    with pytest.raises(ValueError):
        EdgeConfig(1.0, -1.0)
    with pytest.raises(ValueError):
        EdgeConfig(-math.inf, 1.0)


def test_from_config_rejects_unknown_keys():
    s = PotentialSpec.from_config({"orders": [[0, 0, 0.5]], "interval": ["-inf", "inf"]})
    assert s.interval == (-math.inf, math.inf)
    with pytest.raises(ValueError, match="unknown"):
        PotentialSpec.from_config({"orders": [[0, 1]], "colour": "red"})


def test_confinement_proxy():
    assert is_confining(PotentialSpec(((0, 0, 0.5),)))
    assert not is_confining(PotentialSpec(((0, 0, -0.5),)))
    assert is_confining(PotentialSpec(((0, 1),), interval=(0, 5)))


@given(poly, st.floats(-3, 3))
def test_derivative_matches_finite_difference(c, x):
    h = 1e-5
    fd = (np.polynomial.polynomial.polyval(x + h, c) - np.polynomial.polynomial.polyval(x - h, c)) / (2 * h)
    d = np.polynomial.polynomial.polyval(x, derivative(np.array(c)))
    assert d == pytest.approx(fd, rel=1e-6, abs=1e-6)


@given(poly, poly, st.integers(1, 10**6))
def test_resum_is_orderwise_sum(a, b, N):
    s = PotentialSpec((tuple(a), tuple(b)))
    x = 0.37
    lhs = np.polynomial.polynomial.polyval(x, resum(s, N))
    rhs = np.polynomial.polynomial.polyval(x, a) + np.polynomial.polynomial.polyval(x, b) / N
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@given(poly, poly, st.floats(0, 1))
def test_interpolate_is_affine(a, b, s):
    va, vb = PotentialSpec((tuple(a),)), PotentialSpec((tuple(b),))
    x = -0.81
    got = evaluate(interpolate(va, vb, s), 0, x)
    want = (1 - s) * evaluate(va, 0, x) + s * evaluate(vb, 0, x)
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)
