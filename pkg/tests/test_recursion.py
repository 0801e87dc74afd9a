import numpy as np
import pytest
from hypothesis import given, strategies as st

from betacut.equilibrium import equilibrium
from betacut.operators import hard_edge_data
from betacut.potential import EdgeConfig, PotentialSpec
from betacut.recursion import (
    RecursionError,
    beta_decompose,
    beta_unknowns,
    expand_w1,
    loop_residual,
    w1_subleading,
)

from conftest import GAUSS, QUARTIC, SOFT3, SOFT4

HARD_SOFT = (PotentialSpec(orders=((0.0, 1.0, 0.1),)), EdgeConfig(0.0, 8.0, "hard", "soft"))
HARD_HARD = (PotentialSpec(orders=((0.0, 0.0, 0.5, 0.0, -0.11),)), EdgeConfig(-1.5, 1.5, "hard", "hard"))


def _branch(x):
    """sqrt(x^2 - 4) with the branch that behaves like x at infinity."""
    x = np.asarray(x, dtype=complex)
    return x * np.sqrt(1 - 4 / x**2)


def test_term_set(expansion):
    ex = expansion(GAUSS, SOFT3, 2.0, 2)
    want = {(n, k) for k in range(-1, 3) for n in range(1, k + 3)}
    assert set(ex.terms) == want


@pytest.mark.parametrize("beta", [2.0, 1.0])
def test_w2_at_real_points(expansion, beta):
    ex = expansion(GAUSS, SOFT3, beta, 1)
    assert ex[(2, 0)](3.0, -3.0).real == pytest.approx((2 / beta) / 45, abs=1e-12)


@pytest.mark.parametrize("spec,edges", [(GAUSS, SOFT3), (QUARTIC, SOFT4)])
@pytest.mark.parametrize("beta", [2.0, 0.7])
def test_w2_universal(expansion, spec, edges, beta):
    ex = expansion(spec, edges, beta, 0)
    fr = ex.frame
    rng = np.random.default_rng(3)
    for _ in range(5):
        z1, z2 = (1.4 + rng.random(2)) * np.exp(2j * np.pi * rng.random(2))
        want = (2 / beta) / (fr.gamma**2 * (z1 * z2 - 1) ** 2 * (1 - z1**-2) * (1 - z2**-2))
        assert ex[(2, 0)].eval_z(z1, z2) == pytest.approx(want, rel=1e-9)


@pytest.mark.parametrize("beta", [1.0, 4.0, 0.5])
def test_w1_subleading_gaussian(expansion, beta):
    ex = expansion(GAUSS, SOFT3, beta, 0)
    for z in (2.1 + 0.4j, -1.5j, 1.3):
        assert ex[(1, 0)].eval_z(z) == pytest.approx(-(1 - 2 / beta) * z / (z * z - 1) ** 2, rel=1e-9, abs=1e-12)


def test_gue_genus_one(expansion):
    ex = expansion(GAUSS, SOFT3, 2.0, 2)
    for x in (3.0, 2.5 + 1j, -0.3 + 2j):
        assert ex[(1, 1)](x) == pytest.approx(_branch(x) ** -5, rel=1e-9)


def test_gue_three_point(expansion):
    ex = expansion(GAUSS, SOFT3, 2.0, 2)
    for x1, x2, x3 in [(3.0, -2.7 + 0.5j, 2.2j), (10.0, 11.0, 12.0)]:
        want = 2 * (x1 * x2 + x2 * x3 + x1 * x3 + 4) / (_branch(x1) * _branch(x2) * _branch(x3)) ** 3
        assert ex[(3, 1)](x1, x2, x3) == pytest.approx(want, rel=1e-9)


def test_beta2_parity(expansion):
    ex = expansion(GAUSS, SOFT3, 2.0, 2)
    for (n, k), t in ex.terms.items():
        assert t.is_zero == ((n + k) % 2 == 1), (n, k)
    q = expansion(QUARTIC, SOFT4, 2.0, 1)
    assert q[(1, 0)].is_zero and q[(2, 1)].is_zero


def test_structural_zero(expansion):
    ex = expansion(GAUSS, SOFT3, 1.0, 1)
    assert ex[(4, 1)].is_zero
    with pytest.raises(KeyError):
        ex[(1, 2)]


@pytest.mark.parametrize("case", ["gauss", "quartic", "hard_soft", "hard_hard"])
def test_loop_residuals(expansion, case):
    spec, edges = {"gauss": (GAUSS, SOFT3), "quartic": (QUARTIC, SOFT4), "hard_soft": HARD_SOFT, "hard_hard": HARD_HARD}[case]
    ex = expansion(spec, edges, 1.0, 1)
    scale = max(float(np.max(np.abs(t.data))) for t in ex.terms.values())
    for nk, r in ex.residuals.items():
        assert r < 1e-6 * max(1.0, scale), (nk, r)


def test_residual_detects_corruption(expansion):
    ex = expansion(QUARTIC, SOFT4, 1.0, 1)
    clean = loop_residual(ex, 1, 0)
    t = ex.terms[(1, 0)]
    saved = t.data.copy()
    try:
        t.data[2] += 1e-3
        assert loop_residual(ex, 1, 0) > 1e3 * max(clean, 1e-12)
    finally:
        t.data[:] = saved


def test_residual_radius_validated(expansion):
    ex = expansion(GAUSS, SOFT3, 1.0, 0)
    with pytest.raises(ValueError):
        loop_residual(ex, 1, 0, radius=0.9)


@given(st.floats(0.3, 5.0))
def test_symmetric_terms(beta):
    eq = equilibrium(QUARTIC, SOFT4)
    ex = expand_w1(eq, hard_edge_data(SOFT4), QUARTIC, beta, 1)
    w2 = ex[(2, 0)]
    z1, z2 = 1.7 + 0.3j, -1.2 + 1.1j
    assert w2.eval_z(z1, z2) == pytest.approx(w2.eval_z(z2, z1), rel=1e-10)


@given(st.floats(0.3, 5.0))
def test_even_potential_parity(beta):
    """For an even potential W_1^{0}(-x) = -W_1^{0}(x)."""
    eq = equilibrium(QUARTIC, SOFT4)
    w = w1_subleading(eq, hard_edge_data(SOFT4), beta)
    for x in (3.0 + 0.2j, 1.0 + 1.5j):
        assert w(-x) == pytest.approx(-w(x), abs=1e-11)


def test_expand_w1_matches_full(expansion):
    full = expansion(QUARTIC, SOFT4, 1.0, 1)
    eq = equilibrium(QUARTIC, SOFT4)
    part = expand_w1(eq, hard_edge_data(SOFT4), QUARTIC, 1.0, 1)
    assert set(part.terms) == {(1, -1), (1, 0), (1, 1), (2, 0)}
    assert part[(1, 1)](3.0 + 1j) == pytest.approx(full[(1, 1)](3.0 + 1j), rel=1e-10)


def test_n_dependent_potential_shifts_w1_subleading():
    eq = equilibrium(GAUSS, SOFT3)
    edge = hard_edge_data(SOFT3)
    base = w1_subleading(eq, edge, 2.0)
    shifted = w1_subleading(eq, edge, 2.0, v1=[0.0, 0.2])
    assert base.is_zero and not shifted.is_zero


def test_beta_unknowns():
    assert beta_unknowns(1, 0) == [(0, 1)]
    assert beta_unknowns(1, 1) == [(0, 2), (1, 0)]
    assert beta_unknowns(2, 2) == [(0, 2), (1, 0)]


def test_beta_decompose_reassembles(expansion):
    exs = {b: expansion(QUARTIC, SOFT4, b, 1) for b in (1.0, 4.0, 0.7, 2.0)}
    bd = beta_decompose(QUARTIC, SOFT4, 1, 1, [1.0, 4.0, 0.7], expansions=exs)
    r = bd.reassemble(2.0)
    for x in (3.0 + 0.5j, -2.7):
        assert r(x) == pytest.approx(exs[2.0][(1, 1)](x), abs=1e-10)


def test_beta_decompose_errors():
    with pytest.raises(RecursionError):
        beta_decompose(QUARTIC, SOFT4, 1, 1, [1.0, 1.0])
    with pytest.raises(ValueError):
        beta_decompose(QUARTIC, SOFT4, 3, 0, [1.0])
