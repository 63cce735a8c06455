import random

import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from magweyl.expansion import (ExpansionError, apply_L0_power, enumerate_partitions,
                               equivalence_check, expand_product, minsub_correction_f,
                               minsub_correction_g, minsub_roundtrip, minsub_transform, moyal_term,
                               precision_bookkeeping, product_term_nk, semiclassical_product_term,
                               zero_field)
from magweyl.magnetics import MagneticField, add_gradient, transversal_gauge
from magweyl.symcore import normalize, phase_space, poisson_bracket

S = phase_space(2)
x1, x2 = S.x
k1, k2 = S.xi
f = sp.Function("f", real=True)(*S.variables)
g = sp.Function("g", real=True)(*S.variables)
b = sp.Symbol("b", real=True)
Bc = MagneticField.from_components(2, {(0, 1): b})
B0 = zero_field(2)


@pytest.mark.parametrize("n,k,count", [(0, 0, 1), (3, 1, 3), (4, 2, 4), (3, 3, 1), (2, 3, 0)])
def test_partitions(n, k, count):
    parts = enumerate_partitions(n, k)
    assert len(parts) == count
    assert all(p.n == n and p.k == k for p in parts)


def test_precision_worked_case():
    p = precision_bookkeeping("0.1", "0.3", "0.01")
    assert (p.n_c, p.k_c, p.N) == (2, 3, 3)
    with pytest.raises(ExpansionError):
        precision_bookkeeping(0, 0.3, 0.01)


@settings(max_examples=30, deadline=None)
@given(st.fractions(min_value=0.01, max_value=0.9), st.fractions(min_value=0.001, max_value=0.5))
def test_precision_order_is_minimal(eps, tol):
    p = precision_bookkeeping(eps, 0.5, tol)
    assert eps ** (p.n_c + 1) < tol <= eps ** p.n_c or (p.n_c == 0 and eps < tol)


def test_L0_sign():
    assert apply_L0_power(k1, x1, 1, S) == sp.Rational(-1, 2)


def test_zeroth_and_first_order():
    assert product_term_nk(f, g, Bc, 0, 0, S).value == f * g
    t10 = product_term_nk(f, g, Bc, 1, 0, S).value
    assert normalize(t10 + sp.I / 2 * poisson_bracket(f, g, S)) == 0


def test_11_term_constant_field():
    t = product_term_nk(f, g, Bc, 1, 1, S).value
    ref = sp.I * b / 2 * (sp.diff(f, k1) * sp.diff(g, k2) - sp.diff(f, k2) * sp.diff(g, k1))
    assert normalize(t - ref) == 0


def test_21_term_is_real():
    t = product_term_nk(f, g, Bc, 2, 1, S)
    assert t.structure_ok()
    # real coefficients: no factor of i survives at this order
    assert t.value != 0 and not t.value.has(sp.I)


def test_22_term_constant_field():
    t = product_term_nk(f, g, Bc, 2, 2, S).value
    ref = -b**2 / 8 * (sp.diff(f, k1, 2) * sp.diff(g, k2, 2) + sp.diff(f, k2, 2) * sp.diff(g, k1, 2)
                       - 2 * sp.diff(f, k1, k2) * sp.diff(g, k1, k2))
    assert normalize(t - ref) == 0


def test_higher_flux_orders_vanish_for_constant_field():
    # only L_1 = -(b/2)(y1 z2 - y2 z1) survives: (i^3/3!) L_1^3 with y, z -> -i d_xi
    assert product_term_nk(k1**3, k2**3, Bc, 3, 3, S).value == -3 * sp.I * b**3 / 4


def test_polynomial_symbols_truncate():
    series = expand_product(x1 * k1, k2**2, Bc, 4, S)
    assert len(series.terms) == 15
    assert all(t.value == 0 for (n, k), t in series.terms.items() if n + k > 4)
    assert expand_product(sp.Integer(1), sp.Integer(1), Bc, 2, S).order(0) == 1


def _rand_poly(rng, deg):
    out = 0
    for _ in range(5):
        out += rng.randint(-3, 3) * sp.prod([v ** rng.randint(0, deg) for v in rng.sample(S.variables, 2)])
    return out


def test_nonmagnetic_reduction_small():
    rng = random.Random(7)
    for _ in range(3):
        F, G = _rand_poly(rng, 2), _rand_poly(rng, 2)
        for n in range(4):
            assert normalize(product_term_nk(F, G, B0, n, 0, S).value - moyal_term(F, G, n, S)) == 0
            for k in range(1, n + 1):
                assert product_term_nk(F, G, B0, n, k, S).value == 0


def test_moyal_commutator():
    # x1 * xi1 - xi1 * x1 = i eps in the first order term
    assert moyal_term(x1, k1, 1, S) - moyal_term(k1, x1, 1, S) == sp.I


def test_equivalence_linear_field():
    Bl = MagneticField.from_components(2, {(0, 1): 1 + x1 - 2 * x2})
    r = equivalence_check(x1 * k1 + k2**2, k1 * k2 - x2**2, Bl, 3, S)
    assert r.passed and r.checked == 10


def test_semiclassical_term_linear_in_each_argument():
    ft = {(0, 0): k1**2, (1, 1): x1}
    gt = {(0, 0): k2 * x1}
    v = semiclassical_product_term(ft, gt, Bc, 1, 1, S)
    ref = product_term_nk(k1**2, k2 * x1, Bc, 1, 1, S).value + x1 * k2 * x1
    assert normalize(v - ref) == 0


def test_minsub_basic_orders():
    lam = sp.Symbol("lam", real=True)
    A = add_gradient(transversal_gauge(MagneticField.from_components(2, {(0, 1): sp.Integer(1)})),
                     x1**3 / 3 + x1 * x2**2, 1)
    h = k1**3 + k1 * k2 * x2
    assert minsub_correction_g(h, A, lam, 0, S) == h
    assert minsub_correction_g(h, A, lam, 1, S) == 0
    assert minsub_correction_f(h, A, lam, 1, S) == 0
    assert minsub_correction_g(h, A, lam, 2, S) != 0
    assert all(v == 0 for v in minsub_roundtrip(h, A, lam, 4, S).values())
    assert minsub_transform(k1, A, lam, S) == k1 - lam * A.components[0]


def test_minsub_linear_gauge_has_no_corrections():
    lam = sp.Symbol("lam", real=True)
    A = transversal_gauge(MagneticField.from_components(2, {(0, 1): sp.Integer(1)}))
    for n in (2, 3, 4):
        assert minsub_correction_g(k1**4 + k2**2 * k1, A, lam, n, S) == 0


def test_bad_orders():
    with pytest.raises(ExpansionError):
        product_term_nk(f, g, Bc, 1, 2, S)
