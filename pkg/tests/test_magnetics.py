import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from magweyl.magnetics import (MagneticField, MagneticsError, Triangle, VectorPotential,
                               add_gradient, aux_symbols, check_potential, circulation,
                               circulation_symbolic, curl, flux, flux_estimate, flux_taylor_oracle,
                               flux_taylor_surface, flux_taylor_term, gauss_legendre, scaled_flux,
                               transversal_gauge)
from magweyl.symcore import phase_space

S2 = phase_space(2)
S3 = phase_space(3)
x1, x2 = S2.x


def unit_field(dim=2, value=1):
    return MagneticField.from_components(dim, {(0, 1): sp.Integer(value)})


def test_gauss_legendre_exactness():
    nodes, weights = gauss_legendre(8)  # rule on [0, 1]
    for k in range(16):
        exact = 1 / (k + 1)
        assert np.dot(weights, nodes**k) == pytest.approx(exact, abs=1e-13)


def test_field_antisymmetry():
    B = MagneticField.from_components(3, {(0, 1): sp.Integer(2), (1, 2): x1})
    M = B.matrix()
    assert M == -M.T
    assert B.component(1, 0) == -2
    with pytest.raises(MagneticsError):
        MagneticField.from_components(2, {(1, 1): sp.Integer(1)})


def test_unit_triangle_flux():
    assert flux(unit_field(), Triangle((0, 0), (1, 0), (0, 1))) == pytest.approx(0.5)
    assert flux(unit_field(), Triangle((0, 0), (1, 1), (2, 2))) == pytest.approx(0.0, abs=1e-14)
    t = Triangle((0, 0), (1, 0), (0, 1))
    assert flux(unit_field(), t.reversed()) == pytest.approx(-0.5)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.floats(-2, 2))
def test_constant_field_signed_area(c, bval):
    a, b_, c_ = (c[0], c[1]), (c[2], c[3]), (c[4], c[5])
    area = 0.5 * ((b_[0] - a[0]) * (c_[1] - a[1]) - (b_[1] - a[1]) * (c_[0] - a[0]))
    B = MagneticField.from_components(2, {(0, 1): sp.Float(bval)})
    est = flux_estimate(B, Triangle(a, b_, c_))
    assert est.quadrature == pytest.approx(bval * area, abs=1e-10)
    assert est.delta < 1e-9


def test_linear_field_flux_both_methods():
    B = MagneticField.from_components(2, {(0, 1): 1 + x1})
    est = flux_estimate(B, Triangle((0, 0), (1, 0), (0, 1)))
    assert est.quadrature == pytest.approx(2 / 3)
    assert est.stokes == pytest.approx(2 / 3)


def test_transversal_gauge_reproduces_field():
    B = MagneticField.from_components(3, {(0, 1): 1 + x1**2, (0, 2): S3.x[1], (1, 2): sp.Integer(3)})
    # make it closed: d(B) = 0 requires d1 B23 - d2 B13 + d3 B12 = 0 -> 0 - 1 + 0 != 0
    assert not B.is_closed()
    with pytest.raises(MagneticsError):
        flux_taylor_oracle(B, 2)
    B = MagneticField.from_components(3, {(0, 1): 1 + S3.x[2], (0, 2): S3.x[1], (1, 2): sp.Integer(3)})
    assert B.is_closed()
    A = transversal_gauge(B)
    assert check_potential(A, B)
    assert curl(A) == B


def test_gauge_change_leaves_curl():
    A = transversal_gauge(unit_field())
    A2 = add_gradient(A, x1**3 * x2, 1)
    assert curl(A2) == unit_field()


def test_circulation_exact_vs_quadrature():
    A = VectorPotential(2, (-x2 / 2 + x1**2, x1 / 2))
    p, q = (0.2, -0.4), (1.1, 0.7)
    exact = float(circulation_symbolic(A, p, q))
    assert circulation(A, p, q) == pytest.approx(exact, abs=1e-13)


def test_constant_field_taylor_terms(b):
    B = MagneticField.from_components(2, {(0, 1): b})
    y, z = aux_symbols(2)
    L1 = flux_taylor_term(B, 1).value
    assert sp.expand(L1 + b / 2 * (y[0] * z[1] - y[1] * z[0])) == 0
    for n in (2, 3, 4):
        assert flux_taylor_term(B, n).value == 0


def test_closed_form_matches_oracle_and_surface():
    B = MagneticField.from_components(2, {(0, 1): 1 + x1 * x2 - 3 * x2**3})
    oracle = flux_taylor_oracle(B, 4)
    surface = flux_taylor_surface(B, 4)
    for n in range(1, 5):
        t = flux_taylor_term(B, n).value
        assert sp.expand(t - oracle[n - 1].value) == 0
        assert sp.expand(t - surface[n - 1].value) == 0


def test_scaled_flux_series():
    B = MagneticField.from_components(2, {(0, 1): 1 + x1 - x2**2})
    terms = flux_taylor_oracle(B, 3)
    y, z = aux_symbols(2)
    X, Y, Z = (0.3, -0.2), (0.5, 0.1), (-0.4, 0.7)
    subs = dict(zip(list(S2.x) + list(y) + list(z), X + Y + Z))
    eps = 0.2
    series = sum(eps**t.n * float(t.value.subs(subs)) for t in terms)
    # the field is quadratic, so L_1..L_3 already give gamma exactly
    assert scaled_flux(B, X, Y, Z, eps) == pytest.approx(-series, abs=1e-14)
