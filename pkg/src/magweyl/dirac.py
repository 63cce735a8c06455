"""Semirelativistic Dirac operator: Foldy-Wouthuysen rotation and the
effective electronic Hamiltonian through third order in 1/c.

The rescaled operator is the magnetic quantization of H_0(xi) + c^-2 V(x)
with eps = 1/c and lam = 1/c^2, so the (n, k) term of the two-parameter
expansion lands at order n + 2k in 1/c.  Only the orders the application
needs (n <= 3) are implemented.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import sympy as sp

from .expansion import product_term_nk
from .magnetics import MagneticField
from .symcore import (SymcoreError, dagger, energy, field_atom, normalize, phase_space,
                      spinor_norm)

__all__ = [
    "DiracError", "DiracAlgebra", "SemirelParams", "EffectiveTerm", "Dirac",
    "semirel_orders", "levi_civita_field",
]

MAX_ORDER = 3


class DiracError(SymcoreError):
    pass


def _pauli():
    return (sp.Matrix([[0, 1], [1, 0]]),
            sp.Matrix([[0, -sp.I], [sp.I, 0]]),
            sp.Matrix([[1, 0], [0, -1]]))


class DiracAlgebra:
    """Dirac representation; the Clifford relations are checked on construction."""

    def __init__(self):
        s = _pauli()
        Z = sp.zeros(2)
        self.pauli = s
        self.alpha = tuple(sp.Matrix(sp.BlockMatrix([[Z, sj], [sj, Z]])) for sj in s)
        self.beta = sp.diag(1, 1, -1, -1)
        self.rho = tuple(sp.Matrix(sp.BlockMatrix([[sj, Z], [Z, sj]])) for sj in s)
        self.pi_ref = sp.diag(1, 1, 0, 0)
        self.identity = sp.eye(4)
        self.self_test()

    def self_test(self) -> None:
        I4, b = self.identity, self.beta
        for j, aj in enumerate(self.alpha):
            for l, al in enumerate(self.alpha):
                if aj * al + al * aj != 2 * (1 if j == l else 0) * I4:
                    raise DiracError(f"alpha_{j + 1} and alpha_{l + 1} violate the Clifford relation")
            if aj * b + b * aj != sp.zeros(4):
                raise DiracError(f"alpha_{j + 1} does not anticommute with beta")
        if b * b != I4:
            raise DiracError("beta^2 != Id")
        xi = phase_space(3).xi
        xa = self.dot(xi)
        if sp.expand(xa * xa - sum(v ** 2 for v in xi) * I4) != sp.zeros(4):
            raise DiracError("(xi . alpha)^2 != xi^2 Id")

    def dot(self, vec) -> sp.Matrix:
        return sum((v * a for v, a in zip(vec, self.alpha)), sp.zeros(4))

    def sigma_dot(self, vec) -> sp.Matrix:
        """vec . sigma as a 2x2 matrix."""
        return sum((v * s for v, s in zip(vec, self.pauli)), sp.zeros(2))


def levi_civita_field(Bvec) -> MagneticField:
    """B_lj = eps_ljk B_k for a 3-vector of Exprs."""
    comps = {}
    for l in range(3):
        for j in range(l + 1, 3):
            val = sum(sp.LeviCivita(l, j, k) * Bvec[k] for k in range(3))
            if val != 0:
                comps[(l, j)] = val
    return MagneticField.from_components(3, comps)


@dataclass
class SemirelParams:
    """Mass, potential and field; eps = 1/c and lam = 1/c^2 are tied to c."""

    m: sp.Symbol = field(default_factory=lambda: sp.Symbol("m", positive=True))
    V: sp.Expr | None = None
    B: tuple | None = None
    c: sp.Symbol = field(default_factory=lambda: sp.Symbol("c", positive=True))

    def __post_init__(self):
        space = phase_space(3)
        if not self.m.is_positive:
            raise DiracError("the mass must be declared positive")
        if self.V is None:
            self.V = field_atom("V", space)
        if self.B is None:
            self.B = tuple(field_atom(f"B{k}", space) for k in (1, 2, 3))
        self.B = tuple(sp.sympify(b) for b in self.B)

    @property
    def eps(self):
        return 1 / self.c

    @property
    def lam(self):
        return 1 / self.c ** 2

    @cached_property
    def field(self) -> MagneticField:
        return levi_civita_field(self.B)


def semirel_orders(n: int) -> list:
    """Pairs (n', k) with n' + 2k = n and k <= n'."""
    return [(n - 2 * k, k) for k in range(n // 2 + 1) if k <= n - 2 * k]


@dataclass
class EffectiveTerm:
    n: int
    value: sp.Matrix
    parts: dict = field(default_factory=dict)

    @property
    def hermitian(self) -> bool:
        return normalize(self.value - dagger(self.value)) == sp.zeros(*self.value.shape)

    @property
    def residual(self):
        """Full recursion minus the displayed groups; zero when they account for everything."""
        return self.parts.get("residual")


class Dirac:
    """Builders and the h_n recursion for given SemirelParams."""

    def __init__(self, params: SemirelParams | None = None, algebra: DiracAlgebra | None = None):
        self.params = params or SemirelParams()
        self.alg = algebra or DiracAlgebra()
        self.space = phase_space(3)
        self._h: dict = {}
        self._groups: dict = {}

    # -- building blocks ----------------------------------------------------

    @cached_property
    def E(self):
        return energy(self.params.m, self.space)

    @cached_property
    def H0(self) -> sp.Matrix:
        return self.params.m * self.alg.beta + self.alg.dot(self.space.xi)

    def build_H0(self) -> sp.Matrix:
        return self.H0

    def build_H2(self, V=None) -> sp.Matrix:
        return (self.params.V if V is None else V) * self.alg.identity

    @cached_property
    def pi0(self) -> sp.Matrix:
        return (self.alg.identity + self.H0 / self.E) / 2

    def build_pi0(self) -> sp.Matrix:
        return self.pi0

    @cached_property
    def u0(self) -> sp.Matrix:
        m, E = self.params.m, self.E
        N = spinor_norm(m, self.space)
        return ((E + m) * self.alg.identity - self.alg.dot(self.space.xi) * self.alg.beta) / N

    def build_u0(self) -> sp.Matrix:
        return self.u0

    @cached_property
    def u0_star(self) -> sp.Matrix:
        return dagger(self.u0)

    @cached_property
    def u3(self) -> sp.Matrix:
        """Generic third-order correction of the rotation; it drops out after projection."""
        args = self.space.x + self.space.xi
        return sp.Matrix(4, 4, lambda i, j: sp.Function(f"u3_{i + 1}{j + 1}")(*args))

    def identities(self) -> dict:
        """Exact checks of the rotation; each entry is True when it normalizes to zero."""
        u, us, I4 = self.u0, self.u0_star, self.alg.identity
        Z = sp.zeros(4)
        return {
            "H0^2 = E^2": normalize(self.H0 * self.H0 - self.E ** 2 * I4) == Z,
            "pi0^2 = pi0": normalize(self.pi0 * self.pi0 - self.pi0) == Z,
            "pi0* = pi0": normalize(dagger(self.pi0) - self.pi0) == Z,
            "u0 u0* = Id": normalize(u * us - I4) == Z,
            "u0 H0 u0* = E beta": normalize(u * self.H0 * us - self.E * self.alg.beta) == Z,
            "u0 pi0 u0* = pi_ref": normalize(u * self.pi0 * us - self.alg.pi_ref) == Z,
        }

    # -- products -----------------------------------------------------------

    def semirel_product_term(self, f, g, n: int):
        """1/c^n coefficient of f * g with eps = 1/c, lam = 1/c^2."""
        if n > MAX_ORDER or n < 0:
            raise DiracError(f"order {n} is not implemented (0 <= n <= {MAX_ORDER})")
        B = self.params.field
        out = None
        for n1, k in semirel_orders(n):
            term = product_term_nk(f, g, B, n1, k, self.space).value
            out = term if out is None else out + term
        return normalize(out)

    def _rotation(self, b: int):
        if b == 0:
            return self.u0
        if b == 3:
            return self.u3
        return None  # u_1 = u_2 = 0

    def _hamiltonian(self, b: int):
        return {0: self.H0, 2: self.build_H2()}.get(b)

    def h_term(self, n: int) -> sp.Matrix:
        """h_n from (h * u)_(n) = (u * H_D)_(n), solved for h_n u_0."""
        if n > MAX_ORDER or n < 0:
            raise DiracError(f"order {n} is not implemented (0 <= n <= {MAX_ORDER})")
        if n in self._h:
            return self._h[n]
        if n > MAX_ORDER:
            raise DiracError(f"order {n} is not implemented")
        rhs = self._rhs_groups(n)
        total = sum(rhs.values(), sp.zeros(4))
        h = normalize(total * self.u0_star)
        self._h[n] = h
        return h

    def _rhs_groups(self, n: int) -> dict:
        """Contributions to h_n u_0, keyed by their origin."""
        if n in self._groups:
            return self._groups[n]
        groups = {}
        for b in range(n + 1):
            u = self._rotation(b)
            if u is None:
                continue
            for a in (0, 2):
                H = self._hamiltonian(a)
                j = n - a - b
                if H is None or j < 0:
                    continue
                groups[("uH", b, a, j)] = self._star(u, H, j)
        for a in range(n):
            h = self.h_term(a)
            if h == sp.zeros(4):
                continue
            for b in range(n - a + 1):
                u = self._rotation(b)
                j = n - a - b
                if u is None:
                    continue
                groups[("hu", a, b, j)] = -self._star(h, u, j)
        self._groups[n] = groups
        return groups

    def _star(self, f, g, j: int):
        if j == 0:
            return f * g
        return self.semirel_product_term(f, g, j)

    # -- effective Hamiltonian ------------------------------------------------

    def project(self, M: sp.Matrix) -> sp.Matrix:
        P = self.alg.pi_ref
        return normalize(P * M * P)[:2, :2]

    def heff_term(self, n: int) -> EffectiveTerm:
        """Upper-left block of pi_ref h_n pi_ref."""
        if n in self._h or n < 3:
            full = self.project(self.h_term(n))
        else:
            # only the electronic block of (sum of groups) u0* is needed
            total = sum(self._rhs_groups(n).values(), sp.zeros(4))
            us = self.u0_star
            full = sp.Matrix(2, 2, lambda i, j: normalize(
                sum(total[i, l] * us[l, j] for l in range(4))))
        if n != 3:
            return EffectiveTerm(n, full)
        parts = self.third_order_groups()
        shown = normalize(parts["30"] + parts["31"] + parts["33"])
        parts["residual"] = normalize(full - shown)
        return EffectiveTerm(n, full, parts)

    def third_order_groups(self) -> dict:
        """The three displayed groups of the third-order term, projected."""
        u, us, H0, E = self.u0, self.u0_star, self.H0, self.E
        h0 = E * self.alg.beta
        V = self.params.V
        xi, x = self.space.xi, self.space.x
        g30 = self.project((self.u3 * H0 - h0 * self.u3) * us)
        # {u0, V} = d_xi u0 . d_x V since V carries no momentum
        pb = sum((sp.diff(u, xi[l]) * sp.diff(V, x[l]) for l in range(3)), sp.zeros(4))
        g31 = self.project(-sp.I * pb * us)
        Bm = self.params.field.matrix()
        inner = sp.zeros(4)
        for l in range(3):
            for j in range(3):
                if Bm[l, j] != 0:
                    inner += Bm[l, j] * (sp.diff(u, xi[l]) * sp.diff(H0, xi[j])
                                         - sp.diff(h0, xi[l]) * sp.diff(u, xi[j]))
        g33 = self.project(sp.I / 2 * inner * us)
        return {"30": g30, "31": g31, "33": g33}

    def heff_closed_form(self) -> sp.Matrix:
        """(1/(2E(E+m))) (grad V ^ xi) . sigma - (1/(2E)) B . sigma."""
        E, m, V = self.E, self.params.m, self.params.V
        x, xi = self.space.x, self.space.xi
        gradV = [sp.diff(V, v) for v in x]
        cross = [sum(sp.LeviCivita(k, l, j) * gradV[l] * xi[j] for l in range(3) for j in range(3))
                 for k in range(3)]
        so = self.alg.sigma_dot(cross) / (2 * E * (E + m))
        zeeman = self.alg.sigma_dot(self.params.B) / (2 * E)
        return normalize(so - zeeman)

    def commutator_orders(self, orders=(0, 1, 2)) -> dict:
        """1/c^n coefficients of [H_D, pi_0]_* (each should normalize to zero)."""
        out = {}
        for n in orders:
            acc = sp.zeros(4)
            for a in (0, 2):
                H = self._hamiltonian(a)
                j = n - a
                if j < 0:
                    continue
                acc += self._star(H, self.pi0, j) - self._star(self.pi0, H, j)
            out[n] = normalize(acc)
        return out
