"""Magnetic two-forms, vector potentials, circulations and fluxes.

Conventions
-----------
* ``B`` is stored through its strict upper triangle; ``B[l, j] = -B[j, l]``.
* Pairing with two vectors: ``B(u, v) = sum_{k,l} B_kl u_k v_l``.
* The triangle <a, b, c> is traversed a -> b -> c -> a, so a constant field
  has flux ``B(b - a, c - a) / 2``.
* Scaled flux: ``gamma_eps(x, y, z) = flux(<x - eps(y+z)/2, x + eps(y-z)/2,
  x + eps(y+z)/2>) / eps`` and ``gamma_eps = -sum_n eps^n L_n``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial
from typing import Callable, Mapping, Sequence

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef

from .symcore import PhaseSpace, normalize, phase_space, to_numpy

__all__ = [
    "MagneticField", "VectorPotential", "Triangle", "FluxTaylorTerm", "FluxEstimate",
    "MagneticsError", "NonPolynomialFieldError", "QuadratureError", "FluxMismatchError",
    "aux_symbols", "eps_symbol", "constant_field", "transversal_gauge", "add_gradient",
    "curl", "check_potential", "circulation", "circulation_symbolic", "segment_average",
    "flux", "flux_estimate", "scaled_flux", "flux_taylor_term", "flux_taylor_oracle",
    "flux_taylor_surface", "gauss_legendre",
]


class MagneticsError(ValueError):
    pass


class NonPolynomialFieldError(MagneticsError):
    pass


class QuadratureError(MagneticsError):
    def __init__(self, message, coarse=None, fine=None):
        super().__init__(message)
        self.coarse = coarse
        self.fine = fine


class FluxMismatchError(MagneticsError):
    pass


@lru_cache(maxsize=None)
def aux_symbols(d: int):
    """Auxiliary variables (y, z) of the twisted product, real symbols y1.., z1.."""
    y = tuple(sp.Symbol(f"y{i}", real=True) for i in range(1, d + 1))
    z = tuple(sp.Symbol(f"z{i}", real=True) for i in range(1, d + 1))
    return y, z


eps_symbol = sp.Symbol("eps", positive=True)


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    """Nodes and weights on [0, 1]."""
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


def _classify(exprs: Sequence, space: PhaseSpace) -> str:
    exprs = [sp.sympify(e) for e in exprs]
    if all(not (e.free_symbols & set(space.x)) and not e.atoms(AppliedUndef) for e in exprs):
        return "constant"
    if all(e.is_polynomial(*space.x) and not e.atoms(AppliedUndef) for e in exprs):
        return "polynomial"
    return "general"


@dataclass(frozen=True)
class MagneticField:
    dim: int
    upper: tuple  # ((l, j, expr), ...) with 0 <= l < j < dim, zero entries omitted
    kind: str = "constant"
    evaluator: Callable | None = field(default=None, compare=False, hash=False)

    @classmethod
    def from_components(cls, dim: int, comps: Mapping, evaluator: Callable | None = None,
                        one_based: bool = False) -> "MagneticField":
        """Build from {(l, j): expr}; lower-triangle entries are folded with a sign."""
        space = phase_space(dim)
        store: dict = {}
        for (l, j), e in comps.items():
            if one_based:
                l, j = l - 1, j - 1
            if not (0 <= l < dim and 0 <= j < dim):
                raise MagneticsError(f"index ({l}, {j}) outside dimension {dim}")
            if l == j:
                raise MagneticsError("diagonal components of a two-form vanish identically")
            e = sp.sympify(e)
            if e.free_symbols & set(space.xi):
                raise MagneticsError("magnetic field components may not depend on momentum")
            if l > j:
                l, j, e = j, l, -e
            store[(l, j)] = store.get((l, j), 0) + e
        upper = tuple((l, j, e) for (l, j), e in sorted(store.items()) if e != 0)
        kind = _classify([e for *_, e in upper], space) if upper else "constant"
        return cls(dim, upper, kind, evaluator)

    @property
    def space(self) -> PhaseSpace:
        return phase_space(self.dim)

    def component(self, l: int, j: int):
        for a, b, e in self.upper:
            if (a, b) == (l, j):
                return e
            if (a, b) == (j, l):
                return -e
        return sp.Integer(0)

    def matrix(self) -> sp.ImmutableMatrix:
        M = sp.zeros(self.dim, self.dim)
        for l, j, e in self.upper:
            M[l, j] = e
            M[j, l] = -e
        return sp.ImmutableMatrix(M)

    @property
    def is_zero(self) -> bool:
        return not self.upper

    @property
    def is_polynomial(self) -> bool:
        return self.kind in ("constant", "polynomial")

    def require_polynomial(self, what: str):
        if not self.is_polynomial:
            raise NonPolynomialFieldError(
                f"{what} needs a polynomial field; use the numeric (quadrature) path instead")

    def is_closed(self) -> bool:
        """dB = 0, i.e. d_i B_jk + d_j B_ki + d_k B_ij = 0 for all i < j < k."""
        x = self.space.x
        for i in range(self.dim):
            for j in range(i + 1, self.dim):
                for k in range(j + 1, self.dim):
                    cyc = (sp.diff(self.component(j, k), x[i]) + sp.diff(self.component(k, i), x[j])
                           + sp.diff(self.component(i, j), x[k]))
                    if normalize(cyc) != 0:
                        return False
        return True

    def pair(self, u: Sequence, v: Sequence):
        """Symbolic B(u, v) = sum B_kl u_k v_l."""
        out = 0
        for l, j, e in self.upper:
            out += e * (u[l] * v[j] - u[j] * v[l])
        return out

    def subs(self, mapping) -> "MagneticField":
        comps = {(l, j): e.subs(mapping) for l, j, e in self.upper}
        return MagneticField.from_components(self.dim, comps, self.evaluator)

    def numeric(self, points: np.ndarray) -> np.ndarray:
        """B at points of shape (..., d); returns (..., d, d)."""
        points = np.asarray(points, dtype=float)
        if self.evaluator is not None:
            return np.asarray(self.evaluator(points))
        out = np.zeros(points.shape[:-1] + (self.dim, self.dim))
        fns = _component_functions(self)
        for (l, j), fn in fns.items():
            val = fn(*np.moveaxis(points, -1, 0))
            out[..., l, j] = val
            out[..., j, l] = -val
        return out


@lru_cache(maxsize=64)
def _component_functions(B: MagneticField) -> dict:
    if B.kind == "general" and B.evaluator is None:
        raise MagneticsError("general fields need a numeric evaluator")
    return {(l, j): to_numpy(e, B.space.x) for l, j, e in B.upper}


def constant_field(dim: int, comps: Mapping) -> MagneticField:
    return MagneticField.from_components(dim, comps)


@dataclass(frozen=True)
class VectorPotential:
    dim: int
    components: tuple | None  # exact Exprs in x, or None for a purely numeric potential
    evaluator: Callable | None = field(default=None, compare=False, hash=False)

    @property
    def space(self) -> PhaseSpace:
        return phase_space(self.dim)

    @property
    def is_polynomial(self) -> bool:
        return self.components is not None and all(
            sp.sympify(a).is_polynomial(*self.space.x) and not sp.sympify(a).atoms(AppliedUndef)
            for a in self.components)

    def numeric(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.components is None:
            return np.asarray(self.evaluator(points))
        fns = _potential_functions(self)
        cols = [np.broadcast_to(fn(*np.moveaxis(points, -1, 0)), points.shape[:-1])
                for fn in fns]
        return np.stack(cols, axis=-1)


@lru_cache(maxsize=64)
def _potential_functions(A: VectorPotential):
    return tuple(to_numpy(a, A.space.x) for a in A.components)


@dataclass(frozen=True)
class Triangle:
    a: tuple
    b: tuple
    c: tuple

    def __post_init__(self):
        if not (len(self.a) == len(self.b) == len(self.c)):
            raise MagneticsError("triangle corners must share a dimension")

    @property
    def dim(self) -> int:
        return len(self.a)

    def reversed(self) -> "Triangle":
        return Triangle(self.b, self.a, self.c)


@dataclass(frozen=True)
class FluxTaylorTerm:
    n: int
    value: sp.Expr

    def degree_in(self, y, z) -> int:
        if self.value == 0:
            return self.n + 1
        poly = sp.Poly(self.value, *y, *z)
        degs = {sum(m) for m in poly.monoms()}
        return degs.pop() if len(degs) == 1 else -1


@dataclass(frozen=True)
class FluxEstimate:
    quadrature: float
    stokes: float

    @property
    def delta(self) -> float:
        return abs(self.quadrature - self.stokes)


# ---------------------------------------------------------------------------
# gauges


def transversal_gauge(B: MagneticField, x0: Sequence | None = None,
                      nodes: int = 32) -> VectorPotential:
    """A_l(x0 + a) = -int_0^1 B_lj(x0 + s a) s a_j ds."""
    d = B.dim
    space = B.space
    x0 = tuple(sp.Integer(0) for _ in range(d)) if x0 is None else tuple(sp.sympify(v) for v in x0)
    if not B.is_polynomial:
        return _numeric_transversal_gauge(B, np.array([float(v) for v in x0]), nodes)
    s = sp.Dummy("s")
    a = [xv - c for xv, c in zip(space.x, x0)]
    shifted = {xv: c + s * av for xv, c, av in zip(space.x, x0, a)}
    Bm = B.matrix()
    comps = []
    for l in range(d):
        integrand = 0
        for j in range(d):
            if Bm[l, j] != 0:
                integrand += Bm[l, j].xreplace(shifted) * s * a[j]
        comps.append(sp.expand(-_integrate01(integrand, s)) if integrand != 0 else sp.Integer(0))
    return VectorPotential(d, tuple(comps))


def _numeric_transversal_gauge(B: MagneticField, x0: np.ndarray, nodes: int) -> VectorPotential:
    s, w = gauss_legendre(nodes)

    def evaluate(points):
        points = np.asarray(points, dtype=float)
        a = points - x0
        pts = x0 + s[:, None] * a[..., None, :]  # (..., n, d)
        Bv = B.numeric(pts)  # (..., n, d, d)
        return -np.einsum("n,...nlj,...j->...l", w * s, Bv, a)

    return VectorPotential(B.dim, None, evaluate)


def add_gradient(A: VectorPotential, chi, scale=1) -> VectorPotential:
    """A + scale * grad(chi) for a symbolic gauge function chi(x)."""
    if A.components is None:
        raise MagneticsError("gauge transformations need an exact potential")
    comps = tuple(sp.expand(a + scale * sp.diff(chi, xv)) for a, xv in zip(A.components, A.space.x))
    return VectorPotential(A.dim, comps)


def curl(A: VectorPotential) -> MagneticField:
    x = A.space.x
    comps = {}
    for l in range(A.dim):
        for j in range(l + 1, A.dim):
            comps[(l, j)] = sp.expand(sp.diff(A.components[j], x[l]) - sp.diff(A.components[l], x[j]))
    return MagneticField.from_components(A.dim, comps)


def check_potential(A: VectorPotential, B: MagneticField) -> bool:
    """dA = B as an exact identity: d_l A_j - d_j A_l = B_lj."""
    x = A.space.x
    for l in range(A.dim):
        for j in range(l + 1, A.dim):
            lhs = sp.diff(A.components[j], x[l]) - sp.diff(A.components[l], x[j])
            if normalize(lhs - B.component(l, j)) != 0:
                return False
    return True


# ---------------------------------------------------------------------------
# circulation


def segment_average(A: VectorPotential, p: Sequence, q: Sequence):
    """Exact int_0^1 A(p + s(q - p)) ds (vector of Exprs) for polynomial A."""
    if not A.is_polynomial:
        raise NonPolynomialFieldError("exact segment averages need a polynomial potential")
    s = sp.Dummy("s")
    sub = {xv: pv + s * (qv - pv) for xv, pv, qv in zip(A.space.x, p, q)}
    return tuple(sp.expand(_integrate01(a.xreplace(sub), s)) for a in A.components)


def circulation_symbolic(A: VectorPotential, p: Sequence, q: Sequence):
    """Gamma^A([p, q]) = (q - p) . int_0^1 A(p + s(q - p)) ds as an Expr."""
    avg = segment_average(A, p, q)
    return sp.expand(sum((qv - pv) * av for pv, qv, av in zip(p, q, avg)))


@lru_cache(maxsize=64)
def _circulation_function(A: VectorPotential):
    d = A.dim
    p = sp.symbols(f"p1:{d + 1}", real=True)
    q = sp.symbols(f"q1:{d + 1}", real=True)
    expr = circulation_symbolic(A, p, q)
    return to_numpy(expr, p + q)


def circulation(A: VectorPotential, x: Sequence, y: Sequence, nodes: int = 32,
                tol: float = 1e-12) -> float:
    """Gamma^A([x, y]); exact for polynomial A, Gauss-Legendre otherwise."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if A.is_polynomial:
        return float(np.real(_circulation_function(A)(*x, *y)))
    coarse = _circulation_quadrature(A, x, y, nodes)
    fine = _circulation_quadrature(A, x, y, 2 * nodes)
    if abs(coarse - fine) > tol * max(1.0, abs(fine)):
        raise QuadratureError("circulation quadrature did not converge", coarse, fine)
    return fine


def _circulation_quadrature(A, x, y, nodes):
    s, w = gauss_legendre(nodes)
    pts = x + s[:, None] * (y - x)
    return float(np.sum(w * (A.numeric(pts) @ (y - x))))


def circulation_grid(A: VectorPotential, p: np.ndarray, q: np.ndarray, nodes: int = 32) -> np.ndarray:
    """Vectorized Gamma^A([p, q]) for arrays of shape (..., d)."""
    if A.is_polynomial:
        fn = _circulation_function(A)
        out = fn(*np.moveaxis(p, -1, 0), *np.moveaxis(q, -1, 0))
        return np.broadcast_to(np.real(out), np.broadcast_shapes(p.shape[:-1], q.shape[:-1]))
    s, w = gauss_legendre(nodes)
    out = 0.0
    for sk, wk in zip(s, w):
        out = out + wk * np.sum(A.numeric(p + sk * (q - p)) * (q - p), axis=-1)
    return out


# ---------------------------------------------------------------------------
# flux


def _flux_quadrature(B: MagneticField, t: Triangle, nodes: int) -> float:
    a, b, c = (np.asarray(v, dtype=float) for v in (t.a, t.b, t.c))
    e1, e2 = b - a, c - a
    s, w = gauss_legendre(nodes)
    # collapsed square: u = s, v = (1 - s) t, jacobian (1 - s)
    S, T = np.meshgrid(s, s, indexing="ij")
    W = np.outer(w, w) * (1.0 - S)
    pts = a + S[..., None] * e1 + ((1.0 - S) * T)[..., None] * e2
    Bv = B.numeric(pts)
    integrand = np.einsum("...kl,k,l->...", Bv, e1, e2)
    return float(np.sum(W * integrand))


def flux_estimate(B: MagneticField, t: Triangle, nodes: int = 32,
                  A: VectorPotential | None = None) -> FluxEstimate:
    """Flux through t by surface quadrature and by Stokes' theorem."""
    if t.dim != B.dim:
        raise MagneticsError("triangle and field dimensions differ")
    quad = _flux_quadrature(B, t, nodes)
    A = A if A is not None else transversal_gauge(B)
    stokes = (circulation(A, t.a, t.b, nodes) + circulation(A, t.b, t.c, nodes)
              + circulation(A, t.c, t.a, nodes))
    return FluxEstimate(quad, stokes)


def flux(B: MagneticField, t: Triangle, nodes: int = 32, rtol: float = 1e-8) -> float:
    est = flux_estimate(B, t, nodes)
    scale = max(abs(est.quadrature), abs(est.stokes))
    if est.delta > rtol * scale + 1e-13:
        raise FluxMismatchError(
            f"flux methods disagree: quadrature {est.quadrature!r}, stokes {est.stokes!r}")
    return est.quadrature


def scaled_flux(B: MagneticField, x, y, z, eps: float, nodes: int = 32) -> float:
    if eps == 0:
        raise MagneticsError("the scaled flux needs eps != 0")
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    t = Triangle(tuple(x - eps * (y + z) / 2), tuple(x + eps * (y - z) / 2),
                 tuple(x + eps * (y + z) / 2))
    return flux(B, t, nodes) / eps


# ---------------------------------------------------------------------------
# Taylor expansion of the scaled flux


def _integrate01(expr, var):
    """int_0^1 expr d var for expr polynomial in var."""
    poly = sp.Poly(sp.expand(expr), var)
    return sp.Add(*[c / (k[0] + 1) for k, c in poly.terms()])


def _directional(e, direction, x, times: int):
    for _ in range(times):
        e = sum(dv * sp.diff(e, xv) for dv, xv in zip(direction, x))
    return e


def _check_symbolic(B: MagneticField):
    for *_, e in B.upper:
        for fn in e.atoms(sp.Function):
            if not isinstance(fn, AppliedUndef):
                raise NonPolynomialFieldError(
                    "the symbolic flux expansion needs polynomial (or opaque) components")


def flux_taylor_term(B: MagneticField, n: int) -> FluxTaylorTerm:
    """Closed-form coefficient sum for L_n, with the global sign fixed by the oracle."""
    if n < 1:
        raise MagneticsError("flux Taylor terms start at n = 1")
    _check_symbolic(B)
    d = B.dim
    x = B.space.x
    y, z = aux_symbols(d)
    j = n
    pref = sp.Rational(-1, factorial(j)) * sp.Rational(-1, 2) ** (j + 1) / (j + 1) ** 2
    Bm = B.matrix()
    core = sum(Bm[k, l] * y[k] * z[l] for k in range(d) for l in range(d) if Bm[k, l] != 0)
    total = 0
    for c in range(1, j + 1):
        w = (1 - (-1) ** (j + 1)) * c - (1 - (-1) ** c) * (j + 1)
        if w == 0:
            continue
        term = _directional(_directional(core, y, x, c - 1), z, x, j - c)
        total += comb(j + 1, c) * w * term
    # the displayed sum equals -L_n (verified against flux_taylor_oracle)
    return FluxTaylorTerm(n, sp.expand(-pref * total))


def flux_taylor_oracle(B: MagneticField, N: int) -> list:
    """L_1..L_N from the three-edge circulation form of gamma_eps (polynomial B)."""
    if N <= 0:
        return []
    _check_symbolic(B)
    if not B.is_polynomial:
        return flux_taylor_surface(B, N)
    if not B.is_closed():
        raise MagneticsError("the field is not closed (dB != 0); no vector potential exists")
    return list(_oracle_cached(B, N))


@lru_cache(maxsize=128)
def _oracle_cached(B: MagneticField, N: int) -> tuple:
    d = B.dim
    x = B.space.x
    y, z = aux_symbols(d)
    eps = eps_symbol
    if B.is_zero:
        return tuple(FluxTaylorTerm(n, sp.Integer(0)) for n in range(1, N + 1))
    A = transversal_gauge(B)
    params = set()
    for comp in A.components:
        params |= comp.free_symbols
    params = sorted(params - set(x), key=sp.default_sort_key)
    s = sp.Dummy("s")
    # sparse polynomial arithmetic; sympy expression trees are far slower here
    R, *gens = sp.ring(list(x) + list(y) + list(z) + [eps, s] + params, sp.QQ)
    X, Y, Z = gens[:d], gens[d:2 * d], gens[2 * d:3 * d]
    E, S = gens[3 * d], gens[3 * d + 1]
    Ap = [R(sp.expand(comp)) for comp in A.components]
    a = [X[i] - E * (Y[i] + Z[i]) / 2 for i in range(d)]
    b = [X[i] + E * (Y[i] - Z[i]) / 2 for i in range(d)]
    c = [X[i] + E * (Y[i] + Z[i]) / 2 for i in range(d)]
    s_idx = 3 * d + 1
    e_idx = 3 * d

    def edge(p, q):
        seg = [(X[i], p[i] + S * (q[i] - p[i])) for i in range(d)]
        out = R.zero
        for i in range(d):
            out += (q[i] - p[i]) * Ap[i].compose(seg)
        # integrate over s in [0, 1]
        res = R.zero
        for monom, coeff in out.terms():
            k = monom[s_idx]
            m = list(monom)
            m[s_idx] = 0
            res += R({tuple(m): coeff / (k + 1)})
        return res

    total = edge(a, b) + edge(b, c) + edge(c, a)
    by_order: dict = {}
    for monom, coeff in total.terms():
        k = monom[e_idx]
        m = list(monom)
        m[e_idx] = 0
        by_order[k] = by_order.get(k, R.zero) + R({tuple(m): coeff})
    out = []
    for n in range(1, N + 1):
        # gamma = total / eps, so eps^n in gamma is eps^(n+1) in total
        term = by_order.get(n + 1, R.zero)
        out.append(FluxTaylorTerm(n, sp.expand(-term.as_expr())))
    return tuple(out)


def flux_taylor_surface(B: MagneticField, N: int) -> list:
    """L_1..L_N from the surface-integral form with B Taylor-expanded around x.

    gamma_eps = eps int_0^1 ds int_0^1 dt s B_kl(x + eps w) y_k z_l with
    w = s(y + t z) - (y + z)/2.  Works for opaque components as well.
    """
    if N <= 0:
        return []
    d = B.dim
    x = B.space.x
    y, z = aux_symbols(d)
    s, t = sp.Dummy("s"), sp.Dummy("t")
    w = [s * (yv + t * zv) - (yv + zv) / 2 for yv, zv in zip(y, z)]
    Bm = B.matrix()
    core = sum(Bm[k, l] * y[k] * z[l] for k in range(d) for l in range(d) if Bm[k, l] != 0)
    out = []
    for n in range(1, N + 1):
        # eps^n in gamma comes from the (n-1)-th Taylor term of B
        r = n - 1
        taylor = _directional(core, w, x, r) / factorial(r)
        val = _integrate01(_integrate01(s * taylor, s), t)
        out.append(FluxTaylorTerm(n, sp.expand(-val)))
    return out
