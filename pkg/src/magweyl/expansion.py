"""Two-parameter (eps, lambda) expansion of the magnetic Moyal product.

The product is generated by the twister exp(iT) with
T = eps * L0(Y, Z) - lambda * gamma_eps, L0 = (eta.z - y.zeta)/2 and
gamma_eps = -sum_j eps^j L_j(x, y, z).  Every coefficient of eps^n lambda^k
is a polynomial P(y, eta, z, zeta) whose monomials are turned into
derivatives by

    y^a eta^alpha  ->  (-i d_xi)^a (i d_x)^alpha   acting on f,
    z^b zeta^beta  ->  (-i d_xi)^b (i d_x)^beta    acting on g,

followed by restriction to the diagonal.  Operand order f-then-g is kept,
so matrix-valued symbols are handled as well.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial
from typing import Mapping, Sequence

import sympy as sp

from .magnetics import (MagneticField, NonPolynomialFieldError, VectorPotential, aux_symbols,
                        flux_taylor_oracle, flux_taylor_surface, flux_taylor_term,
                        segment_average)
from .symcore import (Energy, PhaseSpace, SpinorNorm, multiindices, normalize, partial, phase_space,
                      space_of)

__all__ = [
    "Partition", "Precision", "ProductTerm", "ExpansionSeries", "EquivalenceReport",
    "ExpansionError", "precision_bookkeeping", "enumerate_partitions", "momentum_aux",
    "L0", "apply_L0_power", "apply_Lj", "apply_bidifferential", "product_term_nk",
    "epsilon_term", "expand_product", "moyal_term", "equivalence_check",
    "minsub_transform", "minsub_correction_g", "minsub_correction_f", "minsub_roundtrip",
    "semiclassical_product_term", "zero_field",
]


class ExpansionError(ValueError):
    pass


def zero_field(d: int) -> MagneticField:
    return MagneticField.from_components(d, {})


# ---------------------------------------------------------------------------
# bookkeeping


@dataclass(frozen=True)
class Partition:
    k0: int
    ks: tuple  # ks[j - 1] = k_j

    @property
    def n(self) -> int:
        return self.k0 + sum(j * kj for j, kj in enumerate(self.ks, start=1))

    @property
    def k(self) -> int:
        return sum(self.ks)

    @property
    def weight(self) -> int:
        """k0! k1! ... kn!"""
        out = factorial(self.k0)
        for kj in self.ks:
            out *= factorial(kj)
        return out


def enumerate_partitions(n: int, k: int) -> list[Partition]:
    """All (k0, k1, .., kn) with k0 + sum j k_j = n and sum k_j = k."""
    if k > n or k < 0 or n < 0:
        return []
    out = []

    def rec(j: int, left_n: int, left_k: int, acc: list):
        if j > n:
            if left_k == 0:
                out.append(Partition(left_n, tuple(acc)))
            return
        for kj in range(0, min(left_k, left_n // j) + 1):
            rec(j + 1, left_n - j * kj, left_k - kj, acc + [kj])

    rec(1, n, k, [])
    return out


def _as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, str):
        return Fraction(v)
    return Fraction(v)


@dataclass(frozen=True)
class Precision:
    eps: float
    lam: float
    tol: float
    n_c: int
    k_c: int

    @property
    def N(self) -> int:
        return max(self.n_c, self.k_c)


def _order_for(base: Fraction, tol: Fraction) -> int:
    # largest n with tol <= base^n, equivalently base^(n+1) < tol <= base^n
    n = 0
    while base ** (n + 1) >= tol:
        n += 1
    return n


def precision_bookkeeping(eps, lam, tol) -> Precision:
    vals = [_as_fraction(v) for v in (eps, lam, tol)]
    for name, v in zip(("eps", "lambda", "precision"), vals):
        if not 0 < v < 1:
            raise ExpansionError(f"{name} must lie in (0, 1), got {float(v)}")
    e, l, t = vals
    return Precision(float(e), float(l), float(t), _order_for(e, t), _order_for(l, t))


# ---------------------------------------------------------------------------
# the bidifferential calculus


@lru_cache(maxsize=None)
def momentum_aux(d: int):
    """Dual auxiliary variables (eta, zeta), standing for i d_x on f and on g."""
    eta = tuple(sp.Symbol(f"eta{i}", real=True) for i in range(1, d + 1))
    zeta = tuple(sp.Symbol(f"zeta{i}", real=True) for i in range(1, d + 1))
    return eta, zeta


def L0(d: int):
    y, z = aux_symbols(d)
    eta, zeta = momentum_aux(d)
    return sp.Rational(1, 2) * sum(e * zv - yv * ze for yv, e, zv, ze in zip(y, eta, z, zeta))


class _Derivs:
    """Memoized mixed derivatives of one operand.

    Energy and SpinorNorm atoms are swapped for plain symbols and
    differentiated by the chain rule; sympy's assumption queries on the
    radicals otherwise dominate the cost of high-order derivatives.
    """

    def __init__(self, f, space: PhaseSpace):
        self.space = space
        self.cache: dict = {}
        vals = list(f) if isinstance(f, sp.MatrixBase) else [sp.sympify(f)]
        rads = set()
        for v in vals:
            rads |= v.atoms(Energy, SpinorNorm)
        self.fwd = {r: sp.Dummy(("E" if isinstance(r, Energy) else "N")) for r in rads}
        self.back = {v: k for k, v in self.fwd.items()}
        self.chain = {}
        for r, s in self.fwd.items():
            xi = space.xi
            args = r.args[1:]
            # d r / d xi_j written in the swapped symbols
            self.chain[s] = [sp.diff(r, v).xreplace(self.fwd) if v in args else sp.Integer(0)
                             for v in xi]
        self.f = f.xreplace(self.fwd) if self.fwd else f

    def _step(self, e, kind: str, idx: int):
        v = (self.space.x if kind == "x" else self.space.xi)[idx]

        def d(expr):
            out = sp.diff(expr, v)
            if kind == "xi":
                for s, grads in self.chain.items():
                    if grads[idx] != 0 and expr.has(s):
                        out += sp.diff(expr, s) * grads[idx]
            return out

        return e.applyfunc(d) if isinstance(e, sp.MatrixBase) else d(e)

    def _raw(self, a: tuple, alpha: tuple):
        key = (a, alpha)
        if key in self.cache:
            return self.cache[key]
        idx = next((i for i, v in enumerate(alpha) if v), None)
        if idx is not None:
            lower = (a, alpha[:idx] + (alpha[idx] - 1,) + alpha[idx + 1:])
            kind = "xi"
        else:
            idx = next((i for i, v in enumerate(a) if v), None)
            if idx is None:
                self.cache[key] = self.f
                return self.f
            lower = (a[:idx] + (a[idx] - 1,) + a[idx + 1:], alpha)
            kind = "x"
        base = self._raw(*lower)
        self.cache[key] = base if _is_zero(base) else self._step(base, kind, idx)
        return self.cache[key]

    def __call__(self, a: tuple, alpha: tuple):
        out = self._raw(a, alpha)
        return out.xreplace(self.back) if self.back else out


@dataclass(frozen=True)
class DerivativeCount:
    xi: frozenset
    x_max: int


def apply_bidifferential(P, f, g, space: PhaseSpace, counts: bool = False):
    """Turn the aux polynomial P into sum c(x) D_f f * D_g g (not normalized)."""
    d = space.d
    y, z = aux_symbols(d)
    eta, zeta = momentum_aux(d)
    P = sp.expand(P)
    if P == 0:
        zero = _zero_like(f, g)
        return (zero, DerivativeCount(frozenset(), 0)) if counts else zero
    poly = sp.Poly(P, *y, *eta, *z, *zeta)
    Df, Dg = _Derivs(f, space), _Derivs(g, space)
    fx, gx = _depends_on_x(f, space), _depends_on_x(g, space)
    out = _zero_like(f, g)
    xi_counts, x_max = set(), 0
    for monom, coeff in poly.terms():
        ay, ae = monom[:d], monom[d:2 * d]
        bz, bze = monom[2 * d:3 * d], monom[3 * d:]
        nxi_f, nx_f = sum(ay), sum(ae)
        nxi_g, nx_g = sum(bz), sum(bze)
        phase = (-sp.I) ** (nxi_f + nxi_g) * sp.I ** (nx_f + nx_g)
        xi_counts.add(nxi_f + nxi_g)
        x_max = max(x_max, nx_f + nx_g)
        if (nx_f and not fx) or (nx_g and not gx):
            continue
        left = Df(ae, ay)
        if _is_zero(left):
            continue
        right = Dg(bze, bz)
        if _is_zero(right):
            continue
        out = out + (coeff * phase) * left * right
    if counts:
        return out, DerivativeCount(frozenset(xi_counts), x_max)
    return out


def _depends_on_x(f, space: PhaseSpace) -> bool:
    vals = list(f) if isinstance(f, sp.MatrixBase) else [sp.sympify(f)]
    xs = set(space.x)
    return any(v.free_symbols & xs for v in vals)


def _zero_like(f, g):
    if isinstance(f, sp.MatrixBase) or isinstance(g, sp.MatrixBase):
        rows = f.shape[0] if isinstance(f, sp.MatrixBase) else g.shape[0]
        cols = g.shape[1] if isinstance(g, sp.MatrixBase) else f.shape[1]
        return sp.zeros(rows, cols)
    return sp.Integer(0)


def apply_L0_power(f, g, p: int, space: PhaseSpace | None = None):
    """L0^p applied to f (x) g and restricted to the diagonal.

    For p = 1 this is (d_x f . d_xi g - d_xi f . d_x g) / 2.
    """
    if p < 0:
        raise ExpansionError("power must be non-negative")
    space = space or space_of(f, g)
    return normalize(apply_bidifferential(L0(space.d) ** p, f, g, space))


def _flux_terms(B: MagneticField, jmax: int, source: str) -> dict:
    if jmax <= 0 or B.is_zero:
        return {j: sp.Integer(0) for j in range(1, jmax + 1)}
    if source == "oracle":
        terms = flux_taylor_oracle(B, jmax)
    elif source == "closed_form":
        terms = [flux_taylor_term(B, j) for j in range(1, jmax + 1)]
    elif source == "surface":
        terms = flux_taylor_surface(B, jmax)
    else:
        raise ExpansionError(f"unknown flux source {source!r}")
    return {t.n: t.value for t in terms}


def apply_Lj(j: int, f, g, B: MagneticField, space: PhaseSpace | None = None,
             source: str = "oracle"):
    """L_j(x, -i d_xi(f), -i d_xi(g)) applied to f (x) g on the diagonal."""
    if j < 1:
        raise ExpansionError("L_j is defined for j >= 1")
    space = space or phase_space(B.dim)
    Lj = _flux_terms(B, j, source)[j]
    return normalize(apply_bidifferential(Lj, f, g, space))


# ---------------------------------------------------------------------------
# product terms


@dataclass(frozen=True)
class ProductTerm:
    n: int
    k: int
    value: object
    xi_derivatives: frozenset = frozenset()
    max_x_derivatives: int = 0

    def __post_init__(self):
        if not 0 <= self.k <= self.n:
            raise ExpansionError(f"product terms need 0 <= k <= n, got ({self.n}, {self.k})")

    def structure_ok(self) -> bool:
        """n + k momentum derivatives and at most n - k position derivatives."""
        if not self.xi_derivatives:
            return True
        return self.xi_derivatives == {self.n + self.k} and self.max_x_derivatives <= self.n - self.k


def _nk_polynomial(n: int, k: int, d: int, Lj: Mapping):
    L0p = L0(d)
    total = 0
    for part in enumerate_partitions(n, k):
        term = sp.I ** (k + part.k0) / part.weight * L0p ** part.k0
        for j, kj in enumerate(part.ks, start=1):
            if kj:
                term = term * Lj[j] ** kj
        total += term
    return sp.expand(total)


def product_term_nk(f, g, B: MagneticField, n: int, k: int,
                    space: PhaseSpace | None = None, source: str = "oracle") -> ProductTerm:
    """(f * g)_(n,k): sum over partitions of i^(k+k0)/(k0! k1! ..) L0^k0 prod L_j^kj."""
    if not 0 <= k <= n:
        raise ExpansionError(f"need 0 <= k <= n, got ({n}, {k})")
    space = space or phase_space(B.dim)
    if k >= 1 and not B.is_zero and B.kind == "general":
        _ensure_symbolic(B)
    Lj = _flux_terms(B, n - k + 1 if k else 0, source)
    P = _nk_polynomial(n, k, space.d, Lj)
    raw, cnt = apply_bidifferential(P, f, g, space, counts=True)
    return ProductTerm(n, k, normalize(raw), cnt.xi, cnt.x_max)


def _ensure_symbolic(B: MagneticField):
    from sympy.core.function import AppliedUndef
    for *_, e in B.upper:
        for fn in e.atoms(sp.Function):
            if not isinstance(fn, AppliedUndef):
                raise NonPolynomialFieldError("the expansion engine needs polynomial or opaque fields")


def epsilon_term(f, g, B: MagneticField, n: int, space: PhaseSpace | None = None):
    """(f * g)_(n) = sum_k (f * g)_(n,k), i.e. the eps^n coefficient at lambda = 1."""
    space = space or phase_space(B.dim)
    out = _zero_like(f, g)
    for k in range(n + 1):
        out = out + product_term_nk(f, g, B, n, k, space).value
    return normalize(out)


@dataclass
class ExpansionSeries:
    terms: dict
    eps: float | None = None
    lam: float | None = None
    tol: float | None = None
    N: int = 0

    def value(self, eps, lam, orders: int | None = None):
        N = self.N if orders is None else orders
        out = 0
        for (n, k), term in sorted(self.terms.items()):
            if n <= N:
                out = out + sp.sympify(eps) ** n * sp.sympify(lam) ** k * term.value
        return out

    def order(self, n: int, lam=1):
        return sum((sp.sympify(lam) ** k * t.value for (m, k), t in self.terms.items() if m == n),
                   sp.Integer(0))


def expand_product(f, g, B: MagneticField, prec: Precision | int,
                   space: PhaseSpace | None = None) -> ExpansionSeries:
    space = space or phase_space(B.dim)
    if isinstance(prec, Precision):
        N, meta = prec.N, (prec.eps, prec.lam, prec.tol)
    else:
        N, meta = int(prec), (None, None, None)
    terms = {}
    for n in range(N + 1):
        for k in range(n + 1):
            terms[(n, k)] = product_term_nk(f, g, B, n, k, space)
    return ExpansionSeries(terms, *meta, N=N)


def semiclassical_product_term(f_terms: Mapping, g_terms: Mapping, B: MagneticField,
                               n: int, k: int, space: PhaseSpace | None = None):
    """(n, k) coefficient of F * G for F = sum eps^a lam^b f_ab, G likewise."""
    space = space or phase_space(B.dim)
    out = 0
    for (n1, k1), fv in f_terms.items():
        for (n2, k2), gv in g_terms.items():
            n3, k3 = n - n1 - n2, k - k1 - k2
            if n3 < 0 or k3 < 0 or k3 > n3:
                continue
            out = out + product_term_nk(fv, gv, B, n3, k3, space).value
    return normalize(out)


# ---------------------------------------------------------------------------
# reference implementations


def moyal_term(f, g, n: int, space: PhaseSpace | None = None):
    """Plain Moyal coefficient (i/2)^n / n! (d_x^f d_xi^g - d_xi^f d_x^g)^n f g."""
    space = space or space_of(f, g)
    d = space.d
    out = _zero_like(f, g)
    for k in range(n + 1):
        sign = (-1) ** (n - k)
        for a in multiindices(d, k):
            ca = Fraction(factorial(k), _mfact(a))
            for b in multiindices(d, n - k):
                cb = Fraction(factorial(n - k), _mfact(b))
                c = comb(n, k) * sign * ca * cb
                left = partial(f, space, a, b)
                right = partial(g, space, b, a)
                out = out + sp.Rational(c.numerator, c.denominator) * left * right
    return normalize(sp.I ** n / (2 ** n * factorial(n)) * out)


def _mfact(a) -> int:
    out = 1
    for v in a:
        out *= factorial(v)
    return out


@dataclass
class EquivalenceReport:
    N: int
    passed: bool
    mismatches: list = field(default_factory=list)  # (n, k, difference)
    checked: int = 0


def equivalence_check(f, g, B: MagneticField, N: int,
                      space: PhaseSpace | None = None) -> EquivalenceReport:
    """Compare the eps-first terms with an independent lambda-first regrouping.

    lambda-first: exp(-i lam gamma) = sum_k (i lam)^k (sum_j e^j L_j)^k / k!,
    then exp(i e L0) is expanded and the e^n coefficient read off.  The L_j
    come from the surface-integral Taylor expansion, not from the circulation
    oracle used by ``product_term_nk``.
    """
    space = space or phase_space(B.dim)
    Lj = _flux_terms(B, N, "surface") if N >= 1 else {}
    L0p = L0(space.d)
    gens = sorted(set().union(L0p.free_symbols, *(sp.sympify(v).free_symbols for v in Lj.values())),
                  key=str)
    # truncated power series in eps with polynomial coefficients
    one = {0: sp.Poly(1, *gens, domain="QQ_I")}
    series = {j: sp.Poly(sp.I * Lj[j], *gens, domain="QQ_I") for j in range(1, N + 1) if Lj[j] != 0}
    twist0 = {k0: sp.Poly((sp.I * L0p) ** k0 / factorial(k0), *gens, domain="QQ_I")
              for k0 in range(N + 1)}
    report = EquivalenceReport(N, True)
    power = one
    for k in range(N + 1):
        if k:
            power = _series_mul(power, series, N)
        full = _series_mul(twist0, power, N)
        for n in range(k, N + 1):
            Pnk = full[n].as_expr() / factorial(k) if n in full else 0
            other = normalize(apply_bidifferential(Pnk, f, g, space))
            mine = product_term_nk(f, g, B, n, k, space).value
            diff = normalize(mine - other)
            report.checked += 1
            if not _is_zero(diff):
                report.passed = False
                report.mismatches.append((n, k, diff))
    return report


def _series_mul(a: Mapping, b: Mapping, N: int) -> dict:
    out: dict = {}
    for i, p in a.items():
        for j, q in b.items():
            if i + j <= N:
                out[i + j] = out[i + j] + p * q if i + j in out else p * q
    return out


def _is_zero(v) -> bool:
    if isinstance(v, sp.MatrixBase):
        return all(x == 0 for x in v)
    return v == 0


# ---------------------------------------------------------------------------
# minimal substitution


def minsub_transform(f, A: VectorPotential, lam, space: PhaseSpace | None = None):
    """f o theta, theta(x, xi) = (x, xi - lam A(x))."""
    space = space or phase_space(A.dim)
    if lam == 0:
        return f
    sub = {k: k - lam * a for k, a in zip(space.xi, A.components)}
    if isinstance(f, sp.MatrixBase):
        return f.xreplace(sub)
    return sp.sympify(f).xreplace(sub)


def _minsub_correction(f, A: VectorPotential, lam, n: int, sign: int, space: PhaseSpace):
    if n < 0:
        raise ExpansionError("order must be non-negative")
    if not A.is_polynomial:
        raise NonPolynomialFieldError("minimal-substitution corrections need a polynomial potential")
    if n == 0:
        return f
    d = space.d
    y, _ = aux_symbols(d)
    x = space.x
    # segment average of A over [x + y/2, x - y/2] minus A(x); only even powers of y survive
    avg = segment_average(A, [xv + yv / 2 for xv, yv in zip(x, y)],
                          [xv - yv / 2 for xv, yv in zip(x, y)])
    W = []
    for av, a in zip(avg, A.components):
        w = sp.Poly(sp.expand(av - a), *y)
        W.append(sum((c * sp.prod([yv ** p for yv, p in zip(y, m)])
                      for m, c in w.terms() if sum(m) <= n), sp.Integer(0)))
    shift = {k: k - sign * lam * w for k, w in zip(space.xi, W)}
    at_zero = {yv: 0 for yv in y}
    out = 0
    for a in multiindices(d, n):
        h = partial(f, space, (), a)
        h = h.xreplace(shift)
        spec = []
        for yv, p in zip(y, a):
            if p:
                spec.extend([yv, p])
        out = out + sp.I ** n / _mfact(a) * sp.diff(h, *spec).xreplace(at_zero)
    return normalize(out)


def minsub_correction_g(f, A: VectorPotential, lam, n: int, space: PhaseSpace | None = None):
    """g_n with Op^A(f) = Op(sum_n eps^n g_n o theta); independent of eps."""
    return _minsub_correction(f, A, lam, n, +1, space or phase_space(A.dim))


def minsub_correction_f(g, A: VectorPotential, lam, n: int, space: PhaseSpace | None = None):
    """f_n with Op(g o theta) = Op^A(sum_n eps^n f_n)."""
    return _minsub_correction(g, A, lam, n, -1, space or phase_space(A.dim))


def minsub_roundtrip(h, A: VectorPotential, lam, order: int,
                     space: PhaseSpace | None = None) -> dict:
    """Residuals of undoing the g-correction with the f-correction.

    Returns {p: sum_{m+n=p} f_m[g_n[h]]} for 1 <= p <= order; each entry
    vanishes identically when the two expansions are mutually inverse.
    """
    space = space or phase_space(A.dim)
    g = [minsub_correction_g(h, A, lam, n, space) for n in range(order + 1)]
    out = {}
    for p in range(1, order + 1):
        acc = sp.Integer(0)
        for n in range(p + 1):
            if g[n] != 0:
                acc += minsub_correction_f(g[n], A, lam, p - n, space)
        out[p] = normalize(acc)
    return out
