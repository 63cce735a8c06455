"""Exact phase-space expressions on top of sympy.

Symbols f(x, xi) are plain sympy expressions over the phase-space variables
x1..xd, xi1..xid.  Opaque fields (B_kl, V, chi) are undefined sympy functions
of x; their derivatives stay as ``Derivative`` atoms.  Two special functions
carry the relativistic energy E = sqrt(m^2 + xi^2) and the spinor norm
N = sqrt(2E(E + m)) so that both can be differentiated exactly and reduced
by their defining quadratic relations.

``normalize`` maps an expression to a canonical rational form: numerator and
denominator are polynomials over QQ in a sorted list of atoms, the imaginary
unit and the radicals E, N are reduced to degree one, the denominator is
rationalized and made monic.  Equal normal forms mean equal expressions.
"""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product
from math import factorial as _factorial
from typing import Callable, Iterable, Mapping, Sequence

import sympy as sp
from sympy.core.function import AppliedUndef
from sympy.polys.rings import PolyRing

__all__ = [
    "PhaseSpace", "phase_space", "SymbolMeta", "Multiindex", "multiindices",
    "Energy", "SpinorNorm", "energy", "spinor_norm",
    "field_atom", "normalize", "is_zero", "equal", "Equality",
    "differentiate", "partial", "evaluate", "to_numpy",
    "poisson_bracket", "magnetic_poisson_bracket", "dagger",
    "SymcoreError", "UnknownVariableError", "MissingAssignmentError", "DomainError",
]


class SymcoreError(ValueError):
    pass


class UnknownVariableError(SymcoreError):
    pass


class MissingAssignmentError(SymcoreError):
    pass


class DomainError(SymcoreError, ZeroDivisionError):
    pass


# ---------------------------------------------------------------------------
# phase space and metadata


@dataclass(frozen=True)
class PhaseSpace:
    d: int
    x: tuple
    xi: tuple

    @property
    def variables(self) -> tuple:
        return self.x + self.xi

    def zero_momentum(self) -> dict:
        return {v: 0 for v in self.xi}


@lru_cache(maxsize=None)
def phase_space(d: int) -> PhaseSpace:
    if d < 1:
        raise SymcoreError(f"dimension must be >= 1, got {d}")
    x = tuple(sp.Symbol(f"x{i}", real=True) for i in range(1, d + 1))
    xi = tuple(sp.Symbol(f"xi{i}", real=True) for i in range(1, d + 1))
    return PhaseSpace(d, x, xi)


def _phase_index(v) -> tuple[str, int] | None:
    if not isinstance(v, sp.Symbol) or not v.is_real:
        return None
    name = v.name
    for prefix in ("xi", "x"):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            i = int(name[len(prefix):])
            return (prefix, i) if i >= 1 else None
    return None


def space_of(*exprs) -> PhaseSpace:
    """Smallest phase space containing every phase-space variable used."""
    d = 1
    for e in exprs:
        for s in _free_symbols(e):
            idx = _phase_index(s)
            if idx:
                d = max(d, idx[1])
    return phase_space(d)


def _free_symbols(e) -> set:
    if isinstance(e, sp.MatrixBase):
        out = set()
        for entry in e:
            out |= entry.free_symbols
        return out
    return sp.sympify(e).free_symbols


@dataclass(frozen=True)
class SymbolMeta:
    """Advisory Hoermander class data (order m, type rho, dimension d)."""
    order: float = 0.0
    weight: float = 1.0
    dims: int = 1

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise SymcoreError("rho must lie in [0, 1]")
        if self.dims < 1:
            raise SymcoreError("dimension must be positive")

    def order_after(self, n_xi: int) -> float:
        # each momentum derivative gains rho orders of decay
        return self.order - self.weight * n_xi


@dataclass(frozen=True)
class Multiindex:
    components: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if any((not isinstance(a, int)) or a < 0 for a in self.components):
            raise SymcoreError("multi-index entries must be non-negative integers")

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    @property
    def order(self) -> int:
        return sum(self.components)

    @property
    def factorial(self) -> int:
        out = 1
        for a in self.components:
            out *= _factorial(a)
        return out

    def __add__(self, other: "Multiindex") -> "Multiindex":
        return Multiindex(tuple(a + b for a, b in zip(self.components, other.components)))


def multiindices(d: int, n: int) -> list[tuple]:
    """All a in N^d with |a| = n, in lexicographically decreasing order."""
    if d == 1:
        return [(n,)]
    out = []
    for first in range(n, -1, -1):
        for rest in multiindices(d - 1, n - first):
            out.append((first,) + rest)
    return out


# ---------------------------------------------------------------------------
# E and N


class Energy(sp.Function):
    """E(m, xi) = sqrt(m^2 + |xi|^2); args are (m, xi1, ..., xid)."""

    is_real = True
    is_positive = True
    is_commutative = True

    @classmethod
    def eval(cls, *args):
        if all(a.is_number for a in args):
            return sp.sqrt(sum(a ** 2 for a in args))
        if all(a == 0 for a in args[1:]) and args[0].is_positive:
            return args[0]
        return None

    def fdiff(self, argindex=1):
        return self.args[argindex - 1] / self

    def _eval_conjugate(self):
        return self

    def _eval_rewrite_as_sqrt(self, *args, **kwargs):
        return sp.sqrt(sum(a ** 2 for a in args))

    def _eval_evalf(self, prec):
        return self._eval_rewrite_as_sqrt(*self.args)._eval_evalf(prec)

    def radicand(self):
        return sum(a ** 2 for a in self.args)


class SpinorNorm(sp.Function):
    """N(m, xi) = sqrt(2 E (E + m)), the normalisation of the FW rotation."""

    is_real = True
    is_positive = True
    is_commutative = True

    @classmethod
    def eval(cls, *args):
        if all(a.is_number for a in args):
            E = sp.sqrt(sum(a ** 2 for a in args))
            return sp.sqrt(2 * E * (E + args[0]))
        if all(a == 0 for a in args[1:]) and args[0].is_positive:
            return 2 * args[0]
        return None

    def fdiff(self, argindex=1):
        m = self.args[0]
        E = Energy(*self.args)
        if argindex == 1:
            return (E + m) ** 2 / (E * self)
        return (2 * E + m) * self.args[argindex - 1] / (E * self)

    def _eval_conjugate(self):
        return self

    def _eval_rewrite_as_sqrt(self, *args, **kwargs):
        E = sp.sqrt(sum(a ** 2 for a in args))
        return sp.sqrt(2 * E * (E + args[0]))

    def _eval_evalf(self, prec):
        return self._eval_rewrite_as_sqrt(*self.args)._eval_evalf(prec)

    def radicand(self):
        E = Energy(*self.args)
        return 2 * E * (E + self.args[0])


def energy(m, space: PhaseSpace):
    return Energy(m, *space.xi)


def spinor_norm(m, space: PhaseSpace):
    return SpinorNorm(m, *space.xi)


def field_atom(name: str, space: PhaseSpace):
    """Opaque real function of x, e.g. V(x1, x2, x3)."""
    return sp.Function(name, real=True)(*space.x)


# ---------------------------------------------------------------------------
# normal form


def _generators(e, acc: set):
    if e.is_Rational or e is sp.I:
        return
    if e.is_Add or e.is_Mul:
        for a in e.args:
            _generators(a, acc)
        return
    if e.is_Pow and e.exp.is_Integer:
        _generators(e.base, acc)
        return
    if isinstance(e, sp.Number):
        # floats and other non-rational numbers are kept as atoms
        acc.add(e)
        return
    acc.add(e)


def _reduce_square(p, idx: int, rel, cache: dict):
    """Reduce polynomial p modulo gen[idx]^2 - rel (rel free of gen[idx])."""
    ring = p.ring
    if p.degree(idx) < 2:
        return p
    out = ring.zero
    for monom, coeff in p.terms():
        k = monom[idx]
        base = list(monom)
        base[idx] = k % 2
        term = ring({tuple(base): coeff})
        q = k // 2
        if q:
            if q not in cache:
                cache[q] = rel ** q
            term = term * cache[q]
        out += term
    return out


def _conjugate(p, idx: int):
    ring = p.ring
    return ring({m: (-c if m[idx] % 2 else c) for m, c in p.terms()})


def normalize(e):
    """Canonical rational normal form of an expression or matrix."""
    if isinstance(e, sp.MatrixBase):
        return e.applyfunc(normalize) if not isinstance(e, sp.ImmutableMatrix) \
            else sp.ImmutableMatrix(e.shape[0], e.shape[1], [normalize(v) for v in e])
    e = sp.sympify(e)
    if e.is_Rational:
        return e
    num, den, back = _to_polys(e)
    if num.is_zero:
        return sp.Integer(0)
    out = num.as_expr() / den.as_expr() if den != 1 else num.as_expr()
    return out.xreplace(back)


def _to_polys(e):
    gens: set = set()
    _generators(e, gens)
    # radicals are replaced by fresh symbols carrying a quadratic relation
    radicals = sorted((g for g in gens if isinstance(g, (Energy, SpinorNorm))),
                      key=sp.default_sort_key)
    others = sorted((g for g in gens if not isinstance(g, (Energy, SpinorNorm))),
                    key=sp.default_sort_key)
    # radicands may mention generators not present in e (e.g. xi, m)
    extra: set = set()
    for r in radicals:
        _generators(sp.expand(r.radicand()), extra)
    for g in extra:
        if g not in gens and not isinstance(g, (Energy, SpinorNorm)):
            others.append(g)
        elif isinstance(g, (Energy, SpinorNorm)) and g not in radicals:
            radicals.append(g)
    others = sorted(set(others), key=sp.default_sort_key)
    # order: N radicals first (reduced first), then E, then i, then the rest
    radicals = sorted(set(radicals), key=lambda g: (0 if isinstance(g, SpinorNorm) else 1,
                                                     sp.default_sort_key(g)))
    rad_syms = [sp.Dummy(f"r{i}") for i in range(len(radicals))]
    i_sym = sp.Dummy("i")
    other_syms = [sp.Dummy(f"g{i}") for i in range(len(others))]
    fwd = dict(zip(radicals, rad_syms))
    fwd.update(dict(zip(others, other_syms)))
    fwd[sp.I] = i_sym
    back = {v: k for k, v in fwd.items()}
    ring = PolyRing(rad_syms + [i_sym] + other_syms, sp.QQ, sp.polys.orderings.lex)
    gen_of = {g: ring.gens[ring.symbols.index(s)] for g, s in fwd.items()}
    names = [back[sym] for sym in ring.symbols]

    relations = []
    i_idx = len(rad_syms)

    def reduce_all(p):
        for idx, rel in relations:
            if p.degree(idx) >= 2:
                p = _reduce_square(p, idx, rel, {})
        return p

    def add_factor(dens: dict, f, k: int, scale):
        # store monic factors; the leading coefficient moves to the numerator
        lc = f.LC
        if lc != 1:
            f = f.quo_ground(lc)
            scale = scale * lc ** k
        if f.is_ground:
            return scale
        dens[f] = dens.get(f, 0) + k
        return scale

    def conv(expr):
        """Return (numerator poly, {monic denominator factor: exponent})."""
        if expr.is_Rational:
            return ring(expr), {}
        if expr in gen_of:
            return gen_of[expr], {}
        if expr.is_Add:
            parts = [conv(a) for a in expr.args]
            common: dict = {}
            for _, dd in parts:
                for f, k in dd.items():
                    common[f] = max(common.get(f, 0), k)
            n = ring.zero
            for an, dd in parts:
                for f, k in common.items():
                    missing = k - dd.get(f, 0)
                    if missing:
                        an = an * f ** missing
                n = n + an
            return reduce_all(n), common
        if expr.is_Mul:
            n, dens = ring.one, {}
            for a in expr.args:
                an, ad = conv(a)
                n = reduce_all(n * an)
                for f, k in ad.items():
                    dens[f] = dens.get(f, 0) + k
            return n, dens
        if expr.is_Pow and expr.exp.is_Integer:
            bn, bd = conv(expr.base)
            k = int(expr.exp)
            if k >= 0:
                return reduce_all(bn ** k), {f: e * k for f, e in bd.items()}
            if bn.is_zero:
                raise DomainError(f"division by zero in {expr}")
            k = -k
            n = ring.one
            for f, e in bd.items():
                n = n * f ** (e * k)
            dens: dict = {}
            if len(bn.terms()) <= 4:
                c, facs = _factor_list(bn, names)
            else:
                c, facs = ring.domain.one, [(bn, 1)]
            scale = ring.domain.convert(c) ** k
            for f, e in facs:
                scale = add_factor(dens, f, e * k, scale)
            return reduce_all(n) * (ring.domain.one / scale), dens
        raise SymcoreError(f"cannot normalize subexpression {expr!r}")

    for idx, r in enumerate(radicals):
        rn, rd = conv(sp.expand(r.radicand()))
        assert not rd
        relations.append((idx, rn))
    relations.append((i_idx, ring(-1)))

    num, dens = conv(e)
    num = reduce_all(num)
    # rationalize factor by factor: 1/f = cof / norm with norm radical-free
    norms: dict = {}
    for f, k in dens.items():
        cof, nrm = ring.one, f
        for idx, _rel in relations:
            if nrm.degree(idx) > 0:
                conj = _conjugate(nrm, idx)
                cof, nrm = reduce_all(cof * conj), reduce_all(nrm * conj)
        if nrm.is_zero:
            raise DomainError("denominator vanishes identically")
        if cof != 1:
            num = reduce_all(num * cof ** k)
        c, facs = _factor_list(nrm, names) if not nrm.is_ground else (nrm.LC, [])
        num = num.quo_ground(ring.domain.convert(c) ** k)
        for g, e in facs:
            norms[g] = norms.get(g, 0) + e * k
    den = ring.one
    for g, k in norms.items():
        while k:
            q, r = num.div(g)
            if not r.is_zero:
                break
            num, k = q, k - 1
        if k:
            den = den * g ** k
    lc = den.LC
    if lc != 1:
        num, den = num.quo_ground(lc), den.quo_ground(lc)
    return num, den, back


@lru_cache(maxsize=256)
def _subring(nvars: int, domain):
    return PolyRing([sp.Symbol(f"_t{i}") for i in range(nvars)], domain, sp.polys.orderings.lex)


_FACTOR_CACHE: dict = {}


def _factor_list(p, names: Sequence | None = None):
    """factor_list in the subring of generators p uses, memoized by content.

    ``names`` maps ring generator indices to the expressions they stand for,
    which makes the cache key independent of the per-call dummy symbols.
    """
    ring = p.ring
    used = tuple(i for i in range(ring.ngens) if p.degree(i) > 0)
    sub = _subring(len(used), ring.domain)
    terms = tuple(sorted((tuple(m[i] for i in used), c) for m, c in p.terms()))
    key = (tuple(names[i] for i in used) if names is not None else None, terms)
    hit = _FACTOR_CACHE.get(key) if names is not None else None
    if hit is None:
        c, facs = sub(dict(terms)).factor_list()
        hit = (c, tuple((tuple(f.terms()), k) for f, k in facs))
        if names is not None:
            if len(_FACTOR_CACHE) > 4096:
                _FACTOR_CACHE.clear()
            _FACTOR_CACHE[key] = hit
    c, facs = hit
    out = []
    for fterms, k in facs:
        full_terms = {}
        for m, coeff in fterms:
            full = [0] * ring.ngens
            for i, e in zip(used, m):
                full[i] = e
            full_terms[tuple(full)] = coeff
        out.append((ring(full_terms), k))
    return c, out


def _cancel(num, den, names=None):
    """Remove common factors by trial division with the irreducible factors of den.

    den is radical-free at this point, so its factorization in the full ring
    is the factorization over the non-radical generators; this is much
    cheaper than a multivariate gcd against a large numerator.
    """
    if den.is_ground or num.is_zero:
        return num, den
    c, facs = _factor_list(den, names)
    out = den.ring.one * c
    for f, k in facs:
        while k:
            q, r = num.div(f)
            if not r.is_zero:
                break
            num, k = q, k - 1
        if k:
            out = out * f ** k
    return num, out


def is_zero(e) -> bool:
    if isinstance(e, sp.MatrixBase):
        return all(is_zero(v) for v in e)
    return normalize(e) == 0


class Equality(enum.Enum):
    PROVEN = "proven-equal"
    PROBABLE = "probably-equal"
    DIFFERENT = "not-equal"


def equal(a, b, points: int = 32, seed: int = 0) -> Equality:
    """Exact comparison with a random-point fallback for radical forms."""
    diff = sp.sympify(a) - sp.sympify(b) if not isinstance(a, sp.MatrixBase) else a - b
    try:
        if is_zero(diff):
            return Equality.PROVEN
    except SymcoreError:
        pass
    entries = list(diff) if isinstance(diff, sp.MatrixBase) else [diff]
    rng = random.Random(seed)
    atoms: set = set()
    for v in entries:
        atoms |= v.free_symbols
        atoms |= {f for f in v.atoms(AppliedUndef)}
        atoms |= {f for f in v.atoms(sp.Derivative)}
    atoms = sorted(atoms, key=sp.default_sort_key)
    for _ in range(points):
        subs = {}
        for a in atoms:
            val = sp.Rational(rng.randint(1, 97), rng.randint(1, 31))
            subs[a] = val if rng.random() < 0.5 else -val
            if getattr(a, "is_positive", False):
                subs[a] = abs(subs[a])
        # derivatives first so that xreplace does not touch their bodies
        ordered = sorted(subs.items(), key=lambda kv: -sp.count_ops(kv[0]))
        for v in entries:
            w = v
            for k, val in ordered:
                w = w.xreplace({k: val})
            num = complex(sp.N(w, 40))
            if abs(num) > 1e-25:
                return Equality.DIFFERENT
    return Equality.PROBABLE


# ---------------------------------------------------------------------------
# calculus


def differentiate(e, v, order: int = 1, space: PhaseSpace | None = None):
    """Exact derivative d^order e / dv^order, returned in normal form."""
    if order < 0:
        raise SymcoreError("order must be non-negative")
    if _phase_index(v) is None:
        raise UnknownVariableError(f"{v!r} is not a phase-space variable")
    if space is not None and v not in space.variables:
        raise UnknownVariableError(f"{v!r} is not a variable of the {space.d}-dim phase space")
    if order == 0:
        return normalize(e)
    if isinstance(e, sp.MatrixBase):
        return normalize(e.diff(v, order))
    return normalize(sp.diff(sp.sympify(e), v, order))


def partial(e, space: PhaseSpace, a: Sequence[int] = (), alpha: Sequence[int] = ()):
    """Raw (un-normalized) mixed derivative d_x^a d_xi^alpha e."""
    spec = []
    for v, k in zip(space.x, a):
        if k:
            spec.extend([v, k])
    for v, k in zip(space.xi, alpha):
        if k:
            spec.extend([v, k])
    if not spec:
        return e
    if isinstance(e, sp.MatrixBase):
        # entrywise; Matrix.diff routes through the array-derivative machinery
        return e.applyfunc(lambda v: sp.diff(v, *spec))
    return sp.diff(e, *spec)


def poisson_bracket(f, g, space: PhaseSpace | None = None):
    """{f, g} = sum_l (d_xi_l f d_x_l g - d_x_l f d_xi_l g), operand order kept."""
    space = space or space_of(f, g)
    _check_space(space, f, g)
    out = 0
    for xl, kl in zip(space.x, space.xi):
        out = out + sp.diff(f, kl) * sp.diff(g, xl) - sp.diff(f, xl) * sp.diff(g, kl)
    return normalize(out)


def magnetic_poisson_bracket(f, g, B, lam, space: PhaseSpace | None = None):
    """{f, g}_{lam B} = {f, g} - lam sum_{l,j} B_lj d_xi_l f d_xi_j g."""
    space = space or space_of(f, g)
    _check_space(space, f, g)
    comps = B.matrix() if hasattr(B, "matrix") else B
    out = poisson_bracket(f, g, space)
    for l in range(space.d):
        for j in range(space.d):
            blj = comps[l, j]
            if blj != 0:
                out = out - lam * blj * sp.diff(f, space.xi[l]) * sp.diff(g, space.xi[j])
    return normalize(out)


def _check_space(space: PhaseSpace, *exprs):
    for e in exprs:
        for s in _free_symbols(e):
            idx = _phase_index(s)
            if idx and idx[1] > space.d:
                raise SymcoreError(
                    f"variable {s} does not belong to the {space.d}-dim phase space")


def _real_conjugates(e):
    # derivatives of real functions of real variables are real
    return e.replace(
        lambda t: isinstance(t, sp.conjugate) and isinstance(t.args[0], sp.Derivative)
        and t.args[0].expr.is_real and all(v.is_real for v, _ in t.args[0].variable_count),
        lambda t: t.args[0])


def dagger(M):
    """Conjugate transpose of a matrix symbol (all variables real)."""
    return M.H.applyfunc(_real_conjugates)


# ---------------------------------------------------------------------------
# evaluation


def _as_exact(value):
    if isinstance(value, (sp.Basic,)):
        return value
    if isinstance(value, bool):
        raise SymcoreError("boolean is not a numeric value")
    if isinstance(value, int):
        return sp.Integer(value)
    if isinstance(value, Fraction):
        return sp.Rational(value.numerator, value.denominator)
    if isinstance(value, float):
        return sp.Rational(value)
    if isinstance(value, complex):
        return sp.Rational(value.real) + sp.I * sp.Rational(value.imag)
    return sp.sympify(value)


def _lookup(point: Mapping, sym):
    if sym in point:
        return point[sym]
    if sym.name in point:
        return point[sym.name]
    raise KeyError(sym)


def evaluate(e, point: Mapping, functions: Mapping | None = None) -> complex:
    """Value of e at a numeric point.

    ``point`` maps symbols (or their names) to numbers; a vector of momenta
    may be given under the key ``"xi"`` and positions under ``"x"``.
    ``functions`` maps atom names to sympy expressions in x1..xd; derivative
    atoms of a registered function are evaluated by differentiating it.
    """
    e = sp.sympify(e)
    point = dict(point)
    for key, prefix in (("xi", "xi"), ("x", "x")):
        if key in point and not isinstance(point[key], (int, float, Fraction, sp.Basic)):
            for i, val in enumerate(point.pop(key), start=1):
                point.setdefault(f"{prefix}{i}", val)
    if functions:
        e = _substitute_functions(e, functions)
    leftover = e.atoms(AppliedUndef)
    if leftover:
        raise MissingAssignmentError(f"no evaluator registered for {sorted(map(str, leftover))}")
    subs = {}
    for s in e.free_symbols:
        try:
            subs[s] = _as_exact(_lookup(point, s))
        except KeyError:
            raise MissingAssignmentError(f"no value assigned to {s}") from None
    val = e.xreplace(subs)
    if val.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
        raise DomainError(f"{e} has a pole at the requested point")
    try:
        val = sp.N(val, 30)
        out = complex(val)
    except (TypeError, ZeroDivisionError) as exc:
        raise DomainError(f"cannot evaluate {e} at the requested point: {exc}") from None
    if out != out:
        raise DomainError(f"{e} is undefined at the requested point")
    return out


def _substitute_functions(e, functions: Mapping):
    """Replace opaque atoms V(x) by registered expressions and carry out derivatives."""
    reps = {}
    for atom in e.atoms(AppliedUndef):
        name = atom.func.__name__
        if name in functions:
            body = sp.sympify(functions[name])
            reps[atom] = body
    if not reps:
        return e
    derivs = {}
    for d in e.atoms(sp.Derivative):
        if d.expr in reps:
            derivs[d] = sp.diff(reps[d.expr], *d.variable_count)
    e = e.xreplace(derivs)
    return e.xreplace(reps)


def to_numpy(e, args: Sequence, functions: Mapping | None = None) -> Callable:
    """Compile an expression into a vectorized numpy callable of ``args``."""
    e = sp.sympify(e)
    if functions:
        e = _substitute_functions(e, functions)
    e = e.replace(lambda t: isinstance(t, (Energy, SpinorNorm)),
                  lambda t: t._eval_rewrite_as_sqrt(*t.args))
    fn = sp.lambdify(list(args), e, modules="numpy")
    if not (e.free_symbols - set(args)):
        if not any(s in e.free_symbols for s in args):
            const = complex(e) if not e.is_real else float(e)

            def const_fn(*vals):
                import numpy as np
                shape = np.broadcast(*vals).shape if vals else ()
                return np.full(shape, const, dtype=complex if isinstance(const, complex) else float)
            return const_fn
    return fn
