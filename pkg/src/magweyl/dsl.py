"""A small declaration language for symbols, fields and grid presets.

    # comments run to the end of the line
    dim 2;
    param b = 1/2;          # value optional; 'positive' marks a mass-like parameter
    param m positive;
    func V;                 # opaque real function of x
    field B[1,2] = b + x1;  # upper-triangular components, 1-based
    potential A[1] = -x2/2; # optional; the transversal gauge is used otherwise
    symbol f = exp(-x1^2 - xi1^2) * (1 + xi2);
    grid points = 32, extent = 6, eps = 1/2, lambda = 3/10;
    tol roundtrip = 1e-8;

Decimal literals are read as exact rationals.  Inside expressions, declared
functions are written bare (``V``) and stand for V(x1, .., xd).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

import sympy as sp
from sympy.core.function import AppliedUndef
from sympy.printing.str import StrPrinter

from .magnetics import MagneticField, VectorPotential
from .symcore import Energy, SpinorNorm, phase_space

__all__ = ["DslError", "DslDocument", "parse_dsl", "print_dsl", "print_expr", "parse_expr"]


class DslError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0, expected=()):
        self.line, self.col, self.expected = line, col, tuple(expected)
        where = f"{line}:{col}: " if line else ""
        tail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{where}{message}{tail}")


# ---------------------------------------------------------------------------
# lexer

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+) | (?P<nl>\n) | (?P<comment>\#[^\n]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),;=\[\]])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list:
    out, line, start, pos = [], 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise DslError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line, start = line + 1, m.end()
        elif kind not in ("ws", "comment"):
            out.append(Token(kind, m.group(), line, m.start() - start + 1))
        pos = m.end()
    out.append(Token("eof", "", line, pos - start + 1))
    return out


# ---------------------------------------------------------------------------
# document


@dataclass
class DslDocument:
    dim: int = 2
    params: dict = field(default_factory=dict)     # name -> (Symbol, value or None)
    funcs: list = field(default_factory=list)      # names of opaque functions of x
    fields: dict = field(default_factory=dict)     # (l, j) 0-based, l < j -> Expr
    potentials: dict = field(default_factory=dict)  # i 0-based -> Expr
    symbols: dict = field(default_factory=dict)    # name -> Expr
    grid: dict = field(default_factory=dict)       # key -> Rational or int
    tols: dict = field(default_factory=dict)       # key -> Rational

    @property
    def space(self):
        return phase_space(self.dim)

    def magnetic_field(self) -> MagneticField:
        return MagneticField.from_components(self.dim, dict(self.fields))

    def vector_potential(self) -> VectorPotential | None:
        if not self.potentials:
            return None
        comps = tuple(self.potentials.get(i, sp.Integer(0)) for i in range(self.dim))
        return VectorPotential(self.dim, comps)

    def param_values(self) -> dict:
        return {s: v for s, v in self.params.values() if v is not None}

    def symbol(self, name: str, substitute: bool = False):
        if name not in self.symbols:
            raise DslError(f"undeclared symbol {name!r}")
        e = self.symbols[name]
        return e.subs(self.param_values()) if substitute else e

    def function_atom(self, name: str):
        return sp.Function(name, real=True)(*self.space.x)

    def __eq__(self, other):
        if not isinstance(other, DslDocument):
            return NotImplemented
        return (self.dim == other.dim and self.params == other.params
                and self.funcs == other.funcs and self.grid == other.grid
                and self.tols == other.tols and _same(self.fields, other.fields)
                and _same(self.potentials, other.potentials)
                and _same(self.symbols, other.symbols)
                and list(self.symbols) == list(other.symbols))


def _same(a: dict, b: dict) -> bool:
    return a.keys() == b.keys() and all(sp.expand(a[k] - b[k]) == 0 for k in a)


# ---------------------------------------------------------------------------
# parser


_CALLS = {
    "exp": sp.exp, "sin": sp.sin, "cos": sp.cos, "tan": sp.tan, "log": sp.log,
    "sqrt": sp.sqrt, "sinh": sp.sinh, "cosh": sp.cosh, "tanh": sp.tanh, "atan": sp.atan,
}
_CONSTANTS = {"I": sp.I, "pi": sp.pi, "E_": sp.E}


class _Parser:
    def __init__(self, text: str, doc: DslDocument | None = None):
        self.toks = _tokenize(text)
        self.i = 0
        self.doc = doc or DslDocument()
        self.dim_declared = doc is not None

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg, expected=(), tok=None):
        t = tok or self.tok
        return DslError(msg, t.line, t.col, expected)

    def accept(self, text):
        if self.tok.text == text and self.tok.kind in ("op", "name"):
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            raise self.error(f"unexpected {self.tok.text or 'end of input'!r}", [repr(text)])

    def name(self) -> Token:
        t = self.tok
        if t.kind != "name":
            raise self.error(f"unexpected {t.text or 'end of input'!r}", ["identifier"])
        self.i += 1
        return t

    def integer(self) -> int:
        t = self.tok
        if t.kind != "num" or not t.text.isdigit():
            raise self.error(f"unexpected {t.text!r}", ["integer"])
        self.i += 1
        return int(t.text)

    # -- statements
    def document(self) -> DslDocument:
        while self.tok.kind != "eof":
            self.statement()
        return self.doc

    def statement(self):
        t = self.tok
        kw = t.text if t.kind == "name" else None
        handlers = {"dim": self.st_dim, "param": self.st_param, "func": self.st_func,
                    "field": self.st_field, "potential": self.st_potential,
                    "symbol": self.st_symbol, "grid": self.st_grid, "tol": self.st_tol}
        if kw not in handlers:
            raise self.error(f"unexpected {t.text or 'end of input'!r}", sorted(handlers))
        self.i += 1
        handlers[kw]()
        self.expect(";")

    def st_dim(self):
        t = self.tok
        d = self.integer()
        if d < 1:
            raise self.error("dimension must be positive", tok=t)
        if self.dim_declared and d != self.doc.dim:
            raise self.error(f"dimension mismatch: {d} vs {self.doc.dim}", tok=t)
        if self.doc.fields or self.doc.symbols or self.doc.potentials:
            raise self.error("dim must precede declarations that use x or xi", tok=t)
        self.doc.dim, self.dim_declared = d, True

    def _fresh(self, t: Token):
        name = t.text
        if name in self.doc.params or name in self.doc.funcs or name in self.doc.symbols:
            raise self.error(f"{name!r} is already declared", tok=t)
        if name in _CALLS or name in _CONSTANTS or _phase_var(name) or name in (
                "diff", "energy", "spinornorm"):
            raise self.error(f"{name!r} is reserved", tok=t)

    def st_param(self):
        t = self.name()
        self._fresh(t)
        positive = self.accept("positive")
        value = None
        if self.accept("="):
            value = self.expr()
            if value.free_symbols:
                raise self.error("parameter values must be constants", tok=t)
        sym = sp.Symbol(t.text, positive=True) if positive else sp.Symbol(t.text, real=True)
        self.doc.params[t.text] = (sym, value)

    def st_func(self):
        t = self.name()
        self._fresh(t)
        self.doc.funcs.append(t.text)

    def _index_pair(self):
        self.expect("[")
        a = self.integer()
        b = None
        if self.accept(","):
            b = self.integer()
        self.expect("]")
        return a, b

    def st_field(self):
        t = self.name()
        l, j = self._index_pair()
        if j is None:
            raise self.error("field components need two indices", ["','"], tok=t)
        if l == j:
            raise self.error("diagonal components of an antisymmetric field are not allowed", tok=t)
        if l > j:
            raise self.error("give field components with the first index smaller", tok=t)
        if j > self.doc.dim:
            raise self.error(f"dimension mismatch: index {j} exceeds dim {self.doc.dim}", tok=t)
        self.expect("=")
        e = self.expr()
        if e.free_symbols & set(self.doc.space.xi):
            raise self.error("field components may not depend on momenta", tok=t)
        self.doc.fields[(l - 1, j - 1)] = e

    def st_potential(self):
        t = self.name()
        i, extra = self._index_pair()
        if extra is not None:
            raise self.error("potential components take one index", ["']'"], tok=t)
        if i > self.doc.dim or i < 1:
            raise self.error(f"dimension mismatch: index {i} exceeds dim {self.doc.dim}", tok=t)
        self.expect("=")
        self.doc.potentials[i - 1] = self.expr()

    def st_symbol(self):
        t = self.name()
        self._fresh(t)
        self.expect("=")
        self.doc.symbols[t.text] = self.expr()

    def _constant(self):
        t = self.tok
        e = self.expr()
        if e.free_symbols or not e.is_number:
            raise self.error("expected a constant", tok=t)
        return e

    def st_grid(self):
        while True:
            t = self.name()
            self.expect("=")
            v = self._constant()
            self.doc.grid[t.text] = v
            if not self.accept(","):
                break

    def st_tol(self):
        t = self.name()
        self.expect("=")
        self.doc.tols[t.text] = self._constant()

    # -- expressions (precedence climbing)
    def expr(self):
        e = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            r = self.term()
            e = e + r if op == "+" else e - r
        return e

    def term(self):
        e = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            r = self.unary()
            e = e * r if op == "*" else e / r
        return e

    def unary(self):
        if self.accept("-"):
            return -self.unary()
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.accept("^"):
            return base ** self.unary()  # right associative
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return sp.Rational(Fraction(t.text))
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if t.kind != "name":
            raise self.error(f"unexpected {t.text or 'end of input'!r}",
                             ["number", "identifier", "'('"])
        self.i += 1
        name = t.text
        if self.tok.text == "(" and self.tok.kind == "op":
            return self.call(t)
        pv = _phase_var(name)
        if pv:
            kind, k = pv
            if k > self.doc.dim:
                raise self.error(f"dimension mismatch: {name} in dimension {self.doc.dim}", tok=t)
            sp_ = self.doc.space
            return (sp_.x if kind == "x" else sp_.xi)[k - 1]
        if name in self.doc.params:
            return self.doc.params[name][0]
        if name in self.doc.funcs:
            return self.doc.function_atom(name)
        if name in self.doc.symbols:
            return self.doc.symbols[name]
        if name in _CONSTANTS:
            return _CONSTANTS[name]
        raise self.error(f"undeclared identifier {name!r}", tok=t)

    def call(self, t: Token):
        self.expect("(")
        args = [self.expr()]
        while self.accept(","):
            args.append(self.expr())
        self.expect(")")
        name = t.text
        if name in _CALLS:
            if len(args) != 1:
                raise self.error(f"{name} takes one argument", tok=t)
            return _CALLS[name](args[0])
        if name == "diff":
            if len(args) not in (2, 3):
                raise self.error("diff takes (expr, variable[, order])", tok=t)
            var = args[1]
            if not (isinstance(var, sp.Symbol) and _phase_var(var.name)):
                raise self.error("diff variables must be phase-space variables", tok=t)
            order = int(args[2]) if len(args) == 3 else 1
            return sp.diff(args[0], var, order)
        if name in ("energy", "spinornorm"):
            if len(args) != 1:
                raise self.error(f"{name} takes the mass as its only argument", tok=t)
            cls = Energy if name == "energy" else SpinorNorm
            return cls(args[0], *self.doc.space.xi)
        raise self.error(f"unknown function {name!r}", sorted(list(_CALLS) + [
            "diff", "energy", "spinornorm"]), tok=t)


def _phase_var(name: str):
    m = re.fullmatch(r"(x|xi)([1-9][0-9]*)", name)
    return (m.group(1), int(m.group(2))) if m else None


def parse_dsl(text: str) -> DslDocument:
    return _Parser(text).document()


def parse_expr(text: str, doc: DslDocument):
    p = _Parser(text, doc)
    e = p.expr()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r}", ["end of input"])
    return e


# ---------------------------------------------------------------------------
# printer


class _DslPrinter(StrPrinter):
    def _print_ImaginaryUnit(self, expr):
        return "I"

    def _print_Exp1(self, expr):
        return "E_"

    def _print_Energy(self, expr):
        return f"energy({self._print(expr.args[0])})"

    def _print_SpinorNorm(self, expr):
        return f"spinornorm({self._print(expr.args[0])})"

    def _print_Function(self, expr):
        if isinstance(expr, AppliedUndef):
            return expr.func.__name__
        return super()._print_Function(expr)

    def _print_Derivative(self, expr):
        inner = self._print(expr.expr)
        for v, k in expr.variable_count:
            inner = f"diff({inner}, {self._print(v)}" + (f", {k})" if k != 1 else ")")
        return inner

    def _print_Float(self, expr):
        return str(sp.Rational(str(expr)))


_printer = _DslPrinter({"order": "lex"})


def print_expr(e) -> str:
    return _printer.doprint(sp.sympify(e)).replace("**", "^")


def print_dsl(doc: DslDocument) -> str:
    lines = [f"dim {doc.dim};"]
    for name, (sym, value) in doc.params.items():
        head = f"param {name}" + (" positive" if sym.is_positive else "")
        lines.append(head + (f" = {print_expr(value)};" if value is not None else ";"))
    for name in doc.funcs:
        lines.append(f"func {name};")
    for (l, j), e in sorted(doc.fields.items()):
        lines.append(f"field B[{l + 1},{j + 1}] = {print_expr(e)};")
    for i, e in sorted(doc.potentials.items()):
        lines.append(f"potential A[{i + 1}] = {print_expr(e)};")
    for name, e in doc.symbols.items():
        lines.append(f"symbol {name} = {print_expr(e)};")
    if doc.grid:
        lines.append("grid " + ", ".join(f"{k} = {print_expr(v)}" for k, v in doc.grid.items()) + ";")
    for k, v in doc.tols.items():
        lines.append(f"tol {k} = {print_expr(v)};")
    return "\n".join(lines) + "\n"
