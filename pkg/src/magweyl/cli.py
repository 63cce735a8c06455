"""Command-line entry point: ``magweyl <command> [options]``.

Every command prints one JSON report on stdout; diagnostics go to stderr.
The exit status is 1 when any check in the report failed, 2 on usage or
input errors, 0 otherwise.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import random
import sys
import time
from contextlib import contextmanager
from importlib.metadata import PackageNotFoundError, version

import numpy as np
import sympy as sp

from . import dirac as dirac_mod
from . import expansion as ex
from . import magnetics as mg
from . import numerics as nm
from .dsl import DslDocument, DslError, parse_dsl, parse_expr, print_expr
from .symcore import SymcoreError, normalize, phase_space, poisson_bracket, to_numpy

log = logging.getLogger("magweyl")

SUITES = ("flux", "oracle", "gauge", "equivalence", "minsub", "dirac")


def _tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:  # running from a source tree
        return "0+unknown"


class Report:
    def __init__(self, command: str, digest: str):
        self.command = command
        self.digest = digest
        self.checks: list = []
        self.results: dict = {}
        self.timings: dict = {}

    def check(self, name: str, passed: bool, value=None, tolerance=None, detail=None):
        entry = {"name": name, "status": "PASS" if passed else "FAIL"}
        if value is not None:
            entry["value"] = _jsonable(value)
        if tolerance is not None:
            entry["tolerance"] = _jsonable(tolerance)
        if detail is not None:
            entry["detail"] = _jsonable(detail)
        self.checks.append(entry)
        return passed

    @contextmanager
    def timed(self, label: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[label] = round(time.perf_counter() - t0, 4)

    @property
    def failed(self) -> bool:
        return any(c["status"] == "FAIL" for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "tool_version": _tool_version(),
            "inputs_digest": self.digest,
            "status": "FAIL" if self.failed else "PASS",
            "checks": self.checks,
            "results": self.results,
            "timings": self.timings,
        }


def _jsonable(v):
    if isinstance(v, (bool, int, str)) or v is None:
        return v
    if isinstance(v, float):
        return v if np.isfinite(v) else str(v)
    if isinstance(v, (np.floating, np.integer)):
        return _jsonable(v.item())
    if isinstance(v, complex):
        return {"re": v.real, "im": v.imag}
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, sp.MatrixBase):
        return [[print_expr(x) for x in v.row(i)] for i in range(v.rows)]
    if isinstance(v, sp.Basic):
        return print_expr(v)
    return str(v)


def _render(d: dict) -> str:
    lines = [f"{d['command']}: {d['status']}"]
    for c in d["checks"]:
        extra = ""
        if "value" in c:
            extra += f"  value={c['value']}"
        if "tolerance" in c:
            extra += f"  tol={c['tolerance']}"
        lines.append(f"  [{c['status']}] {c['name']}{extra}")
    for k, v in d["results"].items():
        if isinstance(v, dict):
            lines.append(f"  {k}:")
            for kk, vv in v.items():
                lines.append(f"    {kk}: {vv}")
        else:
            lines.append(f"  {k}: {v}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# helpers


def _load_doc(path: str | None) -> tuple[DslDocument, str]:
    if path is None:
        return DslDocument(dim=2), ""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_dsl(text), text


def _digest(text: str, args: argparse.Namespace) -> str:
    keep = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "pretty")}
    h = hashlib.sha256(text.encode())
    h.update(json.dumps(keep, sort_keys=True, default=str).encode())
    return h.hexdigest()[:16]


def _config(args, doc: DslDocument | None = None) -> nm.OracleConfig:
    """Config file first, then grid/tol statements of the document on top."""
    cfg = nm.load_config(args.config) if args.config else nm.OracleConfig()
    if doc is not None:
        nm.update_config(cfg, doc.grid.items())
        nm.update_config(cfg, ((k if k.startswith("tol_") else "tol_" + k, v)
                               for k, v in doc.tols.items()))
    return cfg


def _resolve_symbol(doc: DslDocument, ref: str):
    if ref in doc.symbols:
        return doc.symbol(ref, substitute=True)
    return parse_expr(ref, doc).subs(doc.param_values())


def _field(doc: DslDocument) -> mg.MagneticField:
    if not doc.fields:
        return ex.zero_field(doc.dim)
    B = doc.magnetic_field()
    return B.subs(doc.param_values()) if doc.param_values() else B


def _numeric_field(doc: DslDocument) -> mg.MagneticField:
    B = _field(doc)
    free = set().union(*(sp.sympify(e).free_symbols for *_, e in B.upper)) - set(B.space.x)
    if free:
        names = ", ".join(sorted(str(s) for s in free))
        raise DslError(f"parameter(s) {names} need a value for numeric evaluation")
    return B


def _random_poly(rng: random.Random, vars_, degree: int, terms: int = 4):
    out = sp.Integer(0)
    for _ in range(terms):
        mon = sp.Integer(rng.choice([-3, -2, -1, 1, 2, 3]))
        for _ in range(rng.randint(0, degree)):
            mon *= rng.choice(vars_)
        out += mon
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_expand(args, doc: DslDocument, rep: Report) -> None:
    f = _resolve_symbol(doc, args.f)
    g = _resolve_symbol(doc, args.g)
    B = _field(doc)
    if args.order is not None:
        prec = int(args.order)
    else:
        if args.eps is None or args.lam is None or args.tol is None:
            raise DslError("expand needs --order or all of --eps, --lam, --tol")
        prec = ex.precision_bookkeeping(args.eps, args.lam, args.tol)
        rep.results["precision"] = {"eps": str(prec.eps), "lam": str(prec.lam), "tol": str(prec.tol),
                                    "n_c": prec.n_c, "k_c": prec.k_c, "N": prec.N}
    with rep.timed("expand"):
        series = ex.expand_product(f, g, B, prec, doc.space)
    rep.results["N"] = series.N
    # identically vanishing terms are left out of the listing
    rep.results["terms"] = [{"n": n, "k": k, "value": print_expr(t.value)}
                            for (n, k), t in sorted(series.terms.items()) if t.value != 0]
    rep.check("term count", len(series.terms) == (series.N + 1) * (series.N + 2) // 2,
              value=len(series.terms))
    rep.check("derivative structure", all(t.structure_ok() for t in series.terms.values()))
    if args.eps is not None and args.lam is not None:
        eps, lam = sp.Rational(args.eps), sp.Rational(args.lam)
        rep.results["series"] = print_expr(normalize(series.value(eps, lam)))


def cmd_flux(args, doc: DslDocument, rep: Report) -> None:
    B = _numeric_field(doc)
    corners = [tuple(float(c) for c in p.split(",")) for p in args.corners.split(";")]
    if len(corners) != 3 or any(len(c) != doc.dim for c in corners):
        raise DslError(f"--corners needs three points of dimension {doc.dim}")
    tri = mg.Triangle(*corners)
    if B.is_zero:
        rep.results.update(quadrature=0.0, stokes=0.0, delta=0.0)
        rep.check("flux agreement", True, value=0.0)
        return
    with rep.timed("flux"):
        est = mg.flux_estimate(B, tri, nodes=args.nodes)
    rep.results.update(quadrature=est.quadrature, stokes=est.stokes, delta=est.delta)
    tol = _config(args, doc).tol_flux * max(1.0, abs(est.quadrature)) + 1e-13
    rep.check("flux agreement", est.delta <= tol, value=est.delta, tolerance=tol)


def cmd_dirac_heff(args, doc: DslDocument, rep: Report) -> None:
    D = _dirac_from_doc(doc)
    with rep.timed("heff"):
        terms = {n: D.heff_term(n) for n in range(4)}
    rep.results["heff"] = {str(n): _jsonable(t.value) for n, t in terms.items()}
    closed = D.heff_closed_form()
    rep.results["closed_form_3"] = _jsonable(closed)
    _dirac_checks(D, terms, rep)


def _dirac_from_doc(doc: DslDocument) -> dirac_mod.Dirac:
    kwargs = {}
    if doc.dim != 3 and (doc.fields or doc.funcs):
        raise DslError("the Dirac application lives in dimension 3")
    if "m" in doc.params:
        m = doc.params["m"][0]
        if not m.is_positive:
            raise DslError("declare the mass as 'param m positive;'")
        kwargs["m"] = m
    if "V" in doc.symbols:
        kwargs["V"] = doc.symbols["V"]
    elif "V" in doc.funcs:
        kwargs["V"] = doc.function_atom("V")
    if doc.fields:
        Bm = doc.magnetic_field().matrix()
        kwargs["B"] = (Bm[1, 2], -Bm[0, 2], Bm[0, 1])
    return dirac_mod.Dirac(dirac_mod.SemirelParams(**kwargs))


def _dirac_checks(D, terms, rep: Report) -> None:
    Z2 = sp.zeros(2)
    rep.check("heff_0 = E", terms[0].value == D.E * sp.eye(2))
    rep.check("heff_1 = 0", terms[1].value == Z2)
    rep.check("heff_2 = V", normalize(terms[2].value - D.params.V * sp.eye(2)) == Z2)
    diff = normalize(terms[3].value - D.heff_closed_form())
    rep.check("heff_3 closed form", diff == Z2, value=diff if diff != Z2 else None)
    rep.check("heff_3 residual groups cancel", terms[3].residual == Z2,
              value=terms[3].residual if terms[3].residual != Z2 else None)
    rep.check("heff_30 = 0", terms[3].parts["30"] == Z2)
    rep.check("heff hermitian", all(t.hermitian for t in terms.values()))


def cmd_compare_minsub(args, doc: DslDocument, rep: Report) -> None:
    h = _resolve_symbol(doc, args.h)
    A = doc.vector_potential() or mg.transversal_gauge(_field(doc))
    if doc.param_values():
        A = mg.VectorPotential(A.dim, tuple(sp.sympify(a).subs(doc.param_values())
                                            for a in A.components))
    lam = sp.Rational(args.lam) if args.lam is not None else sp.Symbol("lam", real=True)
    with rep.timed("symbolic"):
        g = [ex.minsub_correction_g(h, A, lam, n, doc.space) for n in range(args.order + 1)]
        f = [ex.minsub_correction_f(h, A, lam, n, doc.space) for n in range(args.order + 1)]
    rep.results["g"] = {str(n): print_expr(v) for n, v in enumerate(g)}
    rep.results["f"] = {str(n): print_expr(v) for n, v in enumerate(f)}
    rep.check("g_0 = h", normalize(g[0] - h) == 0)
    if args.order >= 1:
        rep.check("g_1 = 0", g[1] == 0)
        rep.check("f_1 = 0", f[1] == 0)
    odd = [n for n in range(3, args.order + 1, 2)]
    if odd:
        rep.check("odd orders vanish", all(g[n] == 0 and f[n] == 0 for n in odd))
    if args.numeric:
        _minsub_numeric(args, doc, h, A, rep)


def _minsub_numeric(args, doc, h, A, rep: Report) -> None:
    cfg = _config(args, doc)
    if doc.dim not in (1, 2):
        raise DslError("the grid comparison supports d = 1 and d = 2")
    grid = nm.Grid(doc.dim, cfg.points, cfg.extent)
    lam = float(args.lam) if args.lam is not None else cfg.lam
    epss = [0.4, 0.2, 0.1]
    with rep.timed("numeric"):
        norms = [nm.minsub_kernel_difference(h, A, e, lam, grid) for e in epss]
    rep.results["kernel_differences"] = dict(zip(map(str, epss), norms))
    if max(norms) < 1e-13:
        # B = 0 or a gauge linear in x: both quantizations agree exactly
        rep.check("kernel difference vanishes", True, value=max(norms),
                  detail="no slope to fit; use a gauge that is non-linear in x")
        return
    slope = nm.fit_slope(epss, norms)
    rep.check("kernel difference slope", abs(slope - 2.0) <= cfg.tol_slope, value=slope,
              tolerance=cfg.tol_slope)


def cmd_verify(args, doc: DslDocument, rep: Report) -> None:
    suites = SUITES if args.suite == "all" else (args.suite,)
    cfg = _config(args, doc)
    rng = random.Random(args.seed)
    for s in suites:
        with rep.timed(s):
            _SUITE_RUNNERS[s](doc, cfg, rng, rep)


def _suite_flux(doc, cfg, rng, rep: Report) -> None:
    B = _numeric_field(doc)
    d = doc.dim
    if B.is_zero:
        for n in range(1, 5):
            rep.check(f"L_{n} = 0 for B = 0", mg.flux_taylor_term(B, n).value == 0)
        return
    fields = [B] if B.is_polynomial else []
    if d == 2:
        x = phase_space(2).x
        for _ in range(2):
            fields.append(mg.MagneticField.from_components(2, {(0, 1): _random_poly(rng, list(x), 2)}))
    for i, F in enumerate(fields):
        oracle = mg.flux_taylor_oracle(F, 4)
        ok = all(sp.expand(mg.flux_taylor_term(F, n).value - oracle[n - 1].value) == 0
                 for n in range(1, 5))
        rep.check(f"closed form = oracle, field {i}", ok)
    # truncation slope of the scaled flux
    pts = np.random.default_rng(rng.randrange(2 ** 32)).normal(size=(3, d)) * 0.5
    x0, y, z = pts
    Nt = 1
    terms = mg.flux_taylor_oracle(B, Nt) if B.is_polynomial else mg.flux_taylor_surface(B, Nt)
    ay, az = mg.aux_symbols(d)
    fns = [to_numpy(t.value, list(B.space.x) + list(ay) + list(az)) for t in terms]
    epss = [0.4, 0.2, 0.1, 0.05]
    errs = []
    for e in epss:
        gam = mg.scaled_flux(B, x0, y, z, e)
        ser = sum(e ** (n + 1) * float(np.real(fn(*x0, *y, *z))) for n, fn in enumerate(fns))
        errs.append(abs(gam + ser))
    if min(errs) > 1e-14:
        slope = nm.fit_slope(epss, errs)
        rep.check(f"scaled flux truncation slope (N={Nt})", abs(slope - (Nt + 1)) <= cfg.tol_slope,
                  value=slope, tolerance=cfg.tol_slope)
    else:
        rep.check(f"scaled flux truncation exact (N={Nt})", True, value=max(errs))


def _oracle_setup(doc, cfg):
    d = cfg.dim
    B = _numeric_field(doc) if doc.fields and doc.dim == d else mg.MagneticField.from_components(
        d, {(0, 1): sp.Integer(1)} if d == 2 else {})
    A = mg.transversal_gauge(B) if not B.is_zero else None
    return nm.Grid(d, cfg.points, cfg.extent), B, A


def _gaussian(space, shift=0, width=sp.Rational(1, 4)):
    return sp.exp(-sum((xv - shift) ** 2 for xv in space.x) - width * sum(k ** 2 for k in space.xi))


def _suite_oracle(doc, cfg, rng, rep: Report) -> None:
    grid, B, A = _oracle_setup(doc, cfg)
    S = phase_space(grid.dim)
    # narrow in xi so the Wigner Nyquist bin carries nothing at the default 32 points
    f = sp.exp(-sum(v ** 2 for v in S.x) - 2 * sum(k ** 2 for k in S.xi))
    K = nm.quantize(f, A, cfg.eps, cfg.lam, grid, warn=False)
    back = nm.wigner_inverse(K, A, cfg.eps, cfg.lam)
    diff = back - nm.sample_symbol(f, grid, cfg.eps)
    err = diff.max_abs(nm.central_mask(diff))
    rep.check("round trip", err < cfg.tol_roundtrip, value=err, tolerance=cfg.tol_roundtrip)
    g = _gaussian(S, sp.Rational(1, 2)) * (1 + S.xi[0])
    h = _gaussian(S) * S.x[0]
    ops = [nm.quantize(s, A, cfg.eps, cfg.lam, grid, warn=False) for s in (_gaussian(S), g, h)]
    left = nm.wigner_inverse((ops[0] @ ops[1]) @ ops[2], A, cfg.eps, cfg.lam)
    right = nm.wigner_inverse(ops[0] @ (ops[1] @ ops[2]), A, cfg.eps, cfg.lam)
    assoc = (left - right).max_abs()
    rep.check("associativity", assoc < cfg.tol_compose, value=assoc, tolerance=cfg.tol_compose)


def _suite_gauge(doc, cfg, rng, rep: Report) -> None:
    grid, B, A = _oracle_setup(doc, cfg)
    if A is None or grid.dim != 2:
        rep.check("gauge covariance (needs d = 2 and a field)", True, detail="skipped")
        return
    S = phase_space(2)
    f = _gaussian(S) * sum(k ** 2 for k in S.xi)
    r = nm.gauge_covariance_check(f, A, S.x[0] * S.x[1], cfg.eps, cfg.lam, grid)
    rep.check("gauge covariance", r.passed, value=r.difference, tolerance=r.tolerance)


def _suite_equivalence(doc, cfg, rng, rep: Report) -> None:
    B = _field(doc)
    S = doc.space
    for i in range(2):
        f = _random_poly(rng, list(S.variables), 2, 5)
        g = _random_poly(rng, list(S.variables), 2, 5)
        r = ex.equivalence_check(f, g, B, 3, S)
        rep.check(f"eps-first = lambda-first, pair {i}", r.passed, value=r.checked)


def _suite_minsub(doc, cfg, rng, rep: Report) -> None:
    d = doc.dim
    S = doc.space
    B = _field(doc)
    A = doc.vector_potential() or (mg.transversal_gauge(B) if not B.is_zero
                                   else mg.VectorPotential(d, tuple([sp.Integer(0)] * d)))
    lam = sp.Symbol("lam", real=True)
    for i in range(2):
        h = _random_poly(rng, list(S.variables), 3, 4)
        g1 = ex.minsub_correction_g(h, A, lam, 1, S)
        f1 = ex.minsub_correction_f(h, A, lam, 1, S)
        g0 = ex.minsub_correction_g(h, A, lam, 0, S)
        rep.check(f"g_0 = h, g_1 = f_1 = 0, symbol {i}", g0 == h and g1 == 0 and f1 == 0)
        rt = ex.minsub_roundtrip(h, A, lam, 2, S)
        rep.check(f"correction round trip through eps^2, symbol {i}",
                  all(v == 0 for v in rt.values()))


def _suite_dirac(doc, cfg, rng, rep: Report) -> None:
    D = _dirac_from_doc(doc) if doc.dim == 3 else dirac_mod.Dirac()
    ids = D.identities()
    for name, ok in ids.items():
        rep.check(name, ok)
    terms = {n: D.heff_term(n) for n in range(4)}
    _dirac_checks(D, terms, rep)
    comm = D.commutator_orders()
    rep.check("[H_D, pi_0] vanishes through 1/c^2",
              all(v == sp.zeros(4) for v in comm.values()))
    rep.results["dirac_heff"] = {str(n): _jsonable(t.value) for n, t in terms.items()}


_SUITE_RUNNERS = {
    "flux": _suite_flux, "oracle": _suite_oracle, "gauge": _suite_gauge,
    "equivalence": _suite_equivalence, "minsub": _suite_minsub, "dirac": _suite_dirac,
}


def cmd_selftest(args, doc: DslDocument, rep: Report) -> None:
    dirac_mod.DiracAlgebra()  # raises on a broken Clifford table
    rep.check("Clifford relations", True)
    p = ex.precision_bookkeeping("0.1", "0.3", "0.01")
    rep.check("precision bookkeeping (0.1, 0.3, 0.01) -> N = 3", p.N == 3, value=p.N)
    S = phase_space(2)
    B = mg.MagneticField.from_components(2, {(0, 1): sp.Symbol("b", real=True)})
    L1 = mg.flux_taylor_term(B, 1).value
    y, z = mg.aux_symbols(2)
    b = sp.Symbol("b", real=True)
    rep.check("L_1 = -B y z / 2 for constant B",
              sp.expand(L1 + b / 2 * (y[0] * z[1] - y[1] * z[0])) == 0)
    f = sp.Function("f", real=True)(*S.variables)
    g = sp.Function("g", real=True)(*S.variables)
    t10 = ex.product_term_nk(f, g, ex.zero_field(2), 1, 0, S).value
    rep.check("(1,0) term = -(i/2){f, g}",
              normalize(t10 + sp.I / 2 * poisson_bracket(f, g, S)) == 0)
    grid = nm.Grid(1, 64, 8.0)
    S1 = phase_space(1)
    q = sp.exp(-S1.x[0] ** 2 - S1.xi[0] ** 2)
    back = nm.wigner_inverse(nm.quantize(q, None, 0.5, 0.0, grid, warn=False), None, 0.5, 0.0)
    diff = back - nm.sample_symbol(q, grid, 0.5)
    err = diff.max_abs(nm.central_mask(diff))
    rep.check("1-d round trip", err < 1e-8, value=err, tolerance=1e-8)


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="DSL document")
    common.add_argument("--config", help="grid/tolerance preset file (key = value)")
    common.add_argument("--seed", type=int, default=0, help="seed for random test data")
    common.add_argument("--pretty", action="store_true", help="human-readable output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="magweyl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("expand", parents=[common], help="two-parameter product expansion")
    e.add_argument("--f", required=True, help="symbol name or expression")
    e.add_argument("--g", required=True, help="symbol name or expression")
    e.add_argument("--order", type=int, help="truncation order N")
    e.add_argument("--eps")
    e.add_argument("--lam")
    e.add_argument("--tol")
    e.set_defaults(func=cmd_expand)

    v = sub.add_parser("verify", parents=[common], help="run a check suite")
    v.add_argument("--suite", choices=SUITES + ("all",), default="all")
    v.set_defaults(func=cmd_verify)

    fl = sub.add_parser("flux", parents=[common], help="flux through a triangle")
    fl.add_argument("--corners", required=True, help="'x,y;x,y;x,y'")
    fl.add_argument("--nodes", type=int, default=32)
    fl.set_defaults(func=cmd_flux)

    dh = sub.add_parser("dirac-heff", parents=[common], help="effective Hamiltonian through 1/c^3")
    dh.set_defaults(func=cmd_dirac_heff)

    cm = sub.add_parser("compare-minsub", parents=[common],
                        help="magnetic vs minimally substituted quantization")
    cm.add_argument("--h", required=True, help="symbol name or expression")
    cm.add_argument("--lam")
    cm.add_argument("--order", type=int, default=2)
    cm.add_argument("--numeric", action="store_true", help="also fit the grid kernel difference")
    cm.set_defaults(func=cmd_compare_minsub)

    st = sub.add_parser("selftest", parents=[common], help="quick consistency checks")
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        doc, text = _load_doc(args.input)
        rep = Report(args.command, _digest(text, args))
        with rep.timed("total"):
            args.func(args, doc, rep)
    except (DslError, SymcoreError, mg.MagneticsError, ex.ExpansionError, nm.NumericsError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = rep.to_dict()
    print(_render(out) if args.pretty else json.dumps(out, indent=2, sort_keys=False))
    return 1 if rep.failed else 0


if __name__ == "__main__":
    sys.exit(main())
