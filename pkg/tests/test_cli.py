import json
import subprocess
import sys
from pathlib import Path

import pytest
import sympy as sp

from magweyl.cli import main
from magweyl.dsl import parse_dsl, parse_expr
from magweyl.symcore import normalize, phase_space, poisson_bracket

CORPUS = Path(__file__).parent / "corpus"


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return rc, (json.loads(out) if out.strip().startswith("{") else out)


@pytest.fixture
def doc_file(tmp_path):
    def make(text, name="doc.mw"):
        p = tmp_path / name
        p.write_text(text)
        return p
    return make


def _terms(report):
    return {(t["n"], t["k"]): t["value"] for t in report["results"]["terms"]}


def test_expand_zero_field_first_order(capsys):
    rc, rep = run(capsys, "expand", "--f", "x1*xi2 + xi1^2", "--g", "x2^2*xi1", "--order", 1)
    assert rc == 0 and rep["status"] == "PASS"
    terms = _terms(rep)
    assert set(terms) == {(0, 0), (1, 0)}
    doc = parse_dsl("dim 2;")
    S = phase_space(2)
    f = parse_expr("x1*xi2 + xi1^2", doc)
    g = parse_expr("x2^2*xi1", doc)
    assert sp.expand(parse_expr(terms[(0, 0)], doc) - f * g) == 0
    expected = -sp.I / 2 * poisson_bracket(f, g, S)
    assert sp.expand(normalize(parse_expr(terms[(1, 0)], doc) - expected)) == 0


def test_expand_precision_triple(capsys, doc_file):
    p = doc_file("dim 2; field B[1,2] = 1; symbol f = xi1^2; symbol g = x1^2;")
    rc, rep = run(capsys, "expand", "--input", p, "--f", "f", "--g", "g",
                  "--eps", "0.1", "--lam", "0.3", "--tol", "0.01")
    assert rc == 0
    assert rep["results"]["N"] == 3
    assert rep["results"]["precision"]["N"] == 3
    count = next(c for c in rep["checks"] if c["name"] == "term count")
    assert count["value"] == 10 and count["status"] == "PASS"
    assert "series" in rep["results"]


def test_expand_units(capsys, doc_file):
    p = doc_file("dim 2; param b = 2; field B[1,2] = b + x1;")
    rc, rep = run(capsys, "expand", "--input", p, "--f", "1", "--g", "1", "--order", 3)
    assert rc == 0
    assert rep["results"]["terms"] == [{"n": 0, "k": 0, "value": "1"}]


def test_expand_needs_order_or_triple(capsys):
    assert main(["expand", "--f", "1", "--g", "1", "--eps", "0.1"]) == 2


def test_flux_unit_triangle(capsys, doc_file):
    p = doc_file("dim 2; param b = 1; field B[1,2] = b;")
    rc, rep = run(capsys, "flux", "--input", p, "--corners", "0,0;1,0;0,1")
    assert rc == 0
    assert rep["results"]["quadrature"] == pytest.approx(0.5, abs=1e-13)
    assert rep["results"]["stokes"] == pytest.approx(0.5, abs=1e-13)


def test_flux_degenerate(capsys, doc_file):
    p = doc_file("dim 2; field B[1,2] = 1 + x1*x2;")
    rc, rep = run(capsys, "flux", "--input", p, "--corners", "0,0;1,1;2,2")
    assert rc == 0
    assert abs(rep["results"]["quadrature"]) < 1e-14


def test_flux_random_triangle_signed_area(capsys, doc_file):
    import random
    rng = random.Random(7)
    p = doc_file("dim 2; field B[1,2] = 3/2;")
    for _ in range(5):
        a, b, c = [(rng.uniform(-2, 2), rng.uniform(-2, 2)) for _ in range(3)]
        area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        corners = ";".join(f"{x!r},{y!r}" for x, y in (a, b, c))
        # leading minus signs need the --opt=value form
        rc, rep = run(capsys, "flux", "--input", p, f"--corners={corners}")
        assert rc == 0
        assert rep["results"]["quadrature"] == pytest.approx(1.5 * area, abs=1e-12)


def test_flux_unset_parameter_is_input_error(capsys, doc_file):
    p = doc_file("dim 2; param b; field B[1,2] = b;")
    assert main(["flux", "--input", str(p), "--corners", "0,0;1,0;0,1"]) == 2
    assert "b" in capsys.readouterr().err


def test_flux_wrong_corner_dimension(capsys):
    assert main(["flux", "--corners", "0,0,0;1,0,0;0,1,0"]) == 2


def test_verify_flux_zero_field(capsys):
    rc, rep = run(capsys, "verify", "--suite", "flux")
    assert rc == 0
    assert rep["checks"] and all(c["status"] == "PASS" for c in rep["checks"])


def test_verify_gauge_constant_field(capsys):
    rc, rep = run(capsys, "verify", "--suite", "gauge", "--input", CORPUS / "gaussians.mw")
    assert rc == 0
    (check,) = rep["checks"]
    assert check["status"] == "PASS" and check["value"] < 1e-8


@pytest.mark.parametrize("suite", ["equivalence", "minsub"])
def test_verify_symbolic_suites(capsys, suite):
    rc, rep = run(capsys, "verify", "--suite", suite, "--input", CORPUS / "linear_field.mw")
    assert rc == 0 and rep["status"] == "PASS"


def test_compare_minsub_slope(capsys):
    rc, rep = run(capsys, "compare-minsub", "--input", CORPUS / "minsub_gauge.mw", "--h", "h",
                  "--lam", "0.5", "--numeric")
    assert rc == 0
    check = next(c for c in rep["checks"] if c["name"] == "kernel difference slope")
    assert abs(check["value"] - 2) < 0.3


def test_compare_minsub_linear_gauge_has_no_slope(capsys):
    rc, rep = run(capsys, "compare-minsub", "--h", "xi1^2*exp(-x1^2-x2^2-xi1^2-xi2^2)",
                  "--lam", "0.5", "--numeric")
    assert rc == 0
    assert any(c["name"] == "kernel difference vanishes" for c in rep["checks"])


def test_failing_check_sets_exit_code(capsys, tmp_path):
    cfg = tmp_path / "strict.ini"
    cfg.write_text("tol_roundtrip = 1e-40\n")
    rc, rep = run(capsys, "verify", "--suite", "oracle", "--config", cfg)
    assert rc == 1 and rep["status"] == "FAIL"
    bad = [c for c in rep["checks"] if c["status"] == "FAIL"]
    assert bad and all("value" in c and "tolerance" in c for c in bad)


def test_document_tolerances_override_config(capsys, tmp_path, doc_file):
    cfg = tmp_path / "loose.ini"
    cfg.write_text("[oracle]\ntol_roundtrip = 1\n")
    p = doc_file("dim 2; field B[1,2] = 1; tol roundtrip = 1e-40;")
    rc, _ = run(capsys, "verify", "--suite", "oracle", "--config", cfg, "--input", p)
    assert rc == 1


def test_parse_error_exit_code(capsys, doc_file):
    p = doc_file("dim 2;\nfield B[1,1] = 1;")
    assert main(["expand", "--input", str(p), "--f", "1", "--g", "1", "--order", 0]) == 2
    assert "2:" in capsys.readouterr().err


def test_missing_input_file(capsys, tmp_path):
    assert main(["verify", "--suite", "flux", "--input", str(tmp_path / "nope.mw")]) == 2


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("tol_everything = 1\n")
    assert main(["verify", "--suite", "flux", "--config", str(cfg)]) == 2


def _strip(text):
    d = json.loads(text)
    d.pop("timings")
    return json.dumps(d, indent=2)


def test_deterministic_reports(capsys):
    argv = ["verify", "--suite", "equivalence", "--seed", "3", "--input",
            str(CORPUS / "linear_field.mw")]
    outs = []
    for _ in range(2):
        main(argv)
        outs.append(_strip(capsys.readouterr().out))
    assert outs[0] == outs[1]
    main(argv[:-3] + ["4"] + argv[-2:])
    assert _strip(capsys.readouterr().out) != outs[0]  # digest covers the seed


def test_report_fields(capsys):
    rc, rep = run(capsys, "selftest")
    assert rc == 0
    assert set(rep) == {"command", "tool_version", "inputs_digest", "status", "checks",
                        "results", "timings"}
    assert len(rep["inputs_digest"]) == 16


def test_pretty_output(capsys):
    rc, out = run(capsys, "verify", "--suite", "minsub", "--pretty")
    assert rc == 0
    assert out.startswith("verify: PASS") and "[PASS]" in out


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "magweyl.cli", "flux", "--corners",
                           "0,0;1,0;0,1"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["status"] == "PASS"
