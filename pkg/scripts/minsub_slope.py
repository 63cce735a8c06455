#!/usr/bin/env python3
"""Kernel distance between minimal substitution and magnetic quantization.

Constant B = 1 in a non-linear gauge (transversal gauge plus a cubic
gradient); a linear gauge would make the two quantizations coincide.
"""
import argparse

import sympy as sp

from magweyl.expansion import minsub_correction_f, minsub_correction_g
from magweyl.magnetics import MagneticField, add_gradient, transversal_gauge
from magweyl.numerics import Grid, fit_slope, minsub_kernel_difference
from magweyl.symcore import phase_space


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=32)
    ap.add_argument("--extent", type=float, default=6.0)
    ap.add_argument("--lam", type=float, default=0.5)
    ap.add_argument("--eps", default="0.4,0.2,0.1")
    a = ap.parse_args(argv)

    S = phase_space(2)
    x1, x2 = S.x
    k1, k2 = S.xi
    B = MagneticField.from_components(2, {(0, 1): sp.Integer(1)})
    A = add_gradient(transversal_gauge(B), x1**3 / 3 + x1 * x2**2, 1)
    h = (k1**3 + k1 * k2) * sp.exp(-(x1**2 + x2**2) / 16 - (k1**2 + k2**2) / 4)

    lam = sp.Symbol("lam", real=True)
    for n in range(3):
        print(f"g_{n} =", minsub_correction_g(h, A, lam, n, S) if n else "h")
        if n:
            print(f"f_{n} =", minsub_correction_f(h, A, lam, n, S))

    grid = Grid(2, a.points, a.extent)
    epss = [float(v) for v in a.eps.split(",")]
    norms = [minsub_kernel_difference(h, A, e, a.lam, grid) for e in epss]
    for e, v in zip(epss, norms):
        print(f"eps={e}: |Op(h o theta) - Op^A(h)| = {v:.4e}")
    print(f"slope {fit_slope(epss, norms):.3f} (expected 2)")


if __name__ == "__main__":
    main()
