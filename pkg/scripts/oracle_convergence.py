#!/usr/bin/env python3
"""Truncated two-parameter series against the grid oracle, constant B = 1.

Prints the central-half max error for each (lambda, N, eps) and the fitted
log-log slopes; optional CSV dump of the raw table.
"""
import argparse
import csv
import sys
import time

import numpy as np
import sympy as sp

from magweyl.expansion import product_term_nk
from magweyl.magnetics import MagneticField, transversal_gauge
from magweyl.numerics import (Grid, GridKernel, _base_kernel, _phase_matrix, central_mask,
                              fit_slope, sample_symbol, wigner_inverse)
from magweyl.symcore import phase_space, to_numpy


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=64)
    ap.add_argument("--extent", type=float, default=6.0)
    ap.add_argument("--eps", default="0.4,0.2,0.1")
    ap.add_argument("--lam", default="0.1,0.2")
    ap.add_argument("--order", type=int, default=2)
    ap.add_argument("--csv")
    a = ap.parse_args(argv)
    epss = [float(v) for v in a.eps.split(",")]
    lams = [float(v) for v in a.lam.split(",")]

    S = phase_space(2)
    x1, x2 = S.x
    k1, k2 = S.xi
    B = MagneticField.from_components(2, {(0, 1): sp.Integer(1)})
    A = transversal_gauge(B)
    half = sp.Rational(1, 2)
    f = sp.exp(-x1**2 - x2**2 - (k1**2 + k2**2) / 4)
    g = sp.exp(-(x1 - half)**2 - x2**2 / 2 - ((k1 - half)**2 + k2**2) / 4)
    terms = {(n, k): to_numpy(product_term_nk(f, g, B, n, k, S).value, S.x + S.xi)
             for n in range(a.order + 1) for k in range(n + 1)}

    grid = Grid(2, a.points, a.extent)
    n = grid.size
    rows = []
    for eps in epss:
        t0 = time.perf_counter()
        Kf, Kg = _base_kernel(f, grid, eps), _base_kernel(g, grid, eps)
        Gam = _phase_matrix(A, grid, eps)
        ref = sample_symbol(f, grid, eps)
        X = np.meshgrid(ref.positions, ref.positions, ref.momenta, ref.momenta,
                        indexing="ij", sparse=True)
        for lam in lams:
            ph = np.exp(-1j * lam * Gam)
            prod = GridKernel(grid, (Kf * ph).reshape(n, n)) @ GridKernel(grid, (Kg * ph).reshape(n, n))
            oracle = wigner_inverse(prod, A, eps, lam)
            mask = central_mask(oracle)
            series = 0
            for N in range(a.order + 1):
                series = series + sum(eps**N * lam**k * terms[(N, k)](*X) for k in range(N + 1))
                err = float(np.abs((oracle.values - series)[mask]).max())
                rows.append((lam, N, eps, err))
        print(f"eps={eps}: {time.perf_counter() - t0:.1f}s", file=sys.stderr)

    for lam in lams:
        for N in range(a.order + 1):
            ys = [r[3] for r in rows if r[0] == lam and r[1] == N]
            print(f"lam={lam} N={N} errors={['%.3e' % y for y in ys]} "
                  f"slope={fit_slope(epss, ys):.3f} (expected {N + 1})")
    if a.csv:
        with open(a.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lam", "N", "eps", "error"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
