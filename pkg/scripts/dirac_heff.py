#!/usr/bin/env python3
"""Effective electronic Hamiltonian of the semirelativistic Dirac operator.

Prints h_eff through 1/c^3, checks it against the closed spin-orbit plus
Zeeman form, and spot-checks the difference numerically.
"""
import argparse
import time

import numpy as np
import sympy as sp

from magweyl.dirac import Dirac
from magweyl.symcore import evaluate


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args(argv)

    t0 = time.perf_counter()
    D = Dirac()
    for name, ok in D.identities().items():
        print(f"{name:24s} {ok}")
    terms = [D.heff_term(n) for n in range(4)]
    for t in terms[:3]:
        print(f"h_eff[{t.n}] =", t.value[0, 0], "* Id" if t.value.is_diagonal() else t.value)
    closed = D.heff_closed_form()
    print("h_eff[3] - closed form =", sp.simplify(terms[3].value - closed))
    print("hermitian:", all(t.hermitian for t in terms))

    # quadratic V, constant B, m = 1
    rng = np.random.default_rng(a.seed)
    space = D.space
    x, xi = space.x, space.xi
    Vq = sum(float(c) * v * w for c, (v, w) in zip(rng.normal(size=6),
             [(x[0], x[0]), (x[1], x[1]), (x[2], x[2]), (x[0], x[1]), (x[1], x[2]), (x[0], x[2])]))
    Bc = [float(b) for b in rng.normal(size=3)]
    subs = {D.params.m: 1, D.params.V: Vq}
    subs.update(dict(zip(D.params.B, Bc)))
    worst = 0.0
    for _ in range(a.points):
        pt = dict(zip(list(x) + list(xi), rng.normal(size=6)))
        mine = np.array([[complex(evaluate(terms[3].value[i, j].subs(subs).doit(), pt))
                          for j in range(2)] for i in range(2)])
        ref = np.array([[complex(evaluate(closed[i, j].subs(subs).doit(), pt))
                         for j in range(2)] for i in range(2)])
        worst = max(worst, np.abs(mine - ref).max() / max(np.abs(ref).max(), 1e-300))
    print(f"max relative deviation over {a.points} points: {worst:.2e}")
    print(f"{time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
