"""Sweep the ferromagnetic Ising coupling on a small grid and locate where condition 3 stops certifying."""

import argparse

import numpy as np

from gibbscomp import comparison as cmp
from gibbscomp.core import StateSpace
from gibbscomp.oracle import grid_edges, ising_model, normalize


def sweep(rows: int, cols: int, betas, condition: int = 3):
    n = rows * cols
    space = StateSpace((2,) * n)
    edges = grid_edges(rows, cols)
    out = []
    for beta in betas:
        rho = normalize(ising_model(space, {e: beta for e in edges}))
        rule = cmp.build_rule(rho, rho, cmp.singleton_cover(n))
        cert = cmp.certify(rule, condition)
        R = cmp.build_R(rule)
        out.append((float(beta), float(R.sum(axis=1).max()), cert.passed))
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--rows", type=int, default=3)
    p.add_argument("--cols", type=int, default=3)
    p.add_argument("--condition", type=int, default=3, choices=range(1, 7))
    a = p.parse_args()
    rows = sweep(a.rows, a.cols, np.round(np.arange(0.10, 1.0001, 0.01), 2), a.condition)
    print("beta   max row sum of R   certified")
    for beta, rs, ok in rows:
        print(f"{beta:.2f}   {rs:16.6f}   {ok}")
    fails = [b for b, _, ok in rows if not ok]
    if fails:
        print(f"first uncertified beta on the grid: {fails[0]:.2f}")
    if (a.rows, a.cols) == (3, 3):
        print(f"closed-form row-sum threshold at the centre site: {0.5 * np.arctanh(0.5):.4f}")


if __name__ == "__main__":
    main()
