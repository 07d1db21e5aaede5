"""Scan eps and report where the contraction constant can be pushed below 1."""

import argparse

import numpy as np

from gibbscomp import blockpf as bp


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--Delta", type=int, default=3)
    p.add_argument("--Delta-K", type=int, default=3)
    a = p.parse_args()
    eps_grid = [0.5, 0.9, 0.99, 0.999, 0.9999, 0.99999, 0.999999, 1.0]
    print("eps        feasible  min c     q    beta      regime")
    for eps in eps_grid:
        f = bp.feasibility_search(eps, a.delta, a.r, a.Delta, a.Delta_K)
        beta = "-" if f.beta is None else f"{f.beta:.2e}"
        print(f"{eps:<10} {str(f.feasible):<9} {f.c:<9.4f} {str(f.q):<4} {beta:<9} {f.regime or '-'}")
    # bisect the smallest feasible eps on a log scale in 1 - eps
    lo, hi = 1e-8, 0.5
    for _ in range(40):
        mid = np.sqrt(lo * hi)
        if bp.feasibility_search(1 - mid, a.delta, a.r, a.Delta).feasible:
            lo = mid
        else:
            hi = mid
    print(f"feasible for 1 - eps <= {lo:.3e} (eps >= {1 - lo:.8f})")


if __name__ == "__main__":
    main()
