#!/usr/bin/env python3
"""Galerkin solution of (-Delta)^s u = 1 on (0, 1) against the exact profile.

Prints L2 errors and observed rates under mesh halving; the expected rate is
min(1/2 + s, 1).
"""
import argparse

from fracfps.converge import dirichlet_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--s", type=float, nargs="+", default=[0.1, 0.25, 0.5, 0.75, 0.9])
    ap.add_argument("--levels", type=int, nargs="+", default=[32, 64, 128, 256, 512])
    args = ap.parse_args()
    print(f"{'s':>6} {'1/h':>6} {'error':>12} {'rate':>8}   expected")
    for s in args.s:
        errors, rates = dirichlet_study(s, tuple(args.levels))
        for n, e, r in zip(args.levels, errors, rates):
            rate = "" if r is None else f"{r:.4f}"
            print(f"{s:6.2f} {n:6d} {e:12.4E} {rate:>8}   {min(0.5 + s, 1.0):.2f}")


if __name__ == "__main__":
    main()
