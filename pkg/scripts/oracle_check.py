#!/usr/bin/env python3
"""Compare every closed-form stiffness entry with the adaptive quadrature oracle."""
import argparse

from fracfps.fem import UniformMesh, assemble_stiffness
from fracfps.verify import QuadratureSpec, quad_stiffness_entry


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grids", type=int, nargs="+", default=[8, 16])
    ap.add_argument("--s", type=float, nargs="+", default=[0.1, 0.25, 0.4, 0.5, 0.75, 0.9])
    ap.add_argument("--rtol", type=float, default=1e-8)
    args = ap.parse_args()
    spec = QuadratureSpec(rtol=args.rtol)
    print(f"{'n':>4} {'s':>5} {'k':>3} {'closed form':>22} {'oracle':>22} {'rel diff':>9} {'bound':>9}")
    worst = 0.0
    for n in args.grids:
        mesh = UniformMesh(n)
        for s in args.s:
            row = assemble_stiffness(mesh, s).first_row
            for k in range(mesh.n_dof):
                q = quad_stiffness_entry(1, 1 + k, mesh, s, spec)
                rel = abs(row[k] - q.value) / abs(q.value)
                worst = max(worst, rel)
                print(f"{n:4d} {s:5.2f} {k:3d} {row[k]:22.15e} {q.value:22.15e} {rel:9.1e} {q.error:9.1e}")
    print(f"worst relative discrepancy: {worst:.2e}")


if __name__ == "__main__":
    main()
