"""Solve Example 1 on a sequence of meshes and print errors and rates.

    python3 demos/h_convergence.py [m] [beta_plus]
"""
import sys

from frenet_ife.assembly import discretize
from frenet_ife.problems import example1
from frenet_ife.solver import assemble_and_solve, compute_error, convergence_rates

m = int(sys.argv[1]) if len(sys.argv) > 1 else 2
beta_plus = float(sys.argv[2]) if len(sys.argv) > 2 else 10.0

records = []
print(f"Example 1, m = {m}, beta = (1, {beta_plus:g})")
print(f"{'n':>4} {'dofs':>8} {'rel L2 error':>14}")
for n in (8, 16, 32):
    sysm = assemble_and_solve(discretize(example1(beta_plus=beta_plus), n, m))
    err = compute_error(sysm.disc, sysm.solution)
    records.append((sysm.disc.mesh.h, err.rel_l2))
    print(f"{n:>4} {sysm.n_dofs:>8} {err.rel_l2:>14.4e}")
fit = convergence_rates(records)
print(f"least-squares slope {fit.slope:.2f}, pairwise rates {', '.join(f'{r:.2f}' for r in fit.pairwise)}")
