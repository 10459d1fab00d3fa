"""Raise the degree on the fixed 5x5 Example 1 mesh and print the error decay."""
from frenet_ife.assembly import discretize
from frenet_ife.problems import example1
from frenet_ife.solver import assemble_and_solve, compute_error

print(f"{'m':>2} {'dofs':>6} {'rel L2 error':>14}")
for m in range(1, 7):
    sysm = assemble_and_solve(discretize(example1(beta_plus=10.0), 5, m))
    print(f"{m:>2} {sysm.n_dofs:>6} {compute_error(sysm.disc, sysm.solution).rel_l2:>14.4e}")
