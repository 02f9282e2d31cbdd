"""Iteration on an interval against two independent references.

On (0, 1) the Dirichlet eigenvalues of the p-Laplacian are known in closed
form.  A shooting method recomputes them without the formula, and the
finite-element iteration started from sin(2 pi x) should reach the second.
"""

from plapinv import (EigenOracle1D, RunConfig, build_interval_mesh, initial_guess, lambda_k_1d,
                     run_algorithm_a, shoot_1d)

mesh = build_interval_mesh(2000)
u0 = initial_guess("first_eig_product", mesh, m=2)

print(f"{'p':>4} {'closed form':>12} {'shooting':>12} {'iteration':>12} {'steps':>5}")
for p in (1.5, 2.0, 3.0, 4.0):
    exact = lambda_k_1d(2, EigenOracle1D(p))
    shot = shoot_1d(2, p)
    trace = run_algorithm_a(mesh, u0, RunConfig(p, max_iters=40))
    print(f"{p:4.1f} {exact:12.6f} {shot:12.6f} {trace.R_star_estimate:12.6f} {trace.iterations:5d}")
