"""Second Dirichlet eigenvalue of the unit square for a few p.

Two sign-changing starts are iterated five times each: one odd about the
vertical midline and one odd about the diagonal.  For p = 2 both should land
near 5 pi^2, the exact (double) second eigenvalue of the Laplacian.
"""

import math
import time

from plapinv import RunConfig, build_rect_mesh, initial_guess, run_algorithm_a
from plapinv.cli import TABLE1, TABLE2

mesh = build_rect_mesh(64, 64)

print(f"{'p':>4} {'start':>9} {'R[u5]':>10} {'reference':>10} {'rel.dev':>9} {'secs':>6}")
for p in (1.7, 2.0, 2.5, 3.0):
    for name, table in (("midline", TABLE1), ("diagonal", TABLE2)):
        t0 = time.perf_counter()
        trace = run_algorithm_a(mesh, initial_guess(name, mesh),
                                RunConfig(p, max_iters=5, stop_early=False))
        R = trace.R_star_estimate
        ref = table[p]
        print(f"{p:4.1f} {name:>9} {R:10.3f} {ref:10.2f} {(ref - R) / ref:+9.4f} "
              f"{time.perf_counter() - t0:6.1f}")

print(f"\n5 pi^2 = {5 * math.pi ** 2:.3f}")

# the balancing weight settles at the fixed point of beta, and the norm of
# the iterate at the value that fixed point predicts
trace = run_algorithm_a(mesh, initial_guess("midline", mesh),
                        RunConfig(3.0, max_iters=5, stop_early=False))
print("\np = 3 midline run, step by step")
print(trace.to_csv())
print(f"predicted |u|_3 limit {trace.lp_norm_limit_pred:.6g}, last |u|_3 {trace.last.lp_norm:.6g}")
