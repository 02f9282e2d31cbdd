"""Instability of a symmetric start.

The circle start is positive in a disc and negative around it.  Inverse
iteration first settles near the eigenvalue 10 pi^2, whose eigenfunction
shares that symmetry.  A tiny amount of noise in every step lets the
lower modes grow until the run falls to 5 pi^2.
"""

import math

import numpy as np

from plapinv import RunConfig, build_rect_mesh, initial_guess, run_algorithm_a
from plapinv.oracle import square_eigs_p2

mesh = build_rect_mesh(64, 64)
cfg = RunConfig(2.0, max_iters=120, stop_early=False, symmetry_breaking_noise=1e-9, seed=0)
trace = run_algorithm_a(mesh, initial_guess("circle", mesh), cfg)

levels = [v for v, _ in square_eigs_p2(4)[1:4]]
print("Laplacian eigenvalues nearby:", ", ".join(f"{v:.2f}" for v in levels))
R = trace.R_values()
for k in range(0, len(R), 5):
    nearest = min(levels, key=lambda v: abs(v - R[k]))
    bar = "#" * int(40 * (R[k] - 40) / 70)
    print(f"k={k:3d}  R={R[k]:8.3f}  nearest {nearest:6.2f}  {bar}")

alphas = trace.alphas()
print(f"\nalpha ranges over [{alphas.min():.4f}, {alphas.max():.4f}] and ends at {alphas[-1]:.6f}")
print(f"final R = {R[-1]:.4f}, 5 pi^2 = {5 * math.pi ** 2:.4f}")
