"""A sequence with shrinking steps that never settles.

It walks through [0, 1] with steps 1/k and turns around only after leaving
the interval.  The steps go to zero, but their sum diverges, so it keeps
sweeping back and forth.  This is why a vanishing step size alone does not
prove that the balancing weights converge.
"""

import numpy as np

from plapinv import counterexample_sequence

xs = np.array(counterexample_sequence(7501))
print("first terms:", np.round(xs[:8], 4))
turns = np.flatnonzero(np.sign(np.diff(xs[1:])) != np.sign(np.diff(xs[:-1]))) + 1
print("turning points at k =", turns.tolist())
print("values there:", np.round(xs[turns], 4).tolist())
print(f"last step {abs(xs[-1] - xs[-2]):.2e}, range of the last 3000 terms "
      f"[{xs[-3000:].min():.3f}, {xs[-3000:].max():.3f}]")
