"""Reference values that do not depend on the finite-element code.

* the Laplacian spectrum of the unit square,
* Dirichlet eigenvalues of the 1D p-Laplacian, by closed form and by a
  shooting method,
* a scalar sequence that satisfies the qualitative properties of the
  iteration but does not converge.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


class NonBracketed(RuntimeError):
    """The shooting search could not bracket the eigenvalue."""


def square_eigs_p2(m_max: int):
    """Dirichlet Laplacian eigenvalues ``pi^2 (m^2 + n^2)`` of the unit square
    for ``1 <= m, n <= m_max``, as sorted ``(value, multiplicity)`` pairs."""
    if int(m_max) < 1:
        raise ValueError("m_max must be >= 1")
    counts: dict[int, int] = {}
    for m in range(1, int(m_max) + 1):
        for n in range(1, int(m_max) + 1):
            counts[m * m + n * n] = counts.get(m * m + n * n, 0) + 1
    return [(math.pi ** 2 * s, c) for s, c in sorted(counts.items())]


@dataclass(frozen=True)
class EigenOracle1D:
    p: float
    length: float = 1.0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not self.length > 0:
            raise ValueError("length must be positive")

    @cached_property
    def pi_p(self) -> float:
        return 2.0 * math.pi / (self.p * math.sin(math.pi / self.p))

    def eigenvalue(self, k: int) -> float:
        return lambda_k_1d(k, self)


def lambda_k_1d(k: int, oracle: EigenOracle1D) -> float:
    """``(p - 1) (k pi_p / L)^p``."""
    if int(k) < 1:
        raise ValueError("k must be >= 1")
    return (oracle.p - 1.0) * (k * oracle.pi_p / oracle.length) ** oracle.p


def _kth_zero(lam: float, k: int, p: float, t_max: float, eps: float, rtol: float):
    """Position of the k-th positive zero of the shooting solution, or inf."""
    q = p / (p - 1.0)

    def rhs(_t, y):
        u, v = y
        # |v|^(q-2) v with the same kind of smoothing as the FE flux
        du = (v * v + eps * eps) ** (0.5 * (q - 2.0)) * v
        dv = -lam * abs(u) ** (p - 2.0) * u if u != 0.0 else 0.0
        return [du, dv]

    def crossing(_t, y):
        return y[0]

    crossing.terminal = k
    # leave the zero at t = 0 along the short-time expansion of the solution
    h = 1e-6
    v0 = 1.0 - lam * h ** p / p
    u0 = h - (q - 1.0) * lam * h ** (p + 1.0) / (p * (p + 1.0))
    sol = solve_ivp(rhs, (h, t_max), [u0, v0], method="DOP853", events=crossing,
                    rtol=rtol, atol=rtol * 1e-2)
    hits = sol.t_events[0]
    return hits[k - 1] if hits.size >= k else math.inf


def shoot_1d(k: int, p: float, length: float = 1.0, tol: float = 1e-10,
             eps: float = 1e-12) -> float:
    """Eigenvalue ``lambda`` whose eigenfunction on ``(0, length)`` has exactly
    ``k - 1`` interior zeros.

    Integrates ``u' = |v|^(p'-2) v``, ``v' = -lambda |u|^(p-2) u`` from
    ``(u, v)(0) = (0, 1)`` and solves ``z_k(lambda) = length`` for the k-th
    zero ``z_k`` by Brent's method; ``z_k`` decreases in ``lambda``.
    """
    if int(k) < 1:
        raise ValueError("k must be >= 1")
    if not (tol > 0 and length > 0 and p > 1):
        raise ValueError("need tol > 0, length > 0 and p > 1")
    k = int(k)
    t_max = 2.0 * length

    def gap(lam):
        return _kth_zero(lam, k, p, t_max, eps, min(1e-12, tol)) - length

    # rough start from the Laplacian scaling, then widen geometrically
    lo = hi = (k * math.pi / length) ** p
    for _ in range(60):
        if gap(lo) > 0:
            break
        lo /= 2.0
    else:
        raise NonBracketed("no lower eigenvalue bound found")
    for _ in range(60):
        if gap(hi) < 0:
            break
        hi *= 2.0
    else:
        raise NonBracketed("no upper eigenvalue bound found")
    # gap jumps to +inf below the eigenvalue's reach; cap it for brentq
    def capped(lam):
        g = gap(lam)
        return g if math.isfinite(g) else length
    return brentq(capped, lo, hi, xtol=tol * hi, rtol=4 * np.finfo(float).eps, maxiter=200)


def counterexample_sequence(n: int) -> list:
    """``x_0 = 0``, ``x_{k+1} = x_k + s_{k+1} / (k + 1)`` with ``s_0 = 1`` and
    ``s_{k+1} = +1`` if ``x_k < 0``, ``-1`` if ``x_k > 1``, else ``s_k``.

    The steps shrink to zero but their sum diverges, so the sequence keeps
    sweeping across ``[0, 1]``.  Returns ``x_0, ..., x_{n-1}``.
    """
    if int(n) < 1:
        raise ValueError("n must be >= 1")
    xs = [0.0]
    s = 1.0
    for k in range(int(n) - 1):
        x = xs[-1]
        if x < 0.0:
            s = 1.0
        elif x > 1.0:
            s = -1.0
        xs.append(x + s / (k + 1))
    return xs
