"""Inner step of the balanced inverse iteration.

For a sign-changing iterate ``u`` with L^p-normalisation ``w`` the map

    alpha -> phi(alpha),   -Delta_p phi = alpha (w+)^(p-1) - beta(alpha) (w-)^(p-1)

is searched for an ``alpha`` in (0, 1) at which the Rayleigh quotients of the
positive and negative parts of ``phi(alpha)`` coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math

import numpy as np

from . import femspace as fs
from .femspace import FeFunction, RayleighReport
from .ppoisson import NonConvergence, PPoissonConfig, solve_ppoisson

log = logging.getLogger(__name__)


class NotSignChanging(ValueError):
    """The function has a vanishing positive or negative part."""


class NoSignChange(RuntimeError):
    """The grid scan found no bracket for the balancing equation."""

    def __init__(self, msg, samples=()):
        super().__init__(msg)
        self.samples = list(samples)


class InternalError(RuntimeError):
    pass


@dataclass(frozen=True)
class BetaMap:
    """Continuous strictly decreasing weight with ``beta(0) = 1``, ``beta(1) = 0``.

    ``kind="linear"`` gives ``1 - alpha``; ``kind="power"`` gives
    ``(1 - alpha^p)^(1/p)``.
    """

    kind: str = "linear"
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in ("linear", "power"):
            raise ValueError(f"unknown beta map {self.kind!r}")
        if self.kind == "power" and not self.p > 0:
            raise ValueError("power beta map needs p > 0")

    def __call__(self, alpha):
        alpha = np.clip(alpha, 0.0, 1.0)
        if self.kind == "linear":
            return 1.0 - alpha
        return (1.0 - alpha ** self.p) ** (1.0 / self.p)

    @property
    def alpha_star(self) -> float:
        return fixed_point(self)


def fixed_point(beta_map: BetaMap, tol: float = 1e-14) -> float:
    """Unique solution of ``beta(a) = a`` by bisection."""
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if beta_map(mid) > mid:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Bracket:
    alpha_lo: float
    alpha_hi: float
    F_lo_sign: int = 1
    F_hi_sign: int = -1

    def __post_init__(self):
        if not 0.0 <= self.alpha_lo < self.alpha_hi <= 1.0:
            raise ValueError("bracket must satisfy 0 <= lo < hi <= 1")


@dataclass(frozen=True)
class RootConfig:
    alpha_tol: float = 1e-9
    F_tol: float = 1e-7  # relative to R[phi(alpha)]
    max_fevals: int = 80
    grid_points: int = 9
    refine_factor: int = 4


@dataclass
class BalanceResult:
    alpha_k: float
    beta_k: float
    u_next: FeFunction
    residual_F: float
    fevals: int
    rayleigh: RayleighReport
    bracket: Bracket | None = None
    newton_iterations: int = 0
    samples: list = field(default_factory=list)


def check_sign_changing(u: FeFunction, p: float, zero_tol: float = fs.ZERO_TOL,
                        degree: int = fs.DEFAULT_QUAD_DEGREE):
    rep = fs.rayleigh(u, p, zero_tol, degree)
    if rep.plus is None or rep.minus is None:
        raise NotSignChanging(
            f"both parts must be non-zero (|u+|_p={rep.lp_norms[1]:.3g}, "
            f"|u-|_p={rep.lp_norms[2]:.3g})")
    return rep


class PhiMap:
    """``alpha -> phi(alpha)`` for one fixed iterate.

    Solutions are cached per ``alpha`` and every new solve is warm-started
    from the cached solution at the nearest ``alpha``.
    """

    def __init__(self, u_k: FeFunction, beta_map: BetaMap, cfg: PPoissonConfig,
                 zero_tol: float = fs.ZERO_TOL):
        check_sign_changing(u_k, cfg.p, zero_tol, cfg.quad_degree)
        self.mesh = u_k.mesh
        self.beta_map = beta_map
        self.cfg = cfg
        self.zero_tol = zero_tol
        self.u_tilde = fs.normalize_lp(u_k, cfg.p, cfg.quad_degree)
        mesh, p = self.mesh, cfg.p
        up, um = fs.positive_part(self.u_tilde), fs.negative_part(self.u_tilde)
        # both loads non-negative; phi's load is alpha * b_plus - beta * b_minus
        self._b_plus = fs.power_load(up, p - 1.0, cfg.quad_degree)
        self._b_minus = fs.power_load(um, p - 1.0, cfg.quad_degree)
        self._solutions: dict[float, FeFunction] = {}
        self._reports: dict[float, RayleighReport] = {}
        self.fevals = 0
        self.newton_iterations = 0

    def load(self, alpha: float) -> np.ndarray:
        return alpha * self._b_plus - float(self.beta_map(alpha)) * self._b_minus

    def __call__(self, alpha: float) -> FeFunction:
        alpha = float(alpha)
        if alpha not in self._solutions:
            if not 0.0 <= alpha <= 1.0:
                raise ValueError("alpha must lie in [0, 1]")
            init = None
            if self._solutions:
                near = min(self._solutions, key=lambda a: abs(a - alpha))
                init = self._solutions[near]
            v, rep = solve_ppoisson(self.mesh, self.load(alpha), self.cfg, init)
            self.fevals += 1
            self.newton_iterations += rep.newton_iterations
            if not rep.converged:
                raise NonConvergence(
                    f"p-Poisson solve failed at alpha={alpha:.6g} "
                    f"(relative residual {rep.relative_residual:.3g})", rep)
            self._solutions[alpha] = v
        return self._solutions[alpha]

    def rayleigh(self, alpha: float) -> RayleighReport:
        alpha = float(alpha)
        if alpha not in self._reports:
            self._reports[alpha] = fs.rayleigh(self(alpha), self.cfg.p, self.zero_tol,
                                               self.cfg.quad_degree)
        return self._reports[alpha]

    def residual(self, alpha: float) -> float:
        """``R+ - R-`` of ``phi(alpha)``.

        A vanishing positive part reads as ``-inf`` and a vanishing negative
        part as ``+inf``.
        """
        rep = self.rayleigh(alpha)
        if rep.plus is None and rep.minus is None:
            raise InternalError(f"phi({alpha}) vanishes although the load is non-zero")
        if rep.plus is None:
            return -math.inf
        if rep.minus is None:
            return math.inf
        return rep.plus - rep.minus


def phi(alpha: float, u_k: FeFunction, beta_map: BetaMap, cfg: PPoissonConfig) -> FeFunction:
    return PhiMap(u_k, beta_map, cfg)(alpha)


def balance_residual(alpha: float, u_k: FeFunction, beta_map: BetaMap,
                     cfg: PPoissonConfig) -> float:
    return PhiMap(u_k, beta_map, cfg).residual(alpha)


def _scan(F, accept, alphas):
    """Left-to-right pass; returns ``(a, a)`` for a point that already
    balances, the first pair with F > 0 then F < 0, or None."""
    prev = None
    for a in map(float, alphas):
        fa = F(a)
        if fa == 0.0 or (math.isfinite(fa) and accept(a)):
            return a, a
        if prev is not None and prev[1] > 0 and fa < 0:
            return prev[0], a
        prev = (a, fa)
    return None


def _edge_search(F, accept, values, tol):
    """Look for the missing sign next to the ends of the admissible window.

    F blows up to +inf where the positive part appears and to -inf where the
    negative part disappears.  If a grid misses the narrow blow-up region,
    the samples read ``-inf, -, ...`` (or ``..., +, +inf``); bisecting between
    the marker and the adjacent finite sample recovers the missing sign.
    """
    pts = sorted(values.items())
    finite = [(a, f) for a, f in pts if math.isfinite(f)]
    if not finite:
        return None
    a_f, f_f = finite[0]
    if f_f < 0:
        lo = max([a for a, f in pts if a < a_f and f == -math.inf], default=0.0)
        hi = a_f
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            fm = F(mid)
            if fm == 0.0 or (math.isfinite(fm) and accept(mid)):
                return mid, mid
            if fm == -math.inf:
                lo = mid
            elif fm < 0:
                hi = mid
            else:
                return mid, a_f
    a_l, f_l = finite[-1]
    if f_l > 0:
        lo = a_l
        hi = min([a for a, f in pts if a > a_l and f == math.inf], default=1.0)
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            fm = F(mid)
            if fm == 0.0 or (math.isfinite(fm) and accept(mid)):
                return mid, mid
            if fm == math.inf:
                hi = mid
            elif fm > 0:
                lo = mid
            else:
                return a_l, mid
    return None


def find_balanced_alpha(u_k: FeFunction, beta_map: BetaMap, cfg: PPoissonConfig,
                        root_cfg: RootConfig = RootConfig(), zero_tol: float = fs.ZERO_TOL,
                        phimap: PhiMap | None = None) -> BalanceResult:
    """Solve the balancing equation for one outer step.

    A uniform grid scan locates the first bracket from the left; Ridder's
    method then shrinks it, with bisection whenever the Ridder update leaves
    the bracket or an endpoint carries an infinite marker.
    """
    pm = phimap if phimap is not None else PhiMap(u_k, beta_map, cfg, zero_tol)
    values: dict[float, float] = {}

    def F(a):
        a = float(a)
        if a not in values:
            if pm.fevals >= root_cfg.max_fevals:
                raise NoSignChange("balancing exceeded max_fevals", sorted(values.items()))
            values[a] = pm.residual(a)
        return values[a]

    def rel(a):
        fa = values[a]
        if not math.isfinite(fa):
            return math.inf
        return abs(fa) / pm.rayleigh(a).total

    def done(a):
        return rel(a) <= root_cfg.F_tol

    # coarse scan; a scan point that already balances is accepted as a root
    bracket = None
    for n in (root_cfg.grid_points + 1, (root_cfg.grid_points + 1) * root_cfg.refine_factor):
        bracket = _scan(F, done, np.linspace(0.0, 1.0, n + 1)[1:-1])
        if bracket is None:
            bracket = _edge_search(F, done, values, root_cfg.alpha_tol)
        if bracket is not None:
            break
    if bracket is None:
        raise NoSignChange("no sign change of R+ - R- on the refined grid",
                           sorted(values.items()))

    lo, hi = bracket
    root = lo if lo == hi else None
    while root is None:
        if hi - lo <= root_cfg.alpha_tol:
            break
        flo, fhi = F(lo), F(hi)
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        if math.isfinite(fm) and done(mid):
            root = mid
            break
        cand = [mid]
        if math.isfinite(flo) and math.isfinite(fhi) and math.isfinite(fm):
            s = math.sqrt(fm * fm - flo * fhi)
            if s > 0:
                x = mid + (mid - lo) * math.copysign(1.0, flo - fhi) * fm / s
                if lo < x < hi and x != mid:
                    fx = F(x)
                    if math.isfinite(fx) and done(x):
                        root = x
                        break
                    cand.append(x)
        pts = sorted([lo, hi] + cand)
        for a, b in zip(pts, pts[1:]):
            if values[a] > 0 and values[b] < 0:
                lo, hi = a, b
                break
        else:
            raise InternalError("bracket lost during refinement")
    if root is None:
        root = min((lo, hi), key=rel)
        if not done(root):
            log.warning("balancing stopped on bracket width; |F|/R = %.3g", rel(root))
    rep = pm.rayleigh(root)
    return BalanceResult(
        alpha_k=root, beta_k=float(beta_map(root)), u_next=pm(root),
        residual_F=values[root], fevals=pm.fevals, rayleigh=rep,
        bracket=Bracket(min(bracket), max(bracket)) if bracket[0] != bracket[1] else None,
        newton_iterations=pm.newton_iterations, samples=sorted(values.items()))
