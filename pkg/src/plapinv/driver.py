"""Outer loop of the balanced inverse iteration.

Each step normalises the iterate, solves the balancing equation for the
weight ``alpha`` and takes ``phi(alpha)`` as the next iterate.  The driver
watches the properties the iteration is known to have (non-increasing
Rayleigh quotients, balanced parts, bounded norms) and records any
violation instead of aborting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import io
import json
import logging
import math
import time
import warnings

import numpy as np

from . import femspace as fs
from .balance import (BalanceResult, BetaMap, NoSignChange, NotSignChanging, PhiMap,
                      RootConfig, check_sign_changing, find_balanced_alpha)
from .femspace import FeFunction, RayleighReport
from .mesh import Mesh
from .ppoisson import NonConvergence, PPoissonConfig

log = logging.getLogger(__name__)

CSV_HEADER = "k,alpha,beta,R,Rplus,Rminus,lp_norm,diff_w,diff_lp"
GUESSES = ("midline", "diagonal", "circle", "first_eig_product", "custom_nodal")


class UnknownGuess(ValueError):
    pass


class TraceTooShort(ValueError):
    pass


class RunAborted(RuntimeError):
    """A step failed; ``trace`` holds every state completed before it."""

    def __init__(self, msg, trace: "RunTrace"):
        super().__init__(msg)
        self.trace = trace


@dataclass
class RunConfig:
    """Settings of one run.

    ``stop_early=False`` disables the two tolerance-based stopping rules so
    that exactly ``max_iters`` steps are taken.  ``symmetry_breaking_noise``
    adds seeded Gaussian noise of that relative size to every iterate.
    """

    p: float
    beta_map: BetaMap | None = None
    max_iters: int = 50
    rq_stop_tol: float = 1e-8
    diff_stop_tol: float = 1e-7
    solver: PPoissonConfig | None = None
    root: RootConfig = field(default_factory=RootConfig)
    check_invariants: bool = True
    invariant_tol: float = 1e-4
    balance_tol: float = 1e-6
    stop_early: bool = True
    symmetry_breaking_noise: float = 0.0
    seed: int = 0
    zero_tol: float = fs.ZERO_TOL

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if self.beta_map is None:
            self.beta_map = BetaMap("linear", self.p)
        if self.solver is None:
            self.solver = PPoissonConfig(self.p)
        if self.solver.p != self.p:
            raise ValueError("solver config uses a different p")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")
        for name in ("rq_stop_tol", "diff_stop_tol", "invariant_tol", "balance_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.symmetry_breaking_noise < 0:
            raise ValueError("symmetry_breaking_noise must be non-negative")


@dataclass
class IterationState:
    k: int
    u_k: FeFunction
    rayleigh: RayleighReport
    lp_norm: float
    w_norm: float
    alpha_k: float | None = None
    beta_k: float | None = None
    diff_w: float | None = None
    diff_lp: float | None = None
    fevals: int = 0
    newton_iterations: int = 0

    @property
    def R(self) -> float:
        return self.rayleigh.total


@dataclass(frozen=True)
class Violation:
    k: int
    kind: str  # "monotonicity", "balance" or "norm_bounds"
    detail: str


@dataclass
class RunTrace:
    p: float
    beta_map: BetaMap
    states: list = field(default_factory=list)
    stop_reason: str = "running"
    invariant_violations: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def last(self) -> IterationState:
        return self.states[-1]

    @property
    def R_star_estimate(self) -> float:
        return self.last.R

    @property
    def alpha_star(self) -> float:
        return self.beta_map.alpha_star

    @property
    def lp_norm_limit_pred(self) -> float:
        return (self.alpha_star / self.R_star_estimate) ** (1.0 / (self.p - 1.0))

    @property
    def w_norm_limit_pred(self) -> float:
        r = self.R_star_estimate ** (1.0 / self.p)
        return (self.alpha_star / r) ** (1.0 / (self.p - 1.0))

    @property
    def iterations(self) -> int:
        return len(self.states) - 1

    def R_values(self) -> np.ndarray:
        return np.array([s.R for s in self.states])

    def alphas(self) -> np.ndarray:
        return np.array([s.alpha_k for s in self.states[1:]], dtype=float)

    def to_csv(self, path=None) -> str:
        """One row per state; fields of the initial state that do not exist
        (alpha, beta, diffs) are left empty."""
        def fmt(x):
            return "" if x is None else repr(float(x))

        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for s in self.states:
            r = s.rayleigh
            row = [str(s.k), fmt(s.alpha_k), fmt(s.beta_k), fmt(r.total), fmt(r.plus),
                   fmt(r.minus), fmt(s.lp_norm), fmt(s.diff_w), fmt(s.diff_lp)]
            buf.write(",".join(row) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        last = self.last
        return {
            "p": self.p,
            "beta": self.beta_map.kind,
            "iterations": self.iterations,
            "R_last": last.R,
            "alpha_last": last.alpha_k,
            "beta_last": last.beta_k,
            "alpha_star": self.alpha_star,
            "lp_norm_last": last.lp_norm,
            "lp_norm_limit_pred": self.lp_norm_limit_pred,
            "w_norm_last": last.w_norm,
            "w_norm_limit_pred": self.w_norm_limit_pred,
            "stop_reason": self.stop_reason,
            "violations": len(self.invariant_violations),
            "wall_time": self.wall_time,
        }

    def to_json(self, path=None) -> str:
        data = self.summary()
        data["invariant_violations"] = [vars(v) for v in self.invariant_violations]
        text = json.dumps(data, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _unit_coords(mesh: Mesh):
    lo, hi = mesh.bounding_box()
    return [(c - a) / (b - a) for c, a, b in zip(mesh.nodes.T, lo, hi)]


def initial_guess(name: str, mesh: Mesh, **params) -> FeFunction:
    """Nodal interpolant of a named starting function.

    Rectangle coordinates are rescaled to the unit square first.

    Parameters
    ----------
    name : str
        ``midline``: ``xy(x-1)(y-1)(x-1/2)``, odd about ``x = 1/2``.
        ``diagonal``: ``xy(x-1)(y-1)(x-y)``, odd about ``x = y``.
        ``circle``: ``xy(x-1)(y-1)(1/16 - (x-1/2)^2 - (y-1/2)^2)``, nodal
        line a circle of radius 1/4.
        ``first_eig_product``: ``sin(m pi x) sin(n pi y)`` (``m=2, n=1`` by
        default); on an interval ``sin(m pi x)`` with ``m=2``.
        ``custom_nodal``: raw nodal ``values``.
    mesh : Mesh
    **params
        ``m``, ``n`` for ``first_eig_product``; ``values`` for
        ``custom_nodal``.
    """
    if name not in GUESSES:
        raise UnknownGuess(f"unknown initial guess {name!r}; choose from {', '.join(GUESSES)}")
    if name == "custom_nodal":
        if "values" not in params:
            raise ValueError("custom_nodal needs values=")
        vals = np.array(params["values"], dtype=float)
        if vals.shape != (mesh.n_nodes,):
            raise ValueError(f"expected {mesh.n_nodes} nodal values")
    elif name == "first_eig_product":
        xs = _unit_coords(mesh)
        m = int(params.get("m", 2))
        vals = np.sin(m * np.pi * xs[0])
        if mesh.dim == 2:
            vals = vals * np.sin(int(params.get("n", 1)) * np.pi * xs[1])
    else:
        if mesh.dim != 2:
            raise UnknownGuess(f"{name!r} is only defined on rectangles")
        x, y = _unit_coords(mesh)
        bubble = x * y * (x - 1.0) * (y - 1.0)
        if name == "midline":
            vals = bubble * (x - 0.5)
        elif name == "diagonal":
            vals = bubble * (x - y)
        else:
            vals = bubble * (1.0 / 16.0 - (x - 0.5) ** 2 - (y - 0.5) ** 2)
    vals = np.array(vals, dtype=float)
    vals[mesh.boundary_nodes] = 0.0
    return FeFunction(mesh, vals)


@dataclass(frozen=True)
class U0Diagnostics:
    lp_norms: tuple
    zero_fraction: float
    warnings: tuple = ()


def validate_u0(u0: FeFunction, p: float = 2.0, zero_tol: float = fs.ZERO_TOL,
                zero_warn: float = 0.05) -> U0Diagnostics:
    """Check that ``u0`` is a usable starting function.

    Both parts must be non-zero (hard error).  The fraction of interior
    nodes where ``u0`` is exactly zero stands in for the requirement that
    the nodal set has measure zero; above ``zero_warn`` a warning is issued.
    """
    rep = check_sign_changing(u0, p, zero_tol)
    interior = u0.values[u0.mesh.interior_nodes]
    frac = float(np.mean(interior == 0.0)) if interior.size else 0.0
    notes = ()
    if frac > zero_warn:
        msg = f"u0 vanishes on {100 * frac:.1f}% of interior nodes"
        warnings.warn(msg, UserWarning, stacklevel=2)
        notes = (msg,)
    return U0Diagnostics(rep.lp_norms, frac, notes)


def _state(k, u, cfg: RunConfig, prev: IterationState | None, res: BalanceResult | None,
           rep: RayleighReport | None = None):
    p = cfg.p
    if rep is None:
        rep = fs.rayleigh(u, p, cfg.zero_tol, cfg.solver.quad_degree)
    st = IterationState(k=k, u_k=u, rayleigh=rep, lp_norm=rep.lp_norms[0],
                        w_norm=fs.grad_lp_norm(u, p))
    if res is not None:
        st.alpha_k, st.beta_k = res.alpha_k, res.beta_k
        st.fevals, st.newton_iterations = res.fevals, res.newton_iterations
    if prev is not None:
        d = u - prev.u_k
        st.diff_w = fs.grad_lp_norm(d, p) / st.w_norm
        st.diff_lp = fs.lp_norm(d, p, cfg.solver.quad_degree) / st.lp_norm
    return st


def _check(trace: RunTrace, cfg: RunConfig):
    st = trace.last
    k = st.k
    out = []
    r = st.rayleigh
    gap = abs(r.plus - r.minus)
    if gap > cfg.balance_tol * r.total:
        out.append(Violation(k, "balance", f"|R+ - R-| / R = {gap / r.total:.3g}"))
    if k >= 2:
        prev = trace.states[-2].R
        if st.R > prev * (1.0 + cfg.invariant_tol):
            out.append(Violation(k, "monotonicity", f"R rose from {prev:.10g} to {st.R:.10g}"))
    first = trace.states[1].lp_norm
    if not first / 100.0 <= st.lp_norm <= 100.0 * first:
        out.append(Violation(k, "norm_bounds",
                             f"|u_k|_p = {st.lp_norm:.3g} outside [{first / 100:.3g}, {100 * first:.3g}]"))
    for v in out:
        log.warning("invariant violation at k=%d: %s (%s)", v.k, v.kind, v.detail)
    trace.invariant_violations.extend(out)


def run_algorithm_a(mesh: Mesh, u0: FeFunction, cfg: RunConfig) -> RunTrace:
    """Iterate the balanced inverse iteration from ``u0``.

    Stops when the relative change of R drops below ``rq_stop_tol``, the
    relative gradient-norm step drops below ``diff_stop_tol`` (both only if
    ``stop_early``) or after ``max_iters`` steps.

    Raises
    ------
    RunAborted
        If a balancing step finds no bracket or a p-Poisson solve fails;
        the exception carries the partial trace.
    """
    if u0.mesh is not mesh:
        raise ValueError("u0 lives on a different mesh")
    validate_u0(u0, cfg.p, cfg.zero_tol)
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    trace = RunTrace(cfg.p, cfg.beta_map)
    trace.states.append(_state(0, u0, cfg, None, None))
    u = u0
    for k in range(1, int(cfg.max_iters) + 1):
        try:
            pm = PhiMap(u, cfg.beta_map, cfg.solver, cfg.zero_tol)
            res = find_balanced_alpha(u, cfg.beta_map, cfg.solver, cfg.root, cfg.zero_tol, pm)
        except (NoSignChange, NonConvergence, NotSignChanging) as exc:
            trace.stop_reason = ("solver_failure" if isinstance(exc, NonConvergence)
                                 else "no_sign_change")
            trace.wall_time = time.perf_counter() - t0
            raise RunAborted(f"step {k} failed: {exc}", trace) from exc
        u = res.u_next
        rep = res.rayleigh
        if cfg.symmetry_breaking_noise > 0:
            noise = rng.standard_normal(mesh.n_nodes)
            noise[mesh.boundary_nodes] = 0.0
            scale = cfg.symmetry_breaking_noise * np.abs(u.values).max()
            u = FeFunction(mesh, u.values + scale * noise)
            rep = None
        prev = trace.last
        trace.states.append(_state(k, u, cfg, prev, res, rep))
        if cfg.check_invariants:
            _check(trace, cfg)
        st = trace.last
        if cfg.stop_early and k >= 2:
            if abs(st.R - prev.R) <= cfg.rq_stop_tol * st.R:
                trace.stop_reason = "rq_converged"
                break
            if st.diff_w <= cfg.diff_stop_tol:
                trace.stop_reason = "diff_converged"
                break
    else:
        trace.stop_reason = "max_iters"
    trace.wall_time = time.perf_counter() - t0
    return trace


@dataclass(frozen=True)
class ConvergenceReport:
    alpha_error: float
    beta_error: float
    lp_norm_error: float
    w_norm_error: float
    lp_norm_rel_error: float
    w_norm_rel_error: float
    alpha_tail_rate: float
    R_tail_slope: float


def _tail_rate(errors: np.ndarray) -> float:
    """Mean ratio of consecutive errors, from a log-linear fit."""
    e = np.abs(errors)
    e = e[e > 0]
    if e.size < 2:
        return 0.0
    slope = np.polyfit(np.arange(e.size), np.log(e), 1)[0]
    return float(np.exp(slope))


def convergence_diagnostics(trace: RunTrace, tail: int = 5) -> ConvergenceReport:
    """Distances of the last state to the predicted limits.

    ``alpha_tail_rate`` estimates the contraction factor of ``|alpha_k -
    alpha*|`` over the last ``tail`` steps; ``R_tail_slope`` is the mean
    per-step change of R over the same window.
    """
    if len(trace.states) < 3:
        raise TraceTooShort("convergence diagnostics need at least 3 states")
    a_star = trace.alpha_star
    last = trace.last
    lp_pred, w_pred = trace.lp_norm_limit_pred, trace.w_norm_limit_pred
    alphas = trace.alphas()[-tail:]
    R = trace.R_values()[1:][-tail:]
    return ConvergenceReport(
        alpha_error=abs(last.alpha_k - a_star),
        beta_error=abs(last.beta_k - a_star),
        lp_norm_error=abs(last.lp_norm - lp_pred),
        w_norm_error=abs(last.w_norm - w_pred),
        lp_norm_rel_error=abs(last.lp_norm - lp_pred) / lp_pred,
        w_norm_rel_error=abs(last.w_norm - w_pred) / w_pred,
        alpha_tail_rate=_tail_rate(alphas - a_star),
        R_tail_slope=float(np.mean(np.diff(R))) if R.size > 1 else math.nan,
    )
