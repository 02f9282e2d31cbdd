"""Dirichlet p-Poisson solver: regularised damped Newton with continuation.

The discrete problem is the P1 Galerkin system

    sum_e vol_e (|grad v|^2 + eps^2)^((p-2)/2) <grad v, grad psi_i> = int f psi_i

for every interior hat function ``psi_i``. It is the gradient of the convex
energy ``(1/p) int (|grad v|^2 + eps^2)^(p/2) - int f v``, which is what the
line search monitors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import weakref

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import femspace as fs
from .femspace import FeFunction
from .mesh import DegenerateMesh, Mesh, interior_dof_map

log = logging.getLogger(__name__)


class NonConvergence(RuntimeError):
    """Newton iteration hit its cap or stalled."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


def default_eps_schedule():
    return tuple(10.0 ** -k for k in range(2, 11))


@dataclass(frozen=True)
class PPoissonConfig:
    p: float
    newton_tol: float = 1e-10
    max_newton: int = 60  # per regularisation level
    eps_schedule: tuple = field(default_factory=default_eps_schedule)
    shrink: float = 0.5
    min_step: float = 2.0 ** -20
    armijo: float = 1e-4
    # tolerance on the intermediate continuation levels
    continuation_tol: float = 1e-6
    quad_degree: int = fs.DEFAULT_QUAD_DEGREE

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not (self.newton_tol > 0 and self.continuation_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_newton < 1:
            raise ValueError("max_newton must be >= 1")
        eps = np.asarray(self.eps_schedule, dtype=float)
        if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
            raise ValueError("eps_schedule must be positive and strictly decreasing")
        if not (0 < self.shrink < 1 and 0 < self.min_step < 1):
            raise ValueError("bad damping parameters")

    @property
    def eps_final(self) -> float:
        return float(self.eps_schedule[-1])


@dataclass
class SolveReport:
    newton_iterations: int = 0
    final_residual_norm: float = 0.0
    initial_residual_norm: float = 0.0
    converged: bool = False
    # (eps, energy) after every accepted step; energies at different eps
    # differ by a constant and are not comparable
    energy_trace: list = field(default_factory=list)
    eps_levels: list = field(default_factory=list)
    # residual attainable in floating point, from the componentwise backward error
    residual_floor: float = 0.0

    @property
    def relative_residual(self) -> float:
        if self.initial_residual_norm == 0.0:
            return 0.0
        return self.final_residual_norm / self.initial_residual_norm


class _Assembler:
    """Per-mesh sparsity pattern and interior restriction, built once."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.dofs = interior_dof_map(mesh)
        loc = self.dofs.dof_of_node[mesh.elements]  # (ne, d+1)
        rows = np.repeat(loc[:, :, None], loc.shape[1], axis=2)
        cols = np.repeat(loc[:, None, :], loc.shape[1], axis=1)
        keep = (rows >= 0) & (cols >= 0)
        self.keep = keep.ravel()
        self.rows = rows.ravel()[self.keep]
        self.cols = cols.ravel()[self.keep]
        self.n = self.dofs.n_dofs
        self._stiffness_lu = None

    def full(self, x) -> FeFunction:
        v = np.zeros(self.mesh.n_nodes)
        v[self.dofs.interior] = x
        return FeFunction(self.mesh, v)

    def matrix(self, local: np.ndarray) -> sp.csc_matrix:
        data = local.ravel()[self.keep]
        return sp.coo_matrix((data, (self.rows, self.cols)), shape=(self.n, self.n)).tocsc()

    def stiffness_lu(self):
        if self._stiffness_lu is None:
            G = self.mesh.basis_gradients
            local = self.mesh.element_volumes[:, None, None] * np.einsum("eai,ebi->eab", G, G)
            self._stiffness_lu = spla.splu(self.matrix(local))
        return self._stiffness_lu


_assemblers: "weakref.WeakKeyDictionary[Mesh, _Assembler]" = weakref.WeakKeyDictionary()


def _assembler(mesh: Mesh) -> _Assembler:
    asm = _assemblers.get(mesh)
    if asm is None:
        asm = _assemblers[mesh] = _Assembler(mesh)
    return asm


def _coefficients(g, p, eps):
    w = np.sum(g * g, axis=1) + eps * eps
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(w > 0, w ** (0.5 * (p - 2.0)), 0.0 if p >= 2 else np.inf)
    if p == 2:
        c = np.ones_like(w)
    return w, c


def _flux_residual(v: FeFunction, p: float, eps: float) -> np.ndarray:
    """Nodal vector of ``int a(grad v) . grad psi_i`` over all nodes."""
    mesh = v.mesh
    g = fs.gradients(v)
    _, c = _coefficients(g, p, eps)
    flux = np.where(c[:, None] == np.inf, 0.0, c[:, None] * g)
    local = mesh.element_volumes[:, None] * np.einsum("ei,eai->ea", flux, mesh.basis_gradients)
    return np.bincount(mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def resolve_load(mesh: Mesh, f_load, degree: int = fs.DEFAULT_QUAD_DEGREE) -> np.ndarray:
    """Turn a load description into the nodal vector ``int f psi_i``.

    Accepts an assembled vector, an :class:`FeFunction` source, or a callable.
    """
    if isinstance(f_load, FeFunction):
        vals, _ = fs.quad_values(f_load, degree)
        return fs.load_vector(mesh, vals, degree)
    if callable(f_load):
        return fs.function_load(mesh, f_load, degree)
    b = np.asarray(f_load, dtype=float)
    if b.shape != (mesh.n_nodes,):
        raise ValueError("assembled load must have one entry per node")
    return b


def assemble_residual(v: FeFunction, f_load, p: float, eps: float) -> np.ndarray:
    """Interior residual of the regularised weak form."""
    asm = _assembler(v.mesh)
    b = resolve_load(v.mesh, f_load)
    return (_flux_residual(v, p, eps) - b)[asm.dofs.interior]


def assemble_jacobian(v: FeFunction, p: float, eps: float) -> sp.csc_matrix:
    """Exact derivative of :func:`assemble_residual` over interior unknowns."""
    mesh = v.mesh
    asm = _assembler(mesh)
    G = mesh.basis_gradients
    g = fs.gradients(v)
    w, c = _coefficients(g, p, eps)
    gG = np.einsum("ei,eai->ea", g, G)
    with np.errstate(divide="ignore", invalid="ignore"):
        rank1 = np.where(w > 0, (p - 2.0) / w, 0.0)
    local = np.einsum("eai,ebi->eab", G, G) + rank1[:, None, None] * gG[:, :, None] * gG[:, None, :]
    local *= (mesh.element_volumes * c)[:, None, None]
    return asm.matrix(local)


def energy(v: FeFunction, b: np.ndarray, p: float, eps: float) -> float:
    g = fs.gradients(v)
    w = np.sum(g * g, axis=1) + eps * eps
    return float(np.sum(v.mesh.element_volumes * w ** (0.5 * p)) / p - b @ v.values)


def _newton(asm: _Assembler, x, b, p, eps, tol_abs, cfg: PPoissonConfig, report: SolveReport):
    """Damped Newton at a fixed regularisation level. Returns (x, converged)."""
    bi = b[asm.dofs.interior]
    v = asm.full(x)
    E = energy(v, b, p, eps)
    report.energy_trace.append((eps, E))
    for _ in range(cfg.max_newton):
        r = _flux_residual(v, p, eps)[asm.dofs.interior] - bi
        rn = float(np.linalg.norm(r))
        report.final_residual_norm = rn
        if rn <= tol_abs:
            return x, True
        J = assemble_jacobian(v, p, eps)
        floor = 16 * np.finfo(float).eps * float(np.linalg.norm(abs(J) @ np.abs(x) + np.abs(bi)))
        report.residual_floor = floor
        if rn <= floor:
            return x, True
        d = -spla.spsolve(J, r)
        slope = float(r @ d)
        if not slope < 0:
            # Jacobian solve lost accuracy; fall back to steepest descent
            d, slope = -r, -rn * rn
        # energy differences below this are round-off; there the residual
        # norm has to decrease instead
        slack = 1e-13 * (abs(E) + abs(float(bi @ x)))
        t = 1.0
        while True:
            x_new = x + t * d
            v_new = asm.full(x_new)
            E_new = energy(v_new, b, p, eps)
            if E_new <= E + cfg.armijo * t * slope:
                break
            if E_new <= E + slack:
                r_new = _flux_residual(v_new, p, eps)[asm.dofs.interior] - bi
                if np.linalg.norm(r_new) <= (1.0 - cfg.armijo * t) * rn:
                    break
            t *= cfg.shrink
            if t < cfg.min_step:
                log.debug("line search stalled at eps=%g, residual %g", eps, rn)
                return x, False
        x, v, E = x_new, v_new, E_new
        report.newton_iterations += 1
        report.energy_trace.append((eps, E))
    r = _flux_residual(v, p, eps)[asm.dofs.interior] - bi
    report.final_residual_norm = float(np.linalg.norm(r))
    return x, report.final_residual_norm <= max(tol_abs, report.residual_floor)


def _cold_start(asm: _Assembler, b: np.ndarray, p: float) -> np.ndarray:
    """Linear solution rescaled to minimise the unregularised energy on its ray."""
    w = asm.stiffness_lu().solve(b[asm.dofs.interior])
    if p == 2:
        return w
    A = fs.grad_power(asm.full(w), p)
    B = float(b[asm.dofs.interior] @ w)
    if A <= 0 or B <= 0:
        return np.zeros_like(w)
    return (B / A) ** (1.0 / (p - 1.0)) * w


def solve_ppoisson(mesh: Mesh, f_load, cfg: PPoissonConfig, v_init: FeFunction | None = None):
    """Solve ``-Delta_p v = f`` with homogeneous Dirichlet data.

    Returns ``(v, SolveReport)``. A run that hits the iteration cap is
    returned with ``report.converged = False`` rather than raised.
    """
    asm = _assembler(mesh)
    if asm.n == 0:
        raise DegenerateMesh("mesh has no interior nodes")
    b = resolve_load(mesh, f_load, cfg.quad_degree)
    if not np.all(np.isfinite(b)):
        raise ValueError("load is not finite")
    p = cfg.p
    ref = float(np.linalg.norm(b[asm.dofs.interior]))
    report = SolveReport(initial_residual_norm=ref)
    if ref == 0.0:
        report.converged = True
        return FeFunction.zeros(mesh), report
    tol_final = cfg.newton_tol * ref

    if p == 2:
        x = asm.stiffness_lu().solve(b[asm.dofs.interior])
        v = asm.full(x)
        report.newton_iterations = 1
        report.eps_levels = [cfg.eps_final]
        report.energy_trace = [(0.0, 0.0), (0.0, energy(v, b, p, 0.0))]
        r = _flux_residual(v, p, 0.0)[asm.dofs.interior] - b[asm.dofs.interior]
        report.final_residual_norm = float(np.linalg.norm(r))
        report.converged = report.final_residual_norm <= tol_final
        return v, report

    if v_init is not None:
        x0 = np.asarray(v_init.values, dtype=float)[asm.dofs.interior].copy()
        # a warm start is usually close enough to go straight to the final level
        warm = SolveReport(initial_residual_norm=ref)
        x, ok = _newton(asm, x0, b, p, cfg.eps_final, tol_final, cfg, warm)
        if ok:
            warm.converged = True
            warm.eps_levels = [cfg.eps_final]
            return asm.full(x), warm
        report.newton_iterations += warm.newton_iterations
        report.energy_trace.extend(warm.energy_trace)
    else:
        x0 = _cold_start(asm, b, p)

    x = x0
    ok = False
    levels = list(cfg.eps_schedule)
    for i, eps in enumerate(levels):
        last = i == len(levels) - 1
        tol = tol_final if last else max(tol_final, cfg.continuation_tol * ref)
        report.eps_levels.append(eps)
        x, ok = _newton(asm, x, b, p, eps, tol, cfg, report)
        if not ok and last:
            break
    report.converged = bool(ok)
    if not ok:
        log.warning("p-Poisson solve did not converge (p=%g, rel. residual %.3g)",
                    p, report.relative_residual)
    return asm.full(x), report


def signed_power_load(mesh: Mesh, a: float, g_plus: FeFunction, b: float, g_minus: FeFunction,
                      p: float, degree: int = fs.DEFAULT_QUAD_DEGREE) -> np.ndarray:
    """Load of ``a g_plus^(p-1) - b g_minus^(p-1)``, powers taken at quadrature points."""
    if np.any(g_plus.values < 0) or np.any(g_minus.values < 0):
        raise ValueError("g_plus and g_minus must be nodally non-negative")
    load = np.zeros(mesh.n_nodes)
    if a:
        load += a * fs.power_load(g_plus, p - 1.0, degree)
    if b:
        load -= b * fs.power_load(g_minus, p - 1.0, degree)
    return load


def solve_signed_power_rhs(mesh: Mesh, a: float, g_plus: FeFunction, b: float,
                           g_minus: FeFunction, cfg: PPoissonConfig,
                           v_init: FeFunction | None = None):
    """Solve ``-Delta_p v = a g_plus^(p-1) - b g_minus^(p-1)``."""
    if a < 0 or b < 0:
        raise ValueError("coefficients must be non-negative")
    load = signed_power_load(mesh, a, g_plus, b, g_minus, cfg.p, cfg.quad_degree)
    return solve_ppoisson(mesh, load, cfg, v_init)
