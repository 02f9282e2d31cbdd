"""Continuous P1 functions, discrete Lebesgue norms and Rayleigh quotients."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional
import weakref

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi, roots_legendre

from .mesh import Mesh

DEFAULT_QUAD_DEGREE = 4
ZERO_TOL = 1e-8
# below this L^p norm a function is treated as identically zero
ABS_ZERO = 1e-300


@dataclass(frozen=True)
class QuadratureRule:
    """Reference-simplex rule in barycentric coordinates.

    ``weights`` sum to one, i.e. they are fractions of the element measure.
    """

    points: np.ndarray  # (nq, dim + 1)
    weights: np.ndarray  # (nq,)
    degree: int


@lru_cache(maxsize=None)
def quadrature_rule(dim: int, degree: int = DEFAULT_QUAD_DEGREE) -> QuadratureRule:
    """Positive-weight rule exact for polynomials of total degree ``degree``.

    Gauss-Legendre on segments; collapsed (Duffy) Gauss-Jacobi x Gauss-Legendre
    products on triangles.
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    n = max(1, (degree + 2) // 2)
    if dim == 1:
        t, w = roots_legendre(n)
        s = 0.5 * (t + 1.0)
        pts = np.column_stack([1.0 - s, s])
        return QuadratureRule(pts, 0.5 * w, degree)
    if dim == 2:
        # x = (1 - s) * t collapses the square onto the triangle; the Jacobian
        # factor (1 - s) is absorbed by the Jacobi weight with alpha = 1.
        s_j, w_j = roots_jacobi(n, 1.0, 0.0)
        t_l, w_l = roots_legendre(n)
        s = 0.5 * (s_j + 1.0)
        t = 0.5 * (t_l + 1.0)
        S, T = np.meshgrid(s, t, indexing="ij")
        x = (1.0 - S) * T
        y = S
        pts = np.column_stack([(1.0 - x - y).ravel(), x.ravel(), y.ravel()])
        W = np.outer(w_j, w_l).ravel()
        return QuadratureRule(pts, W / W.sum(), degree)
    raise ValueError("only 1D and 2D meshes are supported")


class FeFunction:
    """Continuous piecewise-linear function given by nodal values."""

    __slots__ = ("mesh", "values", "__weakref__")

    def __init__(self, mesh: Mesh, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_nodes,):
            raise ValueError(f"expected {mesh.n_nodes} nodal values, got {values.shape}")
        self.mesh = mesh
        self.values = values

    @classmethod
    def interpolate(cls, mesh: Mesh, func) -> "FeFunction":
        """Nodal interpolant of ``func(x)`` (1D) or ``func(x, y)`` (2D)."""
        coords = mesh.nodes.T
        return cls(mesh, np.broadcast_to(func(*coords), (mesh.n_nodes,)).astype(float))

    @classmethod
    def zeros(cls, mesh: Mesh) -> "FeFunction":
        return cls(mesh, np.zeros(mesh.n_nodes))

    def copy(self) -> "FeFunction":
        return FeFunction(self.mesh, self.values.copy())

    def is_dirichlet(self, atol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.values[self.mesh.boundary_nodes]) <= atol))

    def _coerce(self, other):
        if isinstance(other, FeFunction):
            if other.mesh is not self.mesh:
                raise ValueError("functions live on different meshes")
            return other.values
        return other

    def __add__(self, other):
        return FeFunction(self.mesh, self.values + self._coerce(other))

    def __sub__(self, other):
        return FeFunction(self.mesh, self.values - self._coerce(other))

    def __mul__(self, c):
        return FeFunction(self.mesh, self.values * float(c))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return FeFunction(self.mesh, self.values / float(c))

    def __neg__(self):
        return FeFunction(self.mesh, -self.values)

    def __repr__(self):
        return f"FeFunction(n_nodes={self.mesh.n_nodes}, max|u|={np.abs(self.values).max():.3g})"


_qp_cache: "weakref.WeakKeyDictionary[Mesh, dict]" = weakref.WeakKeyDictionary()


def quad_values(u: FeFunction, degree: int = DEFAULT_QUAD_DEGREE):
    """Values of ``u`` at the quadrature points, shape (ne, nq), and the
    matching weights (ne, nq) that already include element volumes."""
    mesh = u.mesh
    rule = quadrature_rule(mesh.dim, degree)
    vals = u.values[mesh.elements] @ rule.points.T
    cache = _qp_cache.setdefault(mesh, {})
    if degree not in cache:
        cache[degree] = mesh.element_volumes[:, None] * rule.weights[None, :]
    return vals, cache[degree]


def integrate_power(u: FeFunction, p: float, degree: int = DEFAULT_QUAD_DEGREE) -> float:
    """Quadrature value of the integral of ``|u|^p``."""
    vals, w = quad_values(u, degree)
    return float(np.sum(w * np.abs(vals) ** p))


def lp_norm(u: FeFunction, p: float, degree: int = DEFAULT_QUAD_DEGREE) -> float:
    if not p > 1:
        raise ValueError("p must exceed 1")
    return integrate_power(u, p, degree) ** (1.0 / p)


def gradients(u: FeFunction) -> np.ndarray:
    """Element-wise constant gradient, shape (ne, dim)."""
    mesh = u.mesh
    return np.einsum("ea,eai->ei", u.values[mesh.elements], mesh.basis_gradients)


def grad_power(u: FeFunction, p: float) -> float:
    """Exact integral of ``|grad u|^p``."""
    g = gradients(u)
    return float(np.sum(u.mesh.element_volumes * np.sum(g * g, axis=1) ** (0.5 * p)))


def grad_lp_norm(u: FeFunction, p: float) -> float:
    if not p > 1:
        raise ValueError("p must exceed 1")
    return grad_power(u, p) ** (1.0 / p)


def positive_part(u: FeFunction) -> FeFunction:
    """Nodal clipping ``max(0, u_i)``; stays in the P1 space."""
    return FeFunction(u.mesh, np.maximum(u.values, 0.0))


def negative_part(u: FeFunction) -> FeFunction:
    return FeFunction(u.mesh, np.maximum(-u.values, 0.0))


@dataclass(frozen=True)
class RayleighReport:
    """Rayleigh quotients of ``u`` and of its two parts.

    A quotient is ``None`` when the function in its denominator vanishes.
    """

    total: Optional[float]
    plus: Optional[float]
    minus: Optional[float]
    lp_norms: tuple  # (|u|_p, |u+|_p, |u-|_p)

    @property
    def balance_gap(self) -> Optional[float]:
        if self.plus is None or self.minus is None:
            return None
        return self.plus - self.minus


def rayleigh(u: FeFunction, p: float, zero_tol: float = ZERO_TOL,
             degree: int = DEFAULT_QUAD_DEGREE) -> RayleighReport:
    norm = lp_norm(u, p, degree)
    up, um = positive_part(u), negative_part(u)
    norm_p, norm_m = lp_norm(up, p, degree), lp_norm(um, p, degree)
    norms = (norm, norm_p, norm_m)
    if norm < ABS_ZERO:
        return RayleighReport(None, None, None, norms)
    total = grad_power(u, p) / norm ** p
    plus = grad_power(up, p) / norm_p ** p if norm_p >= zero_tol * norm else None
    minus = grad_power(um, p) / norm_m ** p if norm_m >= zero_tol * norm else None
    return RayleighReport(total, plus, minus, norms)


def rayleigh_quotient(u: FeFunction, p: float, degree: int = DEFAULT_QUAD_DEGREE) -> float:
    return grad_power(u, p) / integrate_power(u, p, degree)


def normalize_lp(u: FeFunction, p: float, degree: int = DEFAULT_QUAD_DEGREE) -> FeFunction:
    norm = lp_norm(u, p, degree)
    if norm < ABS_ZERO:
        raise ValueError("cannot normalise the zero function")
    return u / norm


def clipping_defect(u: FeFunction, p: float) -> float:
    """Relative failure of ``|grad u+|^p + |grad u-|^p = |grad u|^p``.

    The identity is exact for true pointwise parts; nodal clipping violates it
    on elements where ``u`` changes sign.
    """
    total = grad_power(u, p)
    if total == 0.0:
        return 0.0
    parts = grad_power(positive_part(u), p) + grad_power(negative_part(u), p)
    return abs(parts - total) / total


def load_vector(mesh: Mesh, qp_values: np.ndarray, degree: int = DEFAULT_QUAD_DEGREE) -> np.ndarray:
    """Assemble ``int f psi_i`` for all nodes from values of ``f`` at the
    quadrature points (shape (ne, nq))."""
    rule = quadrature_rule(mesh.dim, degree)
    w = mesh.element_volumes[:, None] * rule.weights[None, :]
    local = (w * qp_values) @ rule.points  # (ne, d+1)
    return np.bincount(mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def function_load(mesh: Mesh, func, degree: int = DEFAULT_QUAD_DEGREE) -> np.ndarray:
    """Load vector of a callable source ``func(x[, y])``."""
    rule = quadrature_rule(mesh.dim, degree)
    xq = np.einsum("qa,eai->eqi", rule.points, mesh.nodes[mesh.elements])
    vals = np.broadcast_to(func(*np.moveaxis(xq, -1, 0)), xq.shape[:2])
    return load_vector(mesh, vals, degree)


def power_load(g: FeFunction, exponent: float, degree: int = DEFAULT_QUAD_DEGREE) -> np.ndarray:
    """Load vector of ``|g|^(exponent-1) g`` evaluated at quadrature points.

    With ``exponent = p - 1`` and ``g >= 0`` this is ``g^(p-1)``; for a
    sign-changing ``g`` it is the signed power ``|g|^(p-2) g``.
    """
    vals, _ = quad_values(g, degree)
    return load_vector(g.mesh, np.sign(vals) * np.abs(vals) ** exponent, degree)


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix over all nodes."""
    d = mesh.dim
    local = (np.ones((d + 1, d + 1)) + np.eye(d + 1)) / ((d + 1) * (d + 2))
    vals = mesh.element_volumes[:, None, None] * local[None]
    rows = np.repeat(mesh.elements, d + 1, axis=1)
    cols = np.tile(mesh.elements, (1, d + 1))
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(mesh.n_nodes, mesh.n_nodes))


def stiffness_matrix(mesh: Mesh) -> sp.csr_matrix:
    """P1 stiffness matrix over all nodes."""
    G = mesh.basis_gradients
    vals = mesh.element_volumes[:, None, None] * np.einsum("eai,ebi->eab", G, G)
    d1 = mesh.dim + 1
    rows = np.repeat(mesh.elements, d1, axis=1)
    cols = np.tile(mesh.elements, (1, d1))
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(mesh.n_nodes, mesh.n_nodes))


def write_function(u: FeFunction, path) -> None:
    """Rows of ``x y value`` (``x value`` in 1D), one per node."""
    data = np.column_stack([u.mesh.nodes, u.values])
    np.savetxt(Path(path), data, fmt="%.17g")


def read_function(mesh: Mesh, path) -> FeFunction:
    data = np.atleast_2d(np.loadtxt(Path(path)))
    if not np.allclose(data[:, :-1], mesh.nodes):
        raise ValueError("dump does not match mesh nodes")
    return FeFunction(mesh, data[:, -1])
