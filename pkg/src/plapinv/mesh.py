"""Structured simplicial meshes of intervals and axis-aligned rectangles."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


class DegenerateMesh(ValueError):
    """Raised when a mesh cannot carry a Dirichlet problem."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming P1 mesh.

    Parameters
    ----------
    nodes : (n_nodes, dim) array
    elements : (n_elems, dim + 1) int array
        Node indices per simplex, counter-clockwise in 2D.
    boundary : (n_nodes,) bool array
        True for nodes on the domain boundary.
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        for a in (self.nodes, self.elements, self.boundary):
            a.setflags(write=False)
        if self.elements.min() < 0 or self.elements.max() >= len(self.nodes):
            raise ValueError("element references a missing node")
        if np.any(self.element_volumes <= 0):
            raise ValueError("degenerate or clockwise element")

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @cached_property
    def _jacobians(self) -> np.ndarray:
        x = self.nodes[self.elements]  # (ne, d+1, dim)
        return x[:, 1:, :] - x[:, :1, :]  # rows are edge vectors

    @cached_property
    def element_volumes(self) -> np.ndarray:
        jac = self._jacobians
        if self.dim == 1:
            vol = jac[:, 0, 0]
        else:
            vol = 0.5 * (jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0])
        vol = np.array(vol)
        vol.setflags(write=False)
        return vol

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Constant gradients of the local hat functions, shape (ne, dim+1, dim)."""
        jac = self._jacobians
        inv = np.linalg.inv(jac)  # columns map reference gradients
        ref = np.vstack([-np.ones((1, self.dim)), np.eye(self.dim)])  # (d+1, dim)
        grads = np.einsum("aj,eij->eai", ref, inv)
        grads.setflags(write=False)
        return grads

    @property
    def measure(self) -> float:
        return float(self.element_volumes.sum())

    def bounding_box(self):
        return self.nodes.min(axis=0), self.nodes.max(axis=0)


def build_rect_mesh(nx: int, ny: int, width: float = 1.0, height: float = 1.0,
                    diagonal: str = "fixed") -> Mesh:
    """Uniform triangulation of ``[0, width] x [0, height]``.

    Every grid cell is cut into two right triangles. With
    ``diagonal="fixed"`` all cells use the SW-NE diagonal; ``"union_jack"``
    alternates the diagonal in a checkerboard pattern, which keeps the full
    symmetry group of the square when ``nx`` and ``ny`` are even.
    """
    if int(nx) < 1 or int(ny) < 1:
        raise ValueError("nx and ny must be >= 1")
    if not (width > 0 and height > 0):
        raise ValueError("rectangle dimensions must be positive")
    if diagonal not in ("fixed", "union_jack"):
        raise ValueError(f"unknown diagonal pattern {diagonal!r}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    sw = j * (nx + 1) + i
    se = sw + 1
    nw = sw + (nx + 1)
    ne = nw + 1
    if diagonal == "fixed":
        slash = np.ones_like(sw, dtype=bool)
    else:
        slash = (i + j) % 2 == 0
    # "/" cells: (sw, se, ne), (sw, ne, nw); "\" cells: (sw, se, nw), (se, ne, nw)
    t1 = np.where(slash[:, None], np.column_stack([sw, se, ne]), np.column_stack([sw, se, nw]))
    t2 = np.where(slash[:, None], np.column_stack([sw, ne, nw]), np.column_stack([se, ne, nw]))
    elements = np.empty((2 * nx * ny, 3), dtype=np.int64)
    elements[0::2] = t1
    elements[1::2] = t2

    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="xy")
    boundary = ((ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)).ravel()
    return Mesh(nodes, elements, boundary)


def build_interval_mesh(n: int, length: float = 1.0) -> Mesh:
    """``n`` equal segments on ``[0, length]``."""
    if int(n) < 2:
        raise ValueError("interval mesh needs n >= 2")
    if not length > 0:
        raise ValueError("length must be positive")
    n = int(n)
    nodes = np.linspace(0.0, length, n + 1)[:, None]
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)]).astype(np.int64)
    boundary = np.zeros(n + 1, dtype=bool)
    boundary[[0, n]] = True
    return Mesh(nodes, elements, boundary)


@dataclass(frozen=True)
class IndexMap:
    """Interior-node numbering used by the solvers."""

    interior: np.ndarray  # solver index -> node index
    dof_of_node: np.ndarray  # node index -> solver index, -1 on the boundary

    @property
    def n_dofs(self) -> int:
        return len(self.interior)


def interior_dof_map(mesh: Mesh) -> IndexMap:
    interior = mesh.interior_nodes
    dof = np.full(mesh.n_nodes, -1, dtype=np.int64)
    dof[interior] = np.arange(len(interior))
    return IndexMap(interior, dof)


def write_mesh(mesh: Mesh, path) -> None:
    """Plain-text dump: a ``nodes N`` header, N coordinate rows, then an
    ``elements M`` header and M rows of node indices."""
    lines = [f"nodes {mesh.n_nodes}"]
    lines += [" ".join(repr(float(c)) for c in xy) for xy in mesh.nodes]
    lines.append(f"elements {mesh.n_elements}")
    lines += [" ".join(str(int(k)) for k in el) for el in mesh.elements]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    rows = Path(path).read_text().split("\n")
    n = int(rows[0].split()[1])
    nodes = np.array([[float(t) for t in r.split()] for r in rows[1:n + 1]])
    m = int(rows[n + 1].split()[1])
    elements = np.array([[int(t) for t in r.split()] for r in rows[n + 2:n + 2 + m]],
                        dtype=np.int64)
    lo, hi = nodes.min(axis=0), nodes.max(axis=0)
    boundary = np.any(np.isclose(nodes, lo) | np.isclose(nodes, hi), axis=1)
    return Mesh(nodes, elements, boundary)
