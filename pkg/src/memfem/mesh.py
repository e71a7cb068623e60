"""Interval partitions, structured triangulations of the unit square, and
degree-of-freedom maps.

All meshes are exactly uniform and deterministically numbered: vertices
in lexicographic grid order, triangles cell by cell (each square cell
split along its SW-NE diagonal), and edges in first-seen order while
walking the triangles.  Edge orientation is global and fixed as
low vertex index -> high vertex index; lowest-order Raviart-Thomas basis
signs derive from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = [
    "Mesh1D",
    "TriMesh",
    "DofMap",
    "uniform_mesh1d",
    "structured_unit_square",
    "build_dofmap",
]


@dataclass(frozen=True)
class Mesh1D:
    """Partition of [0, L] into intervals (x_{i-1}, x_i)."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = self.nodes
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("Mesh1D needs at least two nodes")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("Mesh1D nodes must be strictly increasing")

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def length(self) -> float:
        return float(self.nodes[-1])

    @property
    def h(self) -> float:
        return float(np.max(np.diff(self.nodes)))

    @property
    def cell_lengths(self) -> np.ndarray:
        return np.diff(self.nodes)


def uniform_mesh1d(L: float, n: int) -> Mesh1D:
    """Equispaced mesh with ``n`` elements on [0, L].

    Nodes are computed as ``L*i/n`` so that doubling ``n`` reproduces the
    old nodes bitwise (refinement nesting).
    """
    if n < 1:
        raise ValueError(f"need at least one element, got n={n}")
    if not L > 0.0:
        raise ValueError(f"length must be positive, got L={L}")
    nodes = L * np.arange(n + 1, dtype=float) / n
    return Mesh1D(nodes=nodes)


class TriMesh:
    """Conforming triangulation with globally oriented edges.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise vertex triples
    edges : (ne, 2) int array, each row (a, b) with a < b
    tri_edges : (nt, 3) int array, global edge of each local edge; local
        edge ``l`` of a triangle is the one opposite local vertex ``l``
    tri_edge_signs : (nt, 3) int array, +1 when the triangle's outward
        normal on that edge agrees with the global edge normal
    areas : (nt,) float array
    boundary_edge : (ne,) bool array
    """

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=int)

        p = self.vertices
        t = self.triangles
        d1 = p[t[:, 1]] - p[t[:, 0]]
        d2 = p[t[:, 2]] - p[t[:, 0]]
        cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(cross <= 0.0):
            raise ValueError("triangles must be counterclockwise")
        self.areas = 0.5 * cross

        edge_index: dict[tuple[int, int], int] = {}
        tri_edges = np.empty_like(t)
        tri_signs = np.empty_like(t)
        edge_count: list[int] = []
        for k in range(t.shape[0]):
            for loc in range(3):
                a = int(t[k, (loc + 1) % 3])
                b = int(t[k, (loc + 2) % 3])
                key = (a, b) if a < b else (b, a)
                idx = edge_index.get(key)
                if idx is None:
                    idx = len(edge_index)
                    edge_index[key] = idx
                    edge_count.append(0)
                edge_count[idx] += 1
                tri_edges[k, loc] = idx
                # CCW traversal of edge loc runs a -> b; the global
                # orientation runs low -> high vertex index
                tri_signs[k, loc] = 1 if a < b else -1
        self.edges = np.array(list(edge_index.keys()), dtype=int)
        self.tri_edges = tri_edges
        self.tri_edge_signs = tri_signs
        counts = np.array(edge_count)
        if np.any(counts > 2):
            raise ValueError("non-conforming mesh: edge shared by > 2 triangles")
        self.boundary_edge = counts == 1

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def edge_lengths(self) -> np.ndarray:
        vec = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(vec[:, 0], vec[:, 1])

    def dump(self) -> str:
        """Plain-text vertex/element listing for debugging."""
        lines = [f"vertices {self.n_vertices}"]
        lines += [f"  {i} {x:.17g} {y:.17g}"
                  for i, (x, y) in enumerate(self.vertices)]
        lines.append(f"triangles {self.n_triangles}")
        lines += [f"  {k} {a} {b} {c}"
                  for k, (a, b, c) in enumerate(self.triangles)]
        lines.append(f"edges {self.n_edges}")
        lines += [f"  {e} {a} {b}" for e, (a, b) in enumerate(self.edges)]
        return "\n".join(lines)


def structured_unit_square(m: int) -> TriMesh:
    """Structured triangulation of the unit square, ``2*m*m`` triangles.

    Each of the ``m x m`` cells is split along its SW-NE diagonal.  The
    mesh size (longest edge) is ``sqrt(2)/m``.
    """
    if m < 1:
        raise ValueError(f"need at least one division per side, got m={m}")
    side = np.arange(m + 1, dtype=float) / m
    xx, yy = np.meshgrid(side, side, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (m + 1) + i

    tris = []
    for j in range(m):
        for i in range(m):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return TriMesh(vertices, np.array(tris, dtype=int))


_VALID_1D = ("P1_continuous", "P0_discontinuous")
_VALID_2D = ("RT0", "P0_tri")


@dataclass(frozen=True)
class DofMap:
    """Entity-to-global-index table for one discrete space."""

    space: str
    n_dofs: int
    entity_to_dof: np.ndarray

    def __post_init__(self):
        if self.entity_to_dof.size != self.n_dofs:
            raise ValueError("entity table size mismatch")


def build_dofmap(mesh, space: str) -> DofMap:
    """Degree-of-freedom map for ``space`` on ``mesh``.

    1D meshes support continuous P1 (one dof per node) and discontinuous
    P0 (one per element); triangulations support RT0 (one per edge) and
    elementwise constants (one per triangle).
    """
    if isinstance(mesh, Mesh1D):
        if space == "P1_continuous":
            n = mesh.nodes.size
        elif space == "P0_discontinuous":
            n = mesh.n_elements
        else:
            raise ConfigError(f"space {space!r} is not defined on 1D meshes")
    elif isinstance(mesh, TriMesh):
        if space == "RT0":
            n = mesh.n_edges
        elif space == "P0_tri":
            n = mesh.n_triangles
        else:
            raise ConfigError(f"space {space!r} is not defined on triangulations")
    else:
        raise ConfigError(f"unsupported mesh type {type(mesh).__name__}")
    return DofMap(space=space, n_dofs=n, entity_to_dof=np.arange(n))
