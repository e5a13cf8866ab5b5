"""Structured triangulations of the unit square.

The mesh splits an n×n grid of cells into two triangles each along the
lower-left to upper-right diagonal.  Triangles are counterclockwise, so all
signed areas are positive, and boundary edges keep the orientation of their
owning triangle, which puts the outward normal on the right-hand side of the
directed edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """Triangulation of the unit square.

    ``boundary_edges`` rows are ``(node_a, node_b, owner_triangle)`` with the
    edge directed counterclockwise around the domain.  ``h`` is the common
    element diameter (the diagonal, sqrt(2)/n).
    """

    n: int
    nodes: np.ndarray            # (n_nodes, 2)
    triangles: np.ndarray        # (n_triangles, 3) int, CCW
    boundary_edges: np.ndarray   # (n_boundary_edges, 3) int
    h: float

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)


@dataclass(frozen=True)
class TriangleGeometry:
    area: float
    grad_lambda: np.ndarray      # (3, 2) gradients of the barycentric coords
    diameter: float


@dataclass(frozen=True)
class EdgeTable:
    """Unique undirected edges with triangle adjacency.

    ``cell_edges[t, k]`` is the edge id of local edge k of triangle t in the
    order (v0,v1), (v1,v2), (v2,v0).  ``edge_tris`` holds up to two adjacent
    triangles per edge (-1 when absent); interior edges have exactly two.
    """

    edges: np.ndarray            # (n_edges, 2) int, each row sorted
    cell_edges: np.ndarray       # (n_triangles, 3) int
    edge_tris: np.ndarray        # (n_edges, 2) int

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def interior_mask(self) -> np.ndarray:
        return self.edge_tris[:, 1] >= 0


def unit_square_mesh(n: int) -> Mesh:
    """Uniform triangulation with ``(n+1)^2`` nodes and ``2 n^2`` triangles."""
    if n < 1:
        raise ValueError("need at least one cell per side")
    side = n + 1
    xs = np.linspace(0.0, 1.0, side)
    xg, yg = np.meshgrid(xs, xs, indexing="xy")
    nodes = np.column_stack([xg.ravel(), yg.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i = i.ravel()
    j = j.ravel()
    a = j * side + i            # lower-left corner of cell (i, j)
    b = a + 1
    c = b + side
    d = a + side
    lower = np.column_stack([a, b, c])
    upper = np.column_stack([a, c, d])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    boundary = _boundary_edges(triangles)
    return Mesh(n=n, nodes=nodes, triangles=triangles,
                boundary_edges=boundary, h=float(np.sqrt(2.0) / n))


def _boundary_edges(triangles: np.ndarray) -> np.ndarray:
    """Directed edges whose undirected pair occurs exactly once."""
    t = len(triangles)
    directed = np.empty((3 * t, 2), dtype=np.int64)
    directed[0::3] = triangles[:, [0, 1]]
    directed[1::3] = triangles[:, [1, 2]]
    directed[2::3] = triangles[:, [2, 0]]
    owner = np.repeat(np.arange(t, dtype=np.int64), 3)

    undirected = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(undirected, axis=0,
                                   return_inverse=True, return_counts=True)
    once = counts[inverse] == 1
    rows = np.column_stack([directed[once], owner[once]])
    order = np.lexsort((rows[:, 1], rows[:, 0]))
    return rows[order]


def edge_table(mesh: Mesh) -> EdgeTable:
    t = mesh.n_triangles
    directed = np.empty((3 * t, 2), dtype=np.int64)
    directed[0::3] = mesh.triangles[:, [0, 1]]
    directed[1::3] = mesh.triangles[:, [1, 2]]
    directed[2::3] = mesh.triangles[:, [2, 0]]
    undirected = np.sort(directed, axis=1)
    edges, inverse = np.unique(undirected, axis=0, return_inverse=True)
    cell_edges = inverse.reshape(t, 3)

    edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
    owner = np.repeat(np.arange(t, dtype=np.int64), 3)
    # fill first then second slot, keeping triangle order deterministic
    for eid, tri in zip(inverse, owner):
        if edge_tris[eid, 0] < 0:
            edge_tris[eid, 0] = tri
        else:
            edge_tris[eid, 1] = tri
    return EdgeTable(edges=edges, cell_edges=cell_edges, edge_tris=edge_tris)


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def triangle_areas(mesh: Mesh) -> np.ndarray:
    p = mesh.nodes[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def triangle_grad_lambda(mesh: Mesh) -> np.ndarray:
    """Barycentric gradients for every triangle, shape (n_triangles, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    areas = triangle_areas(mesh)
    out = np.empty((mesh.n_triangles, 3, 2))
    for k in range(3):
        pj = p[:, (k + 1) % 3]
        pk = p[:, (k + 2) % 3]
        out[:, k, 0] = pj[:, 1] - pk[:, 1]
        out[:, k, 1] = pk[:, 0] - pj[:, 0]
    out /= (2.0 * areas)[:, None, None]
    return out


def triangle_diameters(mesh: Mesh) -> np.ndarray:
    p = mesh.nodes[mesh.triangles]
    l01 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    l12 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
    l20 = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
    return np.max(np.column_stack([l01, l12, l20]), axis=1)


def geometry(mesh: Mesh, t: int) -> TriangleGeometry:
    """Area, barycentric gradients and diameter of one triangle."""
    p = mesh.nodes[mesh.triangles[t]]
    d1 = p[1] - p[0]
    d2 = p[2] - p[0]
    area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
    if area <= 0.0:
        raise ValueError(f"triangle {t} is degenerate or not CCW")
    grad = np.empty((3, 2))
    for k in range(3):
        pj = p[(k + 1) % 3]
        pk = p[(k + 2) % 3]
        grad[k] = (pj[1] - pk[1], pk[0] - pj[0])
    grad /= 2.0 * area
    diam = max(np.linalg.norm(p[1] - p[0]),
               np.linalg.norm(p[2] - p[1]),
               np.linalg.norm(p[0] - p[2]))
    return TriangleGeometry(area=float(area), grad_lambda=grad,
                            diameter=float(diam))


def boundary_edge_geometry(mesh: Mesh):
    """Per boundary edge: length, outward unit normal, midpoint.

    Returns ``(lengths, normals, midpoints)`` arrays aligned with
    ``mesh.boundary_edges`` rows.
    """
    a = mesh.nodes[mesh.boundary_edges[:, 0]]
    b = mesh.nodes[mesh.boundary_edges[:, 1]]
    d = b - a
    lengths = np.linalg.norm(d, axis=1)
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]
    midpoints = 0.5 * (a + b)
    return lengths, normals, midpoints
