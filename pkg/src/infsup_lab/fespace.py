"""Scalar and vector Lagrange-type spaces on triangles, plus quadrature.

Supported local bases (per scalar component):

* ``P0``        -- one constant per triangle
* ``P1``        -- vertex hat functions
* ``P1_BUBBLE`` -- P1 enriched with the cubic bubble 27*l1*l2*l3
* ``P2``        -- six-node quadratic (vertices + edge midpoints)

Vector-valued spaces store dofs component-major: global dof
``c * n_scalar_dofs + scalar_dof`` for component c.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh, edge_table, triangle_grad_lambda


class UnsupportedDegree(ValueError):
    """Requested quadrature degree outside the implemented range."""


class ElementKind(enum.Enum):
    P0 = "p0"
    P1 = "p1"
    P1_DISC = "p1-disc"          # elementwise P1, no interelement continuity
    P1_BUBBLE = "p1-bubble"
    P2 = "p2"


LOCAL_DOFS = {
    ElementKind.P0: 1,
    ElementKind.P1: 3,
    ElementKind.P1_DISC: 3,
    ElementKind.P1_BUBBLE: 4,
    ElementKind.P2: 6,
}


# ---------------------------------------------------------------------------
# quadrature on the reference triangle (barycentric points, weights sum to 1)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    degree: int                  # highest polynomial degree integrated exactly
    points: np.ndarray           # (nq, 3) barycentric coordinates
    weights: np.ndarray          # (nq,) summing to one


def _rule_centroid() -> QuadratureRule:
    return QuadratureRule(1, np.array([[1.0, 1.0, 1.0]]) / 3.0, np.array([1.0]))


def _rule_midpoints() -> QuadratureRule:
    pts = np.array([[0.5, 0.5, 0.0],
                    [0.0, 0.5, 0.5],
                    [0.5, 0.0, 0.5]])
    return QuadratureRule(2, pts, np.full(3, 1.0 / 3.0))


def _expand_symmetric(a: float, w: float):
    """The three cyclic permutations of (a, b, b) with b = (1-a)/2."""
    b = 0.5 * (1.0 - a)
    pts = [(a, b, b), (b, a, b), (b, b, a)]
    return pts, [w] * 3


def _rule_six_point() -> QuadratureRule:
    pts, wts = [], []
    for a, w in [(0.108103018168070, 0.223381589678011),
                 (0.816847572980459, 0.109951743655322)]:
        p, ws = _expand_symmetric(a, w)
        pts += p
        wts += ws
    return QuadratureRule(4, np.array(pts), np.array(wts))


def _rule_twelve_point() -> QuadratureRule:
    pts, wts = [], []
    for a, w in [(0.501426509658179, 0.116786275726379),
                 (0.873821971016996, 0.050844906370207)]:
        p, ws = _expand_symmetric(a, w)
        pts += p
        wts += ws
    a, b, c = 0.053145049844816, 0.310352451033785, 0.636502499121399
    w = 0.082851075618374
    for perm in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]:
        pts.append(perm)
        wts.append(w)
    return QuadratureRule(6, np.array(pts), np.array(wts))


_RULES = None


def quadrature(degree: int) -> QuadratureRule:
    """Smallest stocked rule exact for polynomials of the given degree (max 6)."""
    global _RULES
    if _RULES is None:
        _RULES = (_rule_centroid(), _rule_midpoints(),
                  _rule_six_point(), _rule_twelve_point())
    if degree > 6 or degree < 0:
        raise UnsupportedDegree(f"no quadrature rule for degree {degree}")
    for rule in _RULES:
        if rule.degree >= degree:
            return rule
    raise UnsupportedDegree(f"no quadrature rule for degree {degree}")


# ---------------------------------------------------------------------------
# reference shape functions
# ---------------------------------------------------------------------------

def shape_values(kind: ElementKind, points) -> np.ndarray:
    """Basis values at barycentric ``points``; shape (..., n_local)."""
    lam = np.asarray(points, dtype=float)
    l1, l2, l3 = lam[..., 0], lam[..., 1], lam[..., 2]
    if kind is ElementKind.P0:
        vals = [np.ones_like(l1)]
    elif kind in (ElementKind.P1, ElementKind.P1_DISC):
        vals = [l1, l2, l3]
    elif kind is ElementKind.P1_BUBBLE:
        vals = [l1, l2, l3, 27.0 * l1 * l2 * l3]
    elif kind is ElementKind.P2:
        vals = [l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), l3 * (2 * l3 - 1),
                4 * l1 * l2, 4 * l2 * l3, 4 * l3 * l1]
    else:
        raise ValueError(f"unknown element kind {kind}")
    return np.stack(vals, axis=-1)


def shape_gradients_bary(kind: ElementKind, points) -> np.ndarray:
    """d(basis)/d(lambda) at barycentric ``points``; shape (..., n_local, 3).

    Multiply by a triangle's ``grad_lambda`` (3, 2) to get physical gradients.
    """
    lam = np.asarray(points, dtype=float)
    l1, l2, l3 = lam[..., 0], lam[..., 1], lam[..., 2]
    zero = np.zeros_like(l1)
    one = np.ones_like(l1)
    if kind is ElementKind.P0:
        rows = [[zero, zero, zero]]
    elif kind in (ElementKind.P1, ElementKind.P1_DISC):
        rows = [[one, zero, zero], [zero, one, zero], [zero, zero, one]]
    elif kind is ElementKind.P1_BUBBLE:
        rows = [[one, zero, zero], [zero, one, zero], [zero, zero, one],
                [27 * l2 * l3, 27 * l1 * l3, 27 * l1 * l2]]
    elif kind is ElementKind.P2:
        rows = [[4 * l1 - 1, zero, zero],
                [zero, 4 * l2 - 1, zero],
                [zero, zero, 4 * l3 - 1],
                [4 * l2, 4 * l1, zero],
                [zero, 4 * l3, 4 * l2],
                [4 * l3, zero, 4 * l1]]
    else:
        raise ValueError(f"unknown element kind {kind}")
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


# ---------------------------------------------------------------------------
# global spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeSpace:
    """Global dof management for one element kind on one mesh."""

    kind: ElementKind
    mesh: Mesh
    components: int
    n_scalar_dofs: int
    scalar_cell_dofs: np.ndarray   # (n_triangles, n_local)
    dof_coords: np.ndarray         # (n_scalar_dofs, 2)
    scalar_boundary_dofs: np.ndarray
    _edge_table: object = field(default=None, repr=False, compare=False)

    @property
    def n_dofs(self) -> int:
        return self.components * self.n_scalar_dofs

    @property
    def n_local(self) -> int:
        return LOCAL_DOFS[self.kind]

    @property
    def cell_dofs(self) -> np.ndarray:
        """(n_triangles, components * n_local), component-major."""
        blocks = [c * self.n_scalar_dofs + self.scalar_cell_dofs
                  for c in range(self.components)]
        return np.concatenate(blocks, axis=1)

    @property
    def boundary_dofs(self) -> np.ndarray:
        """Sorted global dofs whose basis functions are nonzero on the boundary."""
        blocks = [c * self.n_scalar_dofs + self.scalar_boundary_dofs
                  for c in range(self.components)]
        return np.sort(np.concatenate(blocks))

    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.boundary_dofs] = False
        return np.flatnonzero(mask)


def build_space(kind: ElementKind, mesh: Mesh, components: int = 1) -> FeSpace:
    if components not in (1, 2):
        raise ValueError("components must be 1 or 2")
    n_nodes = mesh.n_nodes
    n_tris = mesh.n_triangles
    boundary_nodes = np.unique(mesh.boundary_edges[:, :2])
    table = None

    if kind is ElementKind.P0:
        cell = np.arange(n_tris, dtype=np.int64)[:, None]
        coords = mesh.nodes[mesh.triangles].mean(axis=1)
        bdofs = np.zeros(0, dtype=np.int64)
        n_scalar = n_tris
    elif kind is ElementKind.P1:
        cell = mesh.triangles.copy()
        coords = mesh.nodes.copy()
        bdofs = boundary_nodes
        n_scalar = n_nodes
    elif kind is ElementKind.P1_DISC:
        cell = np.arange(3 * n_tris, dtype=np.int64).reshape(n_tris, 3)
        coords = mesh.nodes[mesh.triangles].reshape(-1, 2)
        bdofs = np.zeros(0, dtype=np.int64)       # purely L2-conforming
        n_scalar = 3 * n_tris
    elif kind is ElementKind.P1_BUBBLE:
        bubble = n_nodes + np.arange(n_tris, dtype=np.int64)
        cell = np.column_stack([mesh.triangles, bubble])
        coords = np.vstack([mesh.nodes, mesh.nodes[mesh.triangles].mean(axis=1)])
        bdofs = boundary_nodes           # the bubble vanishes on all edges
        n_scalar = n_nodes + n_tris
    elif kind is ElementKind.P2:
        table = edge_table(mesh)
        cell = np.column_stack([mesh.triangles, n_nodes + table.cell_edges])
        midpoints = mesh.nodes[table.edges].mean(axis=1)
        coords = np.vstack([mesh.nodes, midpoints])
        boundary_eids = np.flatnonzero(~table.interior_mask())
        bdofs = np.concatenate([boundary_nodes, n_nodes + boundary_eids])
        n_scalar = n_nodes + table.n_edges
    else:
        raise ValueError(f"unknown element kind {kind}")

    return FeSpace(kind=kind, mesh=mesh, components=components,
                   n_scalar_dofs=n_scalar, scalar_cell_dofs=cell,
                   dof_coords=coords, scalar_boundary_dofs=np.sort(bdofs),
                   _edge_table=table)


# ---------------------------------------------------------------------------
# evaluation helpers
# ---------------------------------------------------------------------------

def barycentric(mesh: Mesh, t: int, x) -> np.ndarray:
    """Barycentric coordinates of physical point ``x`` in triangle ``t``."""
    from .mesh import geometry
    g = geometry(mesh, t)
    p = mesh.nodes[mesh.triangles[t]]
    x = np.asarray(x, dtype=float)
    return np.array([1.0 + g.grad_lambda[k] @ (x - p[k]) for k in range(3)])


def evaluate(space: FeSpace, coeffs, t: int, bary) -> np.ndarray:
    """Value of the discrete function at a barycentric point of triangle t.

    Returns a scalar for 1-component spaces, else an array of length
    ``components``.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    vals = shape_values(space.kind, bary)
    local = coeffs[space.cell_dofs[t]].reshape(space.components, space.n_local)
    out = local @ vals
    return out[0] if space.components == 1 else out


def fields_at_quadrature(space: FeSpace, coeffs, rule: QuadratureRule):
    """Values and physical gradients at all quadrature points of all cells.

    Returns ``(points, values, gradients)`` with shapes
    ``(T, nq, 2)``, ``(T, nq, components)`` and ``(T, nq, components, 2)``.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    mesh = space.mesh
    corners = mesh.nodes[mesh.triangles]                      # (T, 3, 2)
    points = np.einsum("qk,tkd->tqd", rule.points, corners)
    vals = shape_values(space.kind, rule.points)              # (nq, nb)
    gl = triangle_grad_lambda(mesh)                           # (T, 3, 2)
    grads = np.einsum("qbl,tld->tqbd",
                      shape_gradients_bary(space.kind, rule.points), gl)
    local = coeffs[space.cell_dofs].reshape(
        mesh.n_triangles, space.components, space.n_local)    # (T, c, nb)
    values = np.einsum("qb,tcb->tqc", vals, local)
    gradients = np.einsum("tqbd,tcb->tqcd", grads, local)
    return points, values, gradients
