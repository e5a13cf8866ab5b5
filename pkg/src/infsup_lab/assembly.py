"""Finite element operator assembly on the unit-square meshes.

All volume operators integrate with the 6-point degree-4 rule by default,
which is exact for every form assembled here (the highest-order integrand is
the quartic bubble-gradient product), so re-assembling with a higher-degree
rule must reproduce the same matrices to round-off.  Boundary operators are
specific to scalar P1 spaces, the only case the weak-boundary machinery
needs, and integrate edgewise with 2-point Gauss.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fespace import (
    ElementKind,
    FeSpace,
    QuadratureRule,
    quadrature,
    shape_gradients_bary,
    shape_values,
)
from .linalg import CsrMatrix, NotPositiveDefinite, csr_from_arrays
from .mesh import (
    Mesh,
    boundary_edge_geometry,
    triangle_areas,
    triangle_diameters,
    triangle_grad_lambda,
)

DEFAULT_DEGREE = 4


def _quad_weights(mesh: Mesh, rule: QuadratureRule,
                  cell_weights=None) -> np.ndarray:
    """(T, nq) physical quadrature weights, optionally scaled per cell."""
    w = np.outer(triangle_areas(mesh), rule.weights)
    if cell_weights is not None:
        w = w * np.asarray(cell_weights, dtype=float)[:, None]
    return w


def _phys_gradients(space: FeSpace, rule: QuadratureRule) -> np.ndarray:
    """(T, nq, n_local, 2) physical basis gradients."""
    ref = shape_gradients_bary(space.kind, rule.points)       # (nq, nb, 3)
    return np.einsum("qbl,tld->tqbd", ref, triangle_grad_lambda(space.mesh))


def _scatter(rows_cells: np.ndarray, cols_cells: np.ndarray,
             locals_: np.ndarray, n_rows: int, n_cols: int) -> CsrMatrix:
    """Accumulate per-cell local matrices (T, nr, nc) into a CSR matrix."""
    t, nr, nc = locals_.shape
    i = np.repeat(rows_cells[:, :, None], nc, axis=2)
    j = np.repeat(cols_cells[:, None, :], nr, axis=1)
    return csr_from_arrays(n_rows, n_cols, i.ravel(), j.ravel(), locals_.ravel())


def _expand_components(scalar: CsrMatrix, components: int,
                       n_row_scalar: int, n_col_scalar: int) -> CsrMatrix:
    """Block-diagonal replication of a scalar operator over components."""
    if components == 1:
        return scalar
    counts = np.diff(scalar.row_ptr)
    row_of = np.repeat(np.arange(scalar.rows), counts)
    i = np.concatenate([row_of + c * n_row_scalar for c in range(components)])
    j = np.concatenate([scalar.col_idx + c * n_col_scalar
                        for c in range(components)])
    v = np.tile(scalar.values, components)
    return csr_from_arrays(components * n_row_scalar,
                           components * n_col_scalar, i, j, v)


# ---------------------------------------------------------------------------
# volume operators
# ---------------------------------------------------------------------------

def stiffness(space: FeSpace, degree: int = DEFAULT_DEGREE,
              cell_weights=None) -> CsrMatrix:
    """(grad u, grad v), block-diagonal over components for vector spaces."""
    rule = quadrature(degree)
    w = _quad_weights(space.mesh, rule, cell_weights)
    g = _phys_gradients(space, rule)
    locals_ = np.einsum("tq,tqbd,tqcd->tbc", w, g, g)
    ns = space.n_scalar_dofs
    scalar = _scatter(space.scalar_cell_dofs, space.scalar_cell_dofs,
                      locals_, ns, ns)
    return _expand_components(scalar, space.components, ns, ns)


def mass(space: FeSpace, degree: int = DEFAULT_DEGREE,
         cell_weights=None) -> CsrMatrix:
    """(u, v), block-diagonal over components for vector spaces."""
    rule = quadrature(degree)
    w = _quad_weights(space.mesh, rule, cell_weights)
    v = shape_values(space.kind, rule.points)                 # (nq, nb)
    locals_ = np.einsum("tq,qb,qc->tbc", w, v, v)
    ns = space.n_scalar_dofs
    scalar = _scatter(space.scalar_cell_dofs, space.scalar_cell_dofs,
                      locals_, ns, ns)
    return _expand_components(scalar, space.components, ns, ns)


def cross_mass(row_space: FeSpace, col_space: FeSpace,
               degree: int = DEFAULT_DEGREE) -> CsrMatrix:
    """``(phi^col_j, phi^row_i)`` between two spaces on the same mesh."""
    if row_space.mesh is not col_space.mesh:
        raise ValueError("cross_mass needs both spaces on one mesh")
    if row_space.components != col_space.components:
        raise ValueError("cross_mass needs matching component counts")
    rule = quadrature(degree)
    w = _quad_weights(row_space.mesh, rule)
    va = shape_values(row_space.kind, rule.points)
    vb = shape_values(col_space.kind, rule.points)
    locals_ = np.einsum("tq,qb,qc->tbc", w, va, vb)
    na, nb = row_space.n_scalar_dofs, col_space.n_scalar_dofs
    parts = None
    for c in range(row_space.components):
        part = _scatter(row_space.scalar_cell_dofs + c * na,
                        col_space.scalar_cell_dofs + c * nb,
                        locals_, na * row_space.components,
                        nb * col_space.components)
        parts = part if parts is None else parts.add(part)
    return parts


def lumped_mass(space: FeSpace, degree: int = DEFAULT_DEGREE) -> np.ndarray:
    """Row sums of the consistent mass as a strictly positive diagonal."""
    diag = mass(space, degree).matvec(np.ones(space.n_dofs))
    if np.any(diag <= 1e-12 * diag.max()):
        raise NotPositiveDefinite(
            f"lumped mass for {space.kind.value} has non-positive entries")
    return diag


def divergence(v_space: FeSpace, p_space: FeSpace,
               degree: int = DEFAULT_DEGREE) -> CsrMatrix:
    """Constraint block ``B[q, v] = -(psi_q, div phi_v)``."""
    if v_space.components != 2 or p_space.components != 1:
        raise ValueError("divergence couples a vector velocity with a "
                         "scalar pressure")
    rule = quadrature(degree)
    mesh = v_space.mesh
    w = _quad_weights(mesh, rule)
    pv = shape_values(p_space.kind, rule.points)              # (nq, np)
    gv = _phys_gradients(v_space, rule)                       # (T, nq, nv, 2)
    n_p, n_v = p_space.n_dofs, v_space.n_dofs
    parts = []
    for c in range(2):
        locals_ = -np.einsum("tq,qb,tqv->tbv", w, pv, gv[..., c])
        cols = v_space.scalar_cell_dofs + c * v_space.n_scalar_dofs
        parts.append(_scatter(p_space.scalar_cell_dofs, cols,
                              locals_, n_p, n_v))
    return parts[0].add(parts[1])


def grad_coupling(v_space: FeSpace, p_space: FeSpace,
                  degree: int = DEFAULT_DEGREE) -> CsrMatrix:
    """Vector-to-gradient coupling ``G[v, p] = (phi_v, grad psi_p)``."""
    if v_space.components != 2 or p_space.components != 1:
        raise ValueError("grad_coupling couples a vector space with a "
                         "scalar space")
    rule = quadrature(degree)
    mesh = v_space.mesh
    w = _quad_weights(mesh, rule)
    vv = shape_values(v_space.kind, rule.points)              # (nq, nv)
    gp = _phys_gradients(p_space, rule)                       # (T, nq, np, 2)
    n_v, n_p = v_space.n_dofs, p_space.n_dofs
    parts = []
    for c in range(2):
        locals_ = np.einsum("tq,qb,tqp->tbp", w, vv, gp[..., c])
        rows = v_space.scalar_cell_dofs + c * v_space.n_scalar_dofs
        parts.append(_scatter(rows, p_space.scalar_cell_dofs,
                              locals_, n_v, n_p))
    return parts[0].add(parts[1])


def pressure_grad_stab(p_space: FeSpace, cell_weights=None,
                       degree: int = DEFAULT_DEGREE) -> CsrMatrix:
    """Elementwise weighted pressure-gradient form, default weights h_K^2."""
    if cell_weights is None:
        cell_weights = triangle_diameters(p_space.mesh) ** 2
    return stiffness(p_space, degree, cell_weights)


def load_vector(space: FeSpace, func, degree: int = DEFAULT_DEGREE,
                cell_weights=None) -> np.ndarray:
    """Right-hand side ``(f, phi_i)`` for a callable ``func`` of positions.

    ``func`` receives an (..., 2) array of points and must return values of
    shape (...) for scalar spaces or (..., 2) for vector spaces.
    """
    rule = quadrature(degree)
    mesh = space.mesh
    w = _quad_weights(mesh, rule, cell_weights)
    pts = np.einsum("qk,tkd->tqd", rule.points, mesh.nodes[mesh.triangles])
    fv = np.asarray(func(pts), dtype=float)
    v = shape_values(space.kind, rule.points)
    out = np.zeros(space.n_dofs)
    if space.components == 1:
        if fv.shape != pts.shape[:2]:
            raise ValueError("scalar load callable returned a wrong shape")
        locals_ = np.einsum("tq,tq,qb->tb", w, fv, v)
        np.add.at(out, space.scalar_cell_dofs, locals_)
    else:
        fv = np.broadcast_to(fv, pts.shape)
        for c in range(2):
            locals_ = np.einsum("tq,tq,qb->tb", w, fv[..., c], v)
            np.add.at(out, space.scalar_cell_dofs + c * space.n_scalar_dofs,
                      locals_)
    return out


def gradient_load(space: FeSpace, func, cell_weights=None,
                  degree: int = DEFAULT_DEGREE) -> np.ndarray:
    """Gradient-tested load ``sum_K w_K (f, grad psi_i)_K`` for scalar spaces.

    ``func`` must return vector values of shape (..., 2).
    """
    if space.components != 1:
        raise ValueError("gradient_load expects a scalar test space")
    rule = quadrature(degree)
    mesh = space.mesh
    w = _quad_weights(mesh, rule, cell_weights)
    pts = np.einsum("qk,tkd->tqd", rule.points, mesh.nodes[mesh.triangles])
    fv = np.broadcast_to(np.asarray(func(pts), dtype=float), pts.shape)
    g = _phys_gradients(space, rule)
    locals_ = np.einsum("tq,tqd,tqbd->tb", w, fv, g)
    out = np.zeros(space.n_dofs)
    np.add.at(out, space.scalar_cell_dofs, locals_)
    return out


# ---------------------------------------------------------------------------
# boundary operators (scalar P1 only)
# ---------------------------------------------------------------------------

#: 2-point Gauss rule on [0, 1]
_EDGE_GAUSS_S = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_EDGE_GAUSS_W = np.array([0.5, 0.5])


def _check_boundary_space(space: FeSpace) -> None:
    if space.kind is not ElementKind.P1 or space.components != 1:
        raise ValueError("boundary operators are implemented for scalar P1 "
                         "spaces only")


def _edge_data(space: FeSpace):
    mesh = space.mesh
    lengths, normals, _ = boundary_edge_geometry(mesh)
    edges = mesh.boundary_edges
    # per edge: constant normal derivative of each owner-triangle hat function
    gl = triangle_grad_lambda(mesh)[edges[:, 2]]              # (E, 3, 2)
    flux = np.einsum("ekd,ed->ek", gl, normals)               # (E, 3)
    tri_nodes = mesh.triangles[edges[:, 2]]                   # (E, 3)
    return edges, lengths, normals, flux, tri_nodes


def boundary_mass(space: FeSpace, edge_weights=None) -> CsrMatrix:
    """``sum_E w_E int_E u v`` over boundary edges, full dof indexing."""
    _check_boundary_space(space)
    edges, lengths, _, _, _ = _edge_data(space)
    w = lengths if edge_weights is None else lengths * np.asarray(edge_weights)
    local = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])
    locals_ = w[:, None, None] * local
    n = space.n_dofs
    return _scatter(edges[:, :2], edges[:, :2], locals_, n, n)


def boundary_normal_flux(space: FeSpace, edge_weights=None) -> CsrMatrix:
    """``sum_E w_E int_E (du/dn) v`` -- test function on trace rows."""
    _check_boundary_space(space)
    edges, lengths, _, flux, tri_nodes = _edge_data(space)
    w = lengths if edge_weights is None else lengths * np.asarray(edge_weights)
    # int_E phi_i = |E|/2 for both endpoint hats; du/dn is constant
    locals_ = np.broadcast_to(0.5 * w[:, None, None] * flux[:, None, :],
                              (len(edges), 2, 3))
    n = space.n_dofs
    return _scatter(edges[:, :2], tri_nodes, locals_, n, n)


def boundary_flux_flux(space: FeSpace, edge_weights=None) -> CsrMatrix:
    """``sum_E w_E int_E (du/dn)(dv/dn)`` over boundary edges."""
    _check_boundary_space(space)
    edges, lengths, _, flux, tri_nodes = _edge_data(space)
    w = lengths if edge_weights is None else lengths * np.asarray(edge_weights)
    locals_ = w[:, None, None] * flux[:, :, None] * flux[:, None, :]
    n = space.n_dofs
    return _scatter(tri_nodes, tri_nodes, locals_, n, n)


def boundary_load(space: FeSpace, func, edge_weights=None,
                  flux_test: bool = False) -> np.ndarray:
    """``sum_E w_E int_E d v`` (or ``d dv/dn`` with ``flux_test``)."""
    _check_boundary_space(space)
    mesh = space.mesh
    edges, lengths, _, flux, tri_nodes = _edge_data(space)
    w = lengths if edge_weights is None else lengths * np.asarray(edge_weights)
    a = mesh.nodes[edges[:, 0]]
    b = mesh.nodes[edges[:, 1]]
    pts = a[:, None, :] + _EDGE_GAUSS_S[None, :, None] * (b - a)[:, None, :]
    dv = np.asarray(func(pts), dtype=float)                   # (E, 2)
    out = np.zeros(space.n_dofs)
    if flux_test:
        edge_integrals = np.einsum("e,eg,g->e", w, dv, _EDGE_GAUSS_W)
        np.add.at(out, tri_nodes, edge_integrals[:, None] * flux)
    else:
        shape = np.stack([1.0 - _EDGE_GAUSS_S, _EDGE_GAUSS_S], axis=1)  # (2, 2)
        locals_ = np.einsum("e,eg,g,gk->ek", w, dv, _EDGE_GAUSS_W, shape)
        np.add.at(out, edges[:, :2], locals_)
    return out


@dataclass(frozen=True)
class BoundaryOperators:
    """Bundle of boundary matrices for weak Dirichlet formulations.

    All matrices use the full scalar dof indexing; rows/columns supported on
    interior dofs are identically zero.  ``penalty`` is the gamma-weighted
    edgewise (1/h_E)-scaled boundary mass.
    """

    trace_dofs: np.ndarray
    edge_lengths: np.ndarray
    mass: CsrMatrix
    normal_flux: CsrMatrix
    flux_flux: CsrMatrix
    penalty: CsrMatrix


def boundary_operators(space: FeSpace, gamma_coeff: float = 1.0) -> BoundaryOperators:
    _check_boundary_space(space)
    lengths, _, _ = boundary_edge_geometry(space.mesh)
    return BoundaryOperators(
        trace_dofs=space.boundary_dofs.copy(),
        edge_lengths=lengths,
        mass=boundary_mass(space),
        normal_flux=boundary_normal_flux(space),
        flux_flux=boundary_flux_flux(space),
        penalty=boundary_mass(space, gamma_coeff / lengths),
    )


# ---------------------------------------------------------------------------
# saddle-point container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SaddleSystem:
    """Two-field saddle system with optional stabilization and mean constraint.

    The assembled block form is::

        [ a            b^T        0 ] [u]   [f]
        [ s*b         -s*c        m ] [p] = [g]
        [ 0            m^T        0 ] [mu]  [0]

    with ``s = pressure_row_sign`` (-1 only for the one intentionally
    asymmetric method) and the mean row/column present when ``mean_vector``
    is set.  ``c`` is positive semidefinite for every symmetric method.
    """

    a: CsrMatrix
    b: CsrMatrix
    c: CsrMatrix | None
    f: np.ndarray
    g: np.ndarray
    mean_vector: np.ndarray | None
    dirichlet_dofs: np.ndarray
    pressure_row_sign: float = 1.0
    spaces: tuple | None = None      # (velocity space, pressure space)

    @property
    def n_u(self) -> int:
        return self.a.rows

    @property
    def n_p(self) -> int:
        return self.b.rows

    @property
    def n_total(self) -> int:
        extra = 0 if self.mean_vector is None else 1
        return self.n_u + self.n_p + extra

    def full_matrix(self) -> np.ndarray:
        nu, np_ = self.n_u, self.n_p
        s = self.pressure_row_sign
        k = np.zeros((self.n_total, self.n_total))
        bd = self.b.to_dense()
        k[:nu, :nu] = self.a.to_dense()
        k[:nu, nu:nu + np_] = bd.T
        k[nu:nu + np_, :nu] = s * bd
        if self.c is not None:
            k[nu:nu + np_, nu:nu + np_] = -s * self.c.to_dense()
        if self.mean_vector is not None:
            k[nu:nu + np_, -1] = self.mean_vector
            k[-1, nu:nu + np_] = self.mean_vector
        return k

    def full_rhs(self) -> np.ndarray:
        rhs = np.concatenate([self.f, self.g])
        if self.mean_vector is not None:
            rhs = np.append(rhs, 0.0)
        return rhs


def _zero_rows_cols(a: CsrMatrix, dofs: np.ndarray,
                    unit_diagonal: bool) -> CsrMatrix:
    counts = np.diff(a.row_ptr)
    row_of = np.repeat(np.arange(a.rows), counts)
    drop = np.isin(row_of, dofs) | np.isin(a.col_idx, dofs)
    i = row_of[~drop]
    j = a.col_idx[~drop]
    v = a.values[~drop]
    if unit_diagonal:
        i = np.concatenate([i, dofs])
        j = np.concatenate([j, dofs])
        v = np.concatenate([v, np.ones(len(dofs))])
    return csr_from_arrays(a.rows, a.cols, i, j, v)


def _zero_cols(b: CsrMatrix, dofs: np.ndarray) -> CsrMatrix:
    counts = np.diff(b.row_ptr)
    row_of = np.repeat(np.arange(b.rows), counts)
    drop = np.isin(b.col_idx, dofs)
    return csr_from_arrays(b.rows, b.cols, row_of[~drop],
                           b.col_idx[~drop], b.values[~drop])


def apply_dirichlet(system: SaddleSystem, dofs, values=0.0) -> SaddleSystem:
    """Eliminate velocity Dirichlet dofs symmetrically.

    Constrained rows of ``a`` become identity rows with the prescribed value
    on the right-hand side; coupling columns move to the right-hand side.
    """
    dofs = np.asarray(dofs, dtype=np.int64)
    vals = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    x_bc = np.zeros(system.n_u)
    x_bc[dofs] = vals

    f = system.f - system.a.matvec(x_bc)
    f[dofs] = vals
    g = system.g - system.pressure_row_sign * system.b.matvec(x_bc)

    return replace(system,
                   a=_zero_rows_cols(system.a, dofs, unit_diagonal=True),
                   b=_zero_cols(system.b, dofs),
                   f=f, g=g,
                   dirichlet_dofs=np.unique(
                       np.concatenate([system.dirichlet_dofs, dofs])))
