"""Stokes discretizations on the unit square with homogeneous no-slip walls.

Every method assembles the block system ``[[A, B^T], [B, -C]]`` with
``B[q, v] = -(psi_q, div phi_v)`` and a pressure-mean constraint appended as
an extra symmetric row/column.  The stabilized P1/P1 variants differ only in
the pressure-pressure block ``C`` (and, for the residual-based pair, a
pressure-space contribution to the right-hand side):

* ``p1p1-plain``        C = 0 (unstable; kept to exhibit the failure)
* ``p1p1-loss``         C = h^2 (S0 - G^T M_L^{-1} G), the mass-lumped
                        elimination of an auxiliary projected-gradient field
* ``brezzi-pitkaranta`` C = eps h^2 S0
* ``galerkin-ls``       C = eps sum_K h_K^2 (grad p, grad q)_K plus the
                        matching -eps h_K^2 (f, grad q)_K load
* ``douglas-wang``      like galerkin-ls but with first-power h_K weights and
                        a flipped constraint-row sign, which makes the
                        assembled system intentionally asymmetric
* ``taylor-hood``       P2/P1, C = 0
* ``mini``              P1+bubble / P1, C = 0
* ``p2p0``              P2/P0, C = 0
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import (
    SaddleSystem,
    apply_dirichlet,
    divergence,
    grad_coupling,
    gradient_load,
    load_vector,
    lumped_mass,
    pressure_grad_stab,
    stiffness,
)
from .fespace import ElementKind, FeSpace, build_space, fields_at_quadrature, quadrature
from .linalg import csr_from_arrays, lu_solve
from .mesh import (
    Mesh,
    boundary_edge_geometry,
    edge_table,
    triangle_areas,
    triangle_diameters,
    triangle_grad_lambda,
)


class UnsupportedCombination(ValueError):
    """Requested method or element pairing is not implemented."""


_EPS_METHODS = ("brezzi-pitkaranta", "galerkin-ls", "douglas-wang")
_PLAIN_METHODS = ("p1p1-plain", "p1p1-loss", "taylor-hood", "mini", "p2p0")
DEFAULT_EPS = 0.05

_ALIASES = {"bp": "brezzi-pitkaranta", "gls": "galerkin-ls",
            "dw": "douglas-wang", "th": "taylor-hood"}


@dataclass(frozen=True)
class StokesMethod:
    """A named discretization, with stabilization weight where applicable."""

    name: str
    eps: float | None = None

    def __post_init__(self):
        if self.name in _EPS_METHODS:
            if self.eps is None or self.eps <= 0.0:
                raise ValueError(f"{self.name} needs eps > 0")
        elif self.name in _PLAIN_METHODS:
            if self.eps is not None:
                raise ValueError(f"{self.name} takes no eps parameter")
        else:
            raise UnsupportedCombination(f"unknown Stokes method {self.name!r}")

    @property
    def symmetric(self) -> bool:
        return self.name != "douglas-wang"


def method_from_name(name: str, eps: float | None = None) -> StokesMethod:
    """Resolve a CLI label (including short aliases) to a method."""
    name = _ALIASES.get(name, name)
    if name in _EPS_METHODS:
        return StokesMethod(name, DEFAULT_EPS if eps is None else eps)
    return StokesMethod(name, eps)      # plain methods reject a given eps


def method_names() -> list[str]:
    return list(_PLAIN_METHODS[:2]) + list(_EPS_METHODS) + list(_PLAIN_METHODS[2:])


_SPACE_TABLE = {
    "p1p1-plain": (ElementKind.P1, ElementKind.P1),
    "p1p1-loss": (ElementKind.P1, ElementKind.P1),
    "brezzi-pitkaranta": (ElementKind.P1, ElementKind.P1),
    "galerkin-ls": (ElementKind.P1, ElementKind.P1),
    "douglas-wang": (ElementKind.P1, ElementKind.P1),
    "taylor-hood": (ElementKind.P2, ElementKind.P1),
    "mini": (ElementKind.P1_BUBBLE, ElementKind.P1),
    "p2p0": (ElementKind.P2, ElementKind.P0),
}


def spaces_for(method: StokesMethod, mesh: Mesh) -> tuple[FeSpace, FeSpace]:
    vkind, pkind = _SPACE_TABLE[method.name]
    return (build_space(vkind, mesh, components=2), build_space(pkind, mesh))


def _dense_to_csr(a: np.ndarray):
    i, j = np.nonzero(a)
    return csr_from_arrays(a.shape[0], a.shape[1], i, j, a[i, j])


def _loss_c_block(mesh: Mesh, p_space: FeSpace) -> np.ndarray:
    """Dense ``h^2 (S0 - G^T M_L^{-1} G)`` from the lumped elimination."""
    z_space = build_space(ElementKind.P1, mesh, components=2)
    s0 = stiffness(p_space).to_dense()
    g = grad_coupling(z_space, p_space).to_dense()
    ml = lumped_mass(z_space)
    return mesh.h ** 2 * (s0 - g.T @ (g / ml[:, None]))


def build(method: StokesMethod, mesh: Mesh, body_force) -> SaddleSystem:
    """Assemble the constrained saddle system for one method.

    ``body_force`` maps an (..., 2) array of points to (..., 2) force values.
    Velocity Dirichlet values are zero on the whole boundary and the pressure
    mean constraint is appended.
    """
    v_space, p_space = spaces_for(method, mesh)
    a = stiffness(v_space)
    b = divergence(v_space, p_space)
    f = load_vector(v_space, body_force)
    g = np.zeros(p_space.n_dofs)
    c = None
    sign = 1.0
    hk = triangle_diameters(mesh)

    if method.name == "p1p1-loss":
        c = _dense_to_csr(_loss_c_block(mesh, p_space))
    elif method.name == "brezzi-pitkaranta":
        c = pressure_grad_stab(p_space).scaled(method.eps)
    elif method.name == "galerkin-ls":
        c = pressure_grad_stab(p_space, hk ** 2).scaled(method.eps)
        g = -method.eps * gradient_load(p_space, body_force, hk ** 2)
    elif method.name == "douglas-wang":
        # first-power element weights and a flipped constraint row
        c = pressure_grad_stab(p_space, hk).scaled(method.eps)
        g = method.eps * gradient_load(p_space, body_force, hk)
        sign = -1.0

    mean_vector = load_vector(p_space, lambda q: np.ones(q.shape[:-1]))
    system = SaddleSystem(a=a, b=b, c=c, f=f, g=g, mean_vector=mean_vector,
                          dirichlet_dofs=np.zeros(0, dtype=np.int64),
                          pressure_row_sign=sign,
                          spaces=(v_space, p_space))
    return apply_dirichlet(system, v_space.boundary_dofs)


def build_loss_three_field(mesh: Mesh, body_force):
    """The explicit (u, p, z) system behind ``p1p1-loss``, for cross-checks.

    Returns ``(matrix, rhs, slices)`` where slices map field names to index
    ranges.  The z rows are scaled by h^2 so the full matrix is symmetric.
    """
    v_space = build_space(ElementKind.P1, mesh, components=2)
    p_space = build_space(ElementKind.P1, mesh)
    z_space = build_space(ElementKind.P1, mesh, components=2)
    h2 = mesh.h ** 2

    a = stiffness(v_space)
    b = divergence(v_space, p_space)
    f = load_vector(v_space, body_force)
    base = SaddleSystem(a=a, b=b, c=None, f=f, g=np.zeros(p_space.n_dofs),
                        mean_vector=None,
                        dirichlet_dofs=np.zeros(0, dtype=np.int64))
    base = apply_dirichlet(base, v_space.boundary_dofs)

    nu, np_, nz = v_space.n_dofs, p_space.n_dofs, z_space.n_dofs
    n = nu + np_ + nz + 1
    k = np.zeros((n, n))
    rhs = np.zeros(n)
    iu = slice(0, nu)
    ip = slice(nu, nu + np_)
    iz = slice(nu + np_, nu + np_ + nz)

    s0 = stiffness(p_space).to_dense()
    g = grad_coupling(z_space, p_space).to_dense()      # (nz, np)
    ml = lumped_mass(z_space)
    bd = base.b.to_dense()
    mean = load_vector(p_space, lambda q: np.ones(q.shape[:-1]))

    k[iu, iu] = base.a.to_dense()
    k[iu, ip] = bd.T
    k[ip, iu] = bd
    k[ip, ip] = -h2 * s0
    k[ip, iz] = h2 * g.T
    k[iz, ip] = h2 * g
    k[iz, iz] = -h2 * np.diag(ml)
    k[ip, -1] = mean
    k[-1, ip] = mean
    rhs[iu] = base.f
    return k, rhs, {"u": iu, "p": ip, "z": iz}


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StokesSolution:
    u: np.ndarray
    p: np.ndarray
    z: np.ndarray | None
    residual_norm: float
    method: StokesMethod
    v_space: FeSpace
    p_space: FeSpace


def solve(system: SaddleSystem, method: StokesMethod | None = None) -> StokesSolution:
    """Dense LU solve of the full block system.

    ``SingularMatrix`` propagates (the unstabilized equal-order pair is
    expected to fail this way at moderate refinement).  The pressure is
    normalized to zero discrete mean; the recovered projection field ``z``
    is attached for the loss-reintroduction method.
    """
    k = system.full_matrix()
    rhs = system.full_rhs()
    x = lu_solve(k, rhs)
    residual = np.linalg.norm(k @ x - rhs)
    scale = np.linalg.norm(k) * np.linalg.norm(x) + np.linalg.norm(rhs)
    res_rel = float(residual / scale) if scale > 0 else 0.0

    nu, np_ = system.n_u, system.n_p
    u = x[:nu]
    p = x[nu:nu + np_]
    if system.mean_vector is not None:
        total = float(system.mean_vector.sum())
        p = p - (system.mean_vector @ p) / total

    v_space, p_space = system.spaces if system.spaces else (None, None)
    z = None
    if method is not None and method.name == "p1p1-loss" and v_space is not None:
        mesh = v_space.mesh
        z_space = build_space(ElementKind.P1, mesh, components=2)
        g = grad_coupling(z_space, p_space)
        z = g.matvec(p) / lumped_mass(z_space)
    return StokesSolution(u=u, p=p, z=z, residual_norm=res_rel,
                          method=method, v_space=v_space, p_space=p_space)


def run(method: StokesMethod, mesh: Mesh, body_force) -> StokesSolution:
    return solve(build(method, mesh, body_force), method)


# ---------------------------------------------------------------------------
# manufactured solution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManufacturedProblem:
    """Analytic Stokes data: divergence-free u with zero trace, mean-zero p.

    The velocity derives from the stream function
    ``psi = sin^2(pi x) sin^2(pi y) / pi`` and the force is ``-Delta u +
    grad p`` worked out analytically.
    """

    u: callable
    p: callable
    f: callable
    grad_u: callable

    def __iter__(self):
        return iter((self.u, self.p, self.f))


def manufactured_problem() -> ManufacturedProblem:
    pi = np.pi

    def u(pts):
        x, y = pts[..., 0], pts[..., 1]
        return np.stack([np.sin(pi * x) ** 2 * np.sin(2 * pi * y),
                         -np.sin(2 * pi * x) * np.sin(pi * y) ** 2], axis=-1)

    def grad_u(pts):
        x, y = pts[..., 0], pts[..., 1]
        du1 = np.stack([pi * np.sin(2 * pi * x) * np.sin(2 * pi * y),
                        2 * pi * np.sin(pi * x) ** 2 * np.cos(2 * pi * y)],
                       axis=-1)
        du2 = np.stack([-2 * pi * np.cos(2 * pi * x) * np.sin(pi * y) ** 2,
                        -pi * np.sin(2 * pi * x) * np.sin(2 * pi * y)],
                       axis=-1)
        return np.stack([du1, du2], axis=-2)

    def p(pts):
        x, y = pts[..., 0], pts[..., 1]
        return np.sin(2 * pi * x) * np.sin(2 * pi * y)

    def f(pts):
        x, y = pts[..., 0], pts[..., 1]
        sx, sy = np.sin(pi * x), np.sin(pi * y)
        s2x, s2y = np.sin(2 * pi * x), np.sin(2 * pi * y)
        c2x, c2y = np.cos(2 * pi * x), np.cos(2 * pi * y)
        f1 = -2 * pi**2 * c2x * s2y + 4 * pi**2 * sx**2 * s2y \
            + 2 * pi * c2x * s2y
        f2 = -4 * pi**2 * s2x * sy**2 + 2 * pi**2 * s2x * c2y \
            + 2 * pi * s2x * c2y
        return np.stack([f1, f2], axis=-1)

    return ManufacturedProblem(u=u, p=p, f=f, grad_u=grad_u)


# ---------------------------------------------------------------------------
# errors and diagnostics
# ---------------------------------------------------------------------------

def errors(solution: StokesSolution, exact: ManufacturedProblem):
    """(err_u_l2, err_u_h1, err_p_l2) by degree-6 quadrature.

    ``err_u_h1`` is the H1 seminorm of the velocity error.  The exact
    pressure is shifted to discrete zero mean before comparison; against a
    piecewise-constant pressure space it is first projected elementwise.
    """
    rule = quadrature(6)
    v_space, p_space = solution.v_space, solution.p_space
    mesh = v_space.mesh
    areas = triangle_areas(mesh)
    qw = np.outer(areas, rule.weights)                       # (T, nq)

    pts, u_vals, u_grads = fields_at_quadrature(v_space, solution.u, rule)
    du = u_vals - exact.u(pts)
    dg = u_grads - exact.grad_u(pts)
    err_u_l2 = np.sqrt(np.einsum("tq,tqc->", qw, du ** 2))
    err_u_h1 = np.sqrt(np.einsum("tq,tqcd->", qw, dg ** 2))

    p_ex = exact.p(pts)                                      # (T, nq)
    mean_ex = float(np.einsum("tq,tq->", qw, p_ex))          # |Omega| = 1
    p_ex = p_ex - mean_ex
    if p_space.kind is ElementKind.P0:
        cell_means = np.einsum("tq,q->t", p_ex, rule.weights)
        err_p_l2 = np.sqrt(np.sum(areas * (solution.p - cell_means) ** 2))
    else:
        _, p_vals, _ = fields_at_quadrature(p_space, solution.p, rule)
        err_p_l2 = np.sqrt(np.einsum("tq,tq->", qw, (p_vals[..., 0] - p_ex) ** 2))
    return float(err_u_l2), float(err_u_h1), float(err_p_l2)


def oscillation_indicator(solution: StokesSolution) -> float:
    """Total neighbour-to-neighbour pressure jump over the pressure norm.

    Sums |p_left - p_right| over interior edges (nodal endpoint difference
    for continuous pressures, adjacent cell difference for P0) -- large for
    checkerboard modes, O(h * edges) for smooth fields.
    """
    p = solution.p
    norm = float(np.linalg.norm(p))
    if norm == 0.0:
        return 0.0
    table = edge_table(solution.p_space.mesh)
    interior = table.interior_mask()
    if solution.p_space.kind is ElementKind.P0:
        t1, t2 = table.edge_tris[interior, 0], table.edge_tris[interior, 1]
        jumps = np.abs(p[t1] - p[t2])
    else:
        a, b = table.edges[interior, 0], table.edges[interior, 1]
        jumps = np.abs(p[a] - p[b])
    return float(jumps.sum() / norm)


def boundary_pressure_flux(solution: StokesSolution) -> float:
    """Perimeter-averaged |dp/dn| on the boundary for P1 pressures.

    A diagnostic for the spurious natural condition dp/dn = 0 that plain
    gradient stabilization enforces in the small-h limit.
    """
    p_space = solution.p_space
    if p_space.kind is not ElementKind.P1:
        raise UnsupportedCombination("boundary pressure flux needs P1 pressure")
    mesh = p_space.mesh
    lengths, normals, _ = boundary_edge_geometry(mesh)
    owners = mesh.boundary_edges[:, 2]
    gl = triangle_grad_lambda(mesh)[owners]                  # (E, 3, 2)
    tri_nodes = mesh.triangles[owners]
    grad_p = np.einsum("ekd,ek->ed", gl, solution.p[tri_nodes])
    flux = np.abs(np.einsum("ed,ed->e", grad_p, normals))
    return float((lengths * flux).sum() / lengths.sum())
