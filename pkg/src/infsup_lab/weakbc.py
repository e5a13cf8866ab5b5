"""Weak Dirichlet enforcement for -lap(u) + u = f on the unit square.

Three routes, all on continuous P1:

* ``multiplier``      trace Lagrange multiplier, saddle system
                      [[A+M, T^T], [T, 0]]; lambda approximates -du/dn
* ``barbosa-hughes``  the multiplier system stabilized by
                      -alpha sum_E h_E <lambda + du/dn, mu + dv/dn>_E,
                      which restores solvability for any trace space
* ``nitsche``         multiplier-free symmetric form with consistency
                      terms and penalty gamma sum_E (1/h_E) <u, v>_E

Stability parameters are calibrated by the inverse-inequality constant
C_i = sup_v sqrt(h ||dv/dn||_G^2 / ||grad v||^2), estimated once as the top
eigenvalue of a dense whitened pencil.  Defaults: gamma = 4 C_i^2 and
alpha = 0.5 / C_i^2 (a "linear" parameterization using C_i in place of
C_i^2 is available behind the ``threshold`` flag; only solvability is
asserted either way).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .assembly import (
    SaddleSystem,
    boundary_flux_flux,
    boundary_load,
    boundary_mass,
    boundary_normal_flux,
    load_vector,
    mass,
    stiffness,
)
from .fespace import ElementKind, FeSpace, build_space, fields_at_quadrature, quadrature
from .linalg import CsrMatrix, cholesky, csr_from_arrays, lu_solve, sym_eig
from .mesh import (
    Mesh,
    boundary_edge_geometry,
    triangle_areas,
    triangle_grad_lambda,
    unit_square_mesh,
)

_EDGE_GAUSS = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


class UnsupportedTrace(ValueError):
    """Requested multiplier trace space is not available."""


@dataclass(frozen=True)
class WeakBcMethod:
    name: str                    # multiplier | barbosa-hughes | nitsche
    alpha: float | None = None
    gamma: float | None = None
    trace: str = "p1"            # multiplier space: p1 | p0

    def __post_init__(self):
        if self.name not in ("multiplier", "barbosa-hughes", "nitsche"):
            raise ValueError(f"unknown weak-bc method {self.name!r}")
        if self.name == "barbosa-hughes" and (self.alpha is None or self.alpha <= 0):
            raise ValueError("barbosa-hughes needs alpha > 0")
        if self.name == "nitsche" and (self.gamma is None or self.gamma <= 0):
            raise ValueError("nitsche needs gamma > 0")
        if self.trace not in ("p1", "p0"):
            raise UnsupportedTrace(f"trace space {self.trace!r} not available")


@dataclass(frozen=True)
class WeakBcSolution:
    u: np.ndarray
    lam: np.ndarray | None       # trace multiplier, None for nitsche
    residual_norm: float


# ---------------------------------------------------------------------------
# inverse-inequality constant
# ---------------------------------------------------------------------------

def inverse_constant(mesh: Mesh, scale: float = 1.0) -> float:
    """C_i with h_E ||dv/dn||_E^2 <= C_i^2 ||grad v||^2 on P1.

    Largest eigenvalue of the pencil (scale * h_E-weighted boundary
    flux-flux, K + 1e-12 M), solved dense after Cholesky whitening.
    Constants contribute zero numerator, so no explicit deflation is
    needed.
    """
    space = build_space(ElementKind.P1, mesh)
    k = stiffness(space).to_dense()
    m = mass(space).to_dense()
    lengths, _, _ = boundary_edge_geometry(mesh)
    n_w = boundary_flux_flux(space, edge_weights=scale * lengths).to_dense()
    l_fac = cholesky(k + 1e-12 * m)
    half = scipy.linalg.solve_triangular(l_fac, n_w, lower=True)
    pencil = scipy.linalg.solve_triangular(l_fac, half.T, lower=True)
    lam, _ = sym_eig(0.5 * (pencil + pencil.T))
    return float(np.sqrt(max(lam[0], 0.0)))


_CI_CACHE: dict[int, float] = {}


def _ci_estimate(n: int = 8) -> float:
    """Inverse constant on a fixed reference mesh (quasi-uniform family)."""
    if n not in _CI_CACHE:
        _CI_CACHE[n] = inverse_constant(unit_square_mesh(n))
    return _CI_CACHE[n]


def default_gamma(threshold: str = "squared") -> float:
    ci = _ci_estimate()
    return 4.0 * ci ** 2 if threshold == "squared" else 4.0 * ci


def default_alpha(threshold: str = "squared") -> float:
    ci = _ci_estimate()
    return 0.5 / ci ** 2 if threshold == "squared" else 0.5 / ci


def multiplier(trace: str = "p1") -> WeakBcMethod:
    return WeakBcMethod("multiplier", trace=trace)


def barbosa_hughes(alpha: float | None = None, trace: str = "p1",
                   threshold: str = "squared") -> WeakBcMethod:
    if alpha is None:
        alpha = default_alpha(threshold)
    return WeakBcMethod("barbosa-hughes", alpha=alpha, trace=trace)


def nitsche(gamma: float | None = None, threshold: str = "squared") -> WeakBcMethod:
    if gamma is None:
        gamma = default_gamma(threshold)
    return WeakBcMethod("nitsche", gamma=gamma)


def method_from_name(name: str, alpha: float | None = None,
                     gamma: float | None = None, trace: str = "p1") -> WeakBcMethod:
    if name == "multiplier":
        return multiplier(trace=trace)
    if name in ("barbosa-hughes", "bh"):
        return barbosa_hughes(alpha=alpha, trace=trace)
    if name == "nitsche":
        return nitsche(gamma=gamma)
    raise ValueError(f"unknown weak-bc method {name!r}")


# ---------------------------------------------------------------------------
# trace operators
# ---------------------------------------------------------------------------

def _dense_to_csr(a: np.ndarray) -> CsrMatrix:
    i, j = np.nonzero(a)
    return csr_from_arrays(a.shape[0], a.shape[1], i, j, a[i, j])


def _edge_quantities(mesh: Mesh):
    """(lengths, flux (E,3), tri_nodes (E,3)) for the boundary edges."""
    lengths, normals, _ = boundary_edge_geometry(mesh)
    owners = mesh.boundary_edges[:, 2]
    flux = np.einsum("ekd,ed->ek", triangle_grad_lambda(mesh)[owners], normals)
    return lengths, flux, mesh.triangles[owners]


def _p0_trace_ops(mesh: Mesh, n_dofs: int):
    """(t0, c0, m0_diag): edge-indexed <mu_E, v>, <mu_E, dv/dn>, <mu_E, mu_F>."""
    lengths, flux, tri_nodes = _edge_quantities(mesh)
    n_e = len(lengths)
    t0 = np.zeros((n_e, n_dofs))
    rows = np.repeat(np.arange(n_e), 2)
    np.add.at(t0, (rows, mesh.boundary_edges[:, :2].ravel()),
              np.repeat(lengths / 2.0, 2))
    c0 = np.zeros((n_e, n_dofs))
    np.add.at(c0, (np.repeat(np.arange(n_e), 3), tri_nodes.ravel()),
              (lengths[:, None] * flux).ravel())
    return t0, c0, lengths.copy()


def _edge_integrals(mesh: Mesh, func) -> np.ndarray:
    """int_E func ds per boundary edge (2-point Gauss)."""
    a = mesh.nodes[mesh.boundary_edges[:, 0]]
    b = mesh.nodes[mesh.boundary_edges[:, 1]]
    lengths, _, _ = boundary_edge_geometry(mesh)
    total = np.zeros(len(lengths))
    for s in _EDGE_GAUSS:
        pts = (1.0 - s) * a + s * b
        total += 0.5 * lengths * np.asarray(func(pts), dtype=float)
    return total


# ---------------------------------------------------------------------------
# build / solve
# ---------------------------------------------------------------------------

def _reaction_diffusion(space: FeSpace) -> CsrMatrix:
    return stiffness(space).add(mass(space))


def build(method: WeakBcMethod, mesh: Mesh, f, d) -> SaddleSystem:
    """Assemble one weak-bc discretization.

    ``f`` and ``d`` are scalar callables on (..., 2) points; ``d`` is
    evaluated analytically at trace quadrature points rather than
    interpolated.  Nitsche returns a system with an empty multiplier block
    so every method solves through the same path.
    """
    space = build_space(ElementKind.P1, mesh)
    n = space.n_dofs
    a = _reaction_diffusion(space)
    fvec = load_vector(space, f)
    lengths, _, _ = boundary_edge_geometry(mesh)
    no_dirichlet = np.zeros(0, dtype=np.int64)

    if method.name == "nitsche":
        gamma = method.gamma
        nf = boundary_normal_flux(space)
        pen = boundary_mass(space, edge_weights=gamma / lengths)
        k = a.add(nf.scaled(-1.0)).add(nf.transpose().scaled(-1.0)).add(pen)
        rhs = (fvec - boundary_load(space, d, flux_test=True)
               + boundary_load(space, d, edge_weights=gamma / lengths))
        empty = csr_from_arrays(0, n, [], [], [])
        return SaddleSystem(a=k, b=empty, c=None, f=rhs, g=np.zeros(0),
                            mean_vector=None, dirichlet_dofs=no_dirichlet,
                            spaces=(space, None))

    if method.trace == "p1":
        trace = space.boundary_dofs
        t = boundary_mass(space).to_dense()[trace, :]
        c_w = boundary_normal_flux(space, edge_weights=lengths).to_dense()[trace, :]
        m_w = boundary_mass(space, edge_weights=lengths).to_dense()[np.ix_(trace, trace)]
        d_load = boundary_load(space, d)[trace]
    else:
        t, c0, m0 = _p0_trace_ops(mesh, n)
        c_w = lengths[:, None] * c0
        m_w = np.diag(lengths * m0)
        d_load = _edge_integrals(mesh, d)

    if method.name == "multiplier":
        return SaddleSystem(a=a, b=_dense_to_csr(t), c=None, f=fvec,
                            g=d_load, mean_vector=None,
                            dirichlet_dofs=no_dirichlet, spaces=(space, None))

    alpha = method.alpha
    n_w = boundary_flux_flux(space, edge_weights=alpha * lengths)
    a_bh = a.add(n_w.scaled(-1.0))
    b = _dense_to_csr(t - alpha * c_w)
    c = _dense_to_csr(alpha * m_w)
    return SaddleSystem(a=a_bh, b=b, c=c, f=fvec, g=d_load,
                        mean_vector=None, dirichlet_dofs=no_dirichlet,
                        spaces=(space, None))


def solve(system: SaddleSystem) -> WeakBcSolution:
    k = system.full_matrix()
    rhs = system.full_rhs()
    x = lu_solve(k, rhs)
    residual = np.linalg.norm(k @ x - rhs)
    scale = np.linalg.norm(k) * np.linalg.norm(x) + np.linalg.norm(rhs)
    nu = system.n_u
    lam = x[nu:] if system.n_p > 0 else None
    return WeakBcSolution(u=x[:nu], lam=lam,
                          residual_norm=float(residual / scale) if scale else 0.0)


def run(method: WeakBcMethod, mesh: Mesh, f, d) -> WeakBcSolution:
    return solve(build(method, mesh, f, d))


# ---------------------------------------------------------------------------
# manufactured problem and errors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeakBcProblem:
    u: callable
    f: callable
    d: callable
    grad_u: callable

    def __iter__(self):
        return iter((self.u, self.f, self.d))


def mms_problem() -> WeakBcProblem:
    pi = np.pi

    def u(pts):
        return np.cos(pi * pts[..., 0]) * np.cos(pi * pts[..., 1])

    def f(pts):
        return (2.0 * pi ** 2 + 1.0) * u(pts)

    def grad_u(pts):
        x, y = pts[..., 0], pts[..., 1]
        return np.stack([-pi * np.sin(pi * x) * np.cos(pi * y),
                         -pi * np.cos(pi * x) * np.sin(pi * y)], axis=-1)

    return WeakBcProblem(u=u, f=f, d=u, grad_u=grad_u)


def errors(mesh: Mesh, u_vec: np.ndarray, problem: WeakBcProblem):
    """(L2, H1-seminorm) error of a P1 field by degree-6 quadrature."""
    space = build_space(ElementKind.P1, mesh)
    rule = quadrature(6)
    qw = np.outer(triangle_areas(mesh), rule.weights)
    pts, vals, grads = fields_at_quadrature(space, u_vec, rule)
    dv = vals[..., 0] - problem.u(pts)
    dg = grads[:, :, 0, :] - problem.grad_u(pts)
    err_l2 = np.sqrt(np.einsum("tq,tq->", qw, dv ** 2))
    err_h1 = np.sqrt(np.einsum("tq,tqd->", qw, dg ** 2))
    return float(err_l2), float(err_h1)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def normal_flux_values(mesh: Mesh, u_vec: np.ndarray) -> np.ndarray:
    """Per-boundary-edge du/dn of a P1 field (constant on each edge)."""
    _, flux, tri_nodes = _edge_quantities(mesh)
    return np.einsum("ek,ek->e", flux, u_vec[tri_nodes])


def lambda_roughness(solution: WeakBcSolution, mesh: Mesh,
                     trace: str = "p1") -> float:
    """Total variation of the multiplier along the boundary over its scale.

    The multiplier is known to come out rough; this is the reported
    indicator (never asserted against a threshold).
    """
    if solution.lam is None:
        raise ValueError("solution carries no multiplier")
    lam = solution.lam
    if trace == "p1":
        space = build_space(ElementKind.P1, mesh)
        nodal = np.zeros(space.n_dofs)
        nodal[space.boundary_dofs] = lam
        ends = mesh.boundary_edges[:, :2]
        jumps = np.abs(nodal[ends[:, 0]] - nodal[ends[:, 1]])
    else:
        # P0 multipliers: pair edges sharing a boundary vertex
        ends = mesh.boundary_edges[:, :2]
        owner_of_start = {ends[e, 0]: e for e in range(len(ends))}
        partner = np.array([owner_of_start[ends[e, 1]] for e in range(len(ends))])
        jumps = np.abs(lam - lam[partner])
    scale = np.abs(lam).max()
    return float(jumps.sum() / (len(jumps) * scale)) if scale > 0 else 0.0


# ---------------------------------------------------------------------------
# BH <-> Nitsche equivalence (P0 multipliers, gamma = 1/alpha)
# ---------------------------------------------------------------------------

def _nitsche_projected(mesh: Mesh, f, d, gamma: float):
    """Nitsche variant with the penalty acting on P0 edge averages.

    Exact elimination of P0 multipliers from the stabilized system yields
    THIS form (the du/dn consistency terms are already edge-wise constant
    for P1, so only the penalty changes).
    """
    space = build_space(ElementKind.P1, mesh)
    n = space.n_dofs
    lengths, _, _ = boundary_edge_geometry(mesh)
    t0, _, _ = _p0_trace_ops(mesh, n)
    nf = boundary_normal_flux(space).to_dense()
    pen = t0.T @ (t0 * (gamma / lengths ** 2)[:, None])
    k = _reaction_diffusion(space).to_dense() - nf - nf.T + pen
    rhs = (load_vector(space, f) - boundary_load(space, d, flux_test=True)
           + t0.T @ (gamma / lengths ** 2 * _edge_integrals(mesh, d)))
    return k, rhs


def equivalence_check(mesh: Mesh, f, d, alpha: float = 0.1) -> float:
    """Relative H1 gap between BH(P0, alpha) and Nitsche(gamma = 1/alpha).

    The two are algebraically the same system after eliminating the
    multiplier, so the gap sits at solver roundoff.
    """
    u_bh = run(barbosa_hughes(alpha=alpha, trace="p0"), mesh, f, d).u
    k_n, rhs_n = _nitsche_projected(mesh, f, d, 1.0 / alpha)
    u_n = lu_solve(k_n, rhs_n)
    space = build_space(ElementKind.P1, mesh)
    h1 = _reaction_diffusion(space).to_dense()
    diff = u_bh - u_n
    num = np.sqrt(diff @ (h1 @ diff))
    den = np.sqrt(u_n @ (h1 @ u_n))
    return float(num / den) if den > 0 else float(num)
