"""Inf-sup constant extraction: synthetic spectra and real element pairs."""

import numpy as np
import pytest

from infsup_lab import infsup
from infsup_lab.fespace import ElementKind
from infsup_lab.linalg import NotPositiveDefinite, sym_eig
from infsup_lab.mesh import unit_square_mesh


def random_orthogonal(n, rng):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q


# --- euclidean ------------------------------------------------------------

def test_euclidean_diag():
    rep = infsup.infsup_euclidean(np.diag([3.0, 1.0]))
    assert rep.beta == pytest.approx(1.0)
    assert rep.numerical_rank == 2
    assert rep.kernel_dim_pressure == 0
    assert rep.mode == "euclidean"


def test_euclidean_explicit_kernel():
    rep = infsup.infsup_euclidean(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert rep.beta == pytest.approx(1.0)
    assert rep.kernel_dim_pressure == 1
    # the worst KEPT mode is the first pressure axis
    assert np.abs(rep.worst_pressure_mode) == pytest.approx([1.0, 0.0])


def test_euclidean_constructed_spectrum():
    rng = np.random.default_rng(3)
    u = random_orthogonal(5, rng)
    v = random_orthogonal(4, rng)
    s = np.zeros((5, 4))
    s[[0, 1, 2], [0, 1, 2]] = [5.0, 2.0, 1e-14]
    rep = infsup.infsup_euclidean(u @ s @ v.T)
    assert rep.numerical_rank == 2
    assert rep.beta == pytest.approx(2.0, abs=1e-10)
    assert rep.kernel_dim_pressure == 3


def test_euclidean_zero_block():
    rep = infsup.infsup_euclidean(np.zeros((3, 2)))
    assert rep.beta == 0.0
    assert rep.numerical_rank == 0
    assert rep.kernel_dim_pressure == 3


def test_euclidean_matches_block_eigenpairing():
    # positive spectrum of [[0, B^T], [B, 0]] equals the singular values
    b, _, _ = infsup.pair_operators("p1p1", unit_square_mesh(3))
    n_p, n_v = b.shape
    block = np.zeros((n_p + n_v, n_p + n_v))
    block[:n_v, n_v:] = b.T
    block[n_v:, :n_v] = b
    lam, _ = sym_eig(block)
    rep = infsup.infsup_euclidean(b)
    positive = lam[lam > 1e-10]
    kept = rep.sigma[:rep.numerical_rank]
    assert np.allclose(np.sort(positive), np.sort(kept), atol=1e-10)


# --- weighted -------------------------------------------------------------

def test_weighted_reduces_to_euclidean_under_identity_norms():
    rng = np.random.default_rng(4)
    b = rng.standard_normal((6, 9))
    rep_w = infsup.infsup_weighted(b, np.eye(9), np.eye(6))
    rep_e = infsup.infsup_euclidean(b)
    assert rep_w.beta == pytest.approx(rep_e.beta, abs=1e-12)
    assert np.allclose(rep_w.sigma, rep_e.sigma, atol=1e-12)


def test_weighted_square_symmetric_block():
    # B = M with identity norms: beta is the smallest eigenvalue magnitude
    rng = np.random.default_rng(5)
    a = rng.standard_normal((7, 7))
    m = 0.5 * (a + a.T)
    rep = infsup.infsup_weighted(m, np.eye(7), np.eye(7))
    lam = np.abs(np.linalg.eigvalsh(m))
    assert rep.beta == pytest.approx(lam.min(), abs=1e-10)


def test_weighted_permutation_invariance():
    b, x, m = infsup.pair_operators("p1p1", unit_square_mesh(4))
    rep = infsup.infsup_weighted(b, x, m)
    rng = np.random.default_rng(6)
    perm = rng.permutation(b.shape[1])
    rep_p = infsup.infsup_weighted(b[:, perm], x[np.ix_(perm, perm)], m)
    assert abs(rep.beta - rep_p.beta) <= 1e-10


def test_weighted_requires_spd_norms():
    b = np.eye(3)
    with pytest.raises(NotPositiveDefinite):
        infsup.infsup_weighted(b, -np.eye(3), np.eye(3))
    with pytest.raises(NotPositiveDefinite):
        infsup.infsup_weighted(b, np.eye(3), np.diag([1.0, -1.0, 1.0]))


# --- element pairs ---------------------------------------------------------

def test_unknown_pair_rejected():
    with pytest.raises(ValueError):
        infsup.pair_spaces("p7p7", unit_square_mesh(2))


def test_stable_pairs_keep_beta_level():
    # the stable pairs hold their constant under refinement; the equal-order
    # pair decays by >= 1.3x per halving
    betas = {pair: [infsup.study(pair, unit_square_mesh(n)).beta
                    for n in (4, 8)]
             for pair in ("taylor-hood", "mini", "p1p1")}
    th, mini, p1p1 = betas["taylor-hood"], betas["mini"], betas["p1p1"]
    assert max(th) / min(th) <= 1.15
    assert max(mini) / min(mini) <= 1.20
    assert p1p1[0] / p1p1[1] >= 1.3


def test_constant_pressure_lands_in_kernel():
    for pair in infsup.PAIRS:
        rep = infsup.study(pair, unit_square_mesh(4))
        assert rep.kernel_dim_pressure >= 1
        assert infsup.constant_pressure_angle(pair, unit_square_mesh(4)) <= 1e-8


def test_report_fields():
    mesh = unit_square_mesh(4)
    rep = infsup.study("taylor-hood", mesh)
    assert rep.pair == "taylor-hood"
    assert rep.h == pytest.approx(mesh.h)
    assert rep.mode == "weighted"
    assert np.all(np.diff(rep.sigma) <= 1e-12)          # descending
    assert rep.beta == pytest.approx(rep.sigma[rep.numerical_rank - 1])
    assert np.linalg.norm(rep.worst_pressure_mode) == pytest.approx(1.0)
    eu = infsup.study("taylor-hood", mesh, weighted=False)
    assert eu.mode == "euclidean"


# --- spurious modes ---------------------------------------------------------

def test_checkerboard_alternation_p1p0():
    mesh = unit_square_mesh(8)
    rep = infsup.study("p1p0", mesh, weighted=False)
    mode = infsup.spurious_mode(rep)
    score = infsup.alternation_score(mode, mesh, ElementKind.P0)
    assert score >= 0.8


def test_taylor_hood_mode_score_reported():
    mesh = unit_square_mesh(4)
    rep = infsup.study("taylor-hood", mesh)
    score = infsup.alternation_score(rep.worst_pressure_mode, mesh,
                                     ElementKind.P1)
    assert 0.0 <= score <= 1.0      # diagnostic only, no threshold


def test_alternation_score_extremes():
    mesh = unit_square_mesh(4)
    checker = np.where(np.arange(mesh.n_triangles) % 2 == 0, 1.0, -1.0)
    # lower/upper triangles of each cell alternate: every interior edge
    # inside a cell flips, edges between aligned cells keep sign
    score = infsup.alternation_score(checker, mesh, ElementKind.P0)
    assert score > 0.4
    assert infsup.alternation_score(np.ones(mesh.n_triangles), mesh,
                                    ElementKind.P0) == 0.0
    smooth = mesh.nodes[:, 0] + 2.0   # strictly positive nodal field
    assert infsup.alternation_score(smooth, mesh, ElementKind.P1) == 0.0
    with pytest.raises(ValueError):
        infsup.alternation_score(np.ones(4), mesh, ElementKind.P2)


def test_spurious_mode_returns_copy():
    rep = infsup.infsup_euclidean(np.diag([3.0, 1.0]))
    mode = infsup.spurious_mode(rep)
    mode[:] = 0.0
    assert np.linalg.norm(rep.worst_pressure_mode) == pytest.approx(1.0)
