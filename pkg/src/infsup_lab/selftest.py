"""End-to-end acceptance checks behind the ``selftest`` subcommand.

Each check re-runs one experiment family at desk scale and compares the
measured quantity against a fixed threshold.  Results carry the measured
numbers so a failure is diagnosable straight from the printed table.
The heavy runs are cached so the table and the test suite share work.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import infsup, locking, stokes, verify, weakbc
from .assembly import divergence, grad_coupling, mass, stiffness
from .fespace import ElementKind, build_space
from .linalg import svd, sym_eig
from .mesh import unit_square_mesh


@dataclass(frozen=True)
class CheckResult:
    number: int
    label: str
    passed: bool
    detail: str


# ---------------------------------------------------------------------------
# cached experiment runs
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def weighted_betas(pair: str, ns: tuple = (4, 8, 16)) -> tuple:
    return tuple(infsup.study(pair, unit_square_mesh(n), weighted=True).beta
                 for n in ns)


@lru_cache(maxsize=None)
def stokes_slopes(name: str) -> dict:
    problem = stokes.manufactured_problem()
    method = stokes.method_from_name(name)

    def builder(n):
        sol = stokes.run(method, unit_square_mesh(n), problem.f)
        u_l2, u_h1, p_l2 = stokes.errors(sol, problem)
        return {"err_u_l2": u_l2, "err_u_h1": u_h1, "err_p_l2": p_l2}

    report = verify.run_convergence(builder, (8, 16, 32),
                                    method=name, problem="stokes-mms")
    return dict(report.slopes)


@lru_cache(maxsize=None)
def locking_ratio(method: str, w_mass: str = "lumped") -> float:
    cfg = locking.LockingConfig(lambda_=1.0, n=8, method=method,
                                w_mass=w_mass)
    lo, hi = locking.lambda_sweep(cfg, [1e2, 1e6])
    return hi.u_h1_norm / lo.u_h1_norm


@lru_cache(maxsize=None)
def nitsche_mms_slopes() -> dict:
    problem = weakbc.mms_problem()
    method = weakbc.nitsche()

    def builder(n):
        mesh = unit_square_mesh(n)
        sol = weakbc.run(method, mesh, problem.f, problem.d)
        l2, h1 = weakbc.errors(mesh, sol.u, problem)
        return {"err_l2": l2, "err_h1": h1}

    report = verify.run_convergence(builder, (8, 16, 32),
                                    method="nitsche", problem="reaction-mms")
    return dict(report.slopes)


# ---------------------------------------------------------------------------
# the thirteen checks
# ---------------------------------------------------------------------------

def check_taylor_hood_stability() -> CheckResult:
    betas = weighted_betas("taylor-hood")
    drift = max(betas) / min(betas) - 1.0
    return CheckResult(1, "taylor-hood weighted beta drift <= 15%",
                       drift <= 0.15,
                       f"betas={[f'{b:.5f}' for b in betas]} drift={drift:.2%}")


def check_equal_order_decay() -> CheckResult:
    betas = weighted_betas("p1p1")
    r1, r2 = betas[0] / betas[1], betas[1] / betas[2]
    return CheckResult(2, "p1p1 weighted beta decays >= 1.3x per refinement",
                       r1 >= 1.3 and r2 >= 1.3,
                       f"betas={[f'{b:.5f}' for b in betas]} "
                       f"ratios={r1:.3f},{r2:.3f}")


def check_mini_stability() -> CheckResult:
    betas = weighted_betas("mini")
    drift = max(betas) / min(betas) - 1.0
    return CheckResult(3, "mini weighted beta drift <= 20%",
                       drift <= 0.20,
                       f"betas={[f'{b:.5f}' for b in betas]} drift={drift:.2%}")


def check_checkerboard_mode() -> CheckResult:
    mesh = unit_square_mesh(8)
    report = infsup.study("p1p0", mesh, weighted=False)
    mode = infsup.spurious_mode(report)
    score = infsup.alternation_score(mode, mesh, ElementKind.P0)
    return CheckResult(4, "p1p0 worst mode sign-alternation >= 0.8 (n=8)",
                       score >= 0.8, f"score={score:.4f}")


def check_loss_convergence() -> CheckResult:
    slopes = stokes_slopes("p1p1-loss")
    ok = slopes["err_u_h1"] >= 0.9 and slopes["err_p_l2"] >= 0.9
    return CheckResult(5, "p1p1-loss slopes: u_h1 >= 0.9, p_l2 >= 0.9",
                       ok, f"u_h1={slopes['err_u_h1']:.3f} "
                           f"p_l2={slopes['err_p_l2']:.3f}")


def check_brezzi_pitkaranta_convergence() -> CheckResult:
    slopes = stokes_slopes("brezzi-pitkaranta")
    return CheckResult(6, "brezzi-pitkaranta slope: u_h1 >= 0.9",
                       slopes["err_u_h1"] >= 0.9,
                       f"u_h1={slopes['err_u_h1']:.3f}")


def check_taylor_hood_convergence() -> CheckResult:
    slopes = stokes_slopes("taylor-hood")
    ok = slopes["err_u_h1"] >= 1.9 and slopes["err_p_l2"] >= 1.7
    return CheckResult(7, "taylor-hood slopes: u_h1 >= 1.9, p_l2 >= 1.7",
                       ok, f"u_h1={slopes['err_u_h1']:.3f} "
                           f"p_l2={slopes['err_p_l2']:.3f}")


def check_locking_and_cure() -> CheckResult:
    # The plain penalty form collapses as lambda grows.  The corrected
    # form is asked to hold its H1 norm over {1e2, 1e6}; measured, it
    # cannot on this mesh: with the lumped projection the subtracted term
    # fails to cancel the penalty (still collapses), and with the
    # consistent projection the lambda-independent plateau only starts at
    # the discrete spectral scale ~1/h^2 ~ 3e3, above lambda=1e2.
    plain = locking_ratio("plain")
    lumped = locking_ratio("corrected", "lumped")
    consistent = locking_ratio("corrected", "consistent")
    corrected_ok = 0.8 <= consistent <= 1.25 or 0.8 <= lumped <= 1.25
    return CheckResult(8, "locking ratios: plain <= 0.2, corrected in "
                          "[0.8, 1.25]",
                       plain <= 0.2 and corrected_ok,
                       f"plain={plain:.2e} corrected(lumped)={lumped:.2e} "
                       f"corrected(consistent)={consistent:.3f}")


def check_multiplier_elimination() -> CheckResult:
    cfg = locking.LockingConfig(lambda_=1e2, n=4, method="multiplier")
    blocks = locking._blocks(cfg)
    sys_m = locking.build_multiplier(cfg, blocks=blocks)
    sys_p = locking.build_plain(cfg, blocks=blocks)
    nx = len(blocks.free_u) + len(blocks.free_p)
    bt = sys_m.matrix[:nx, nx:]
    m_y = -sys_m.matrix[nx:, nx:] * cfg.lambda_
    elim = sys_m.matrix[:nx, :nx] \
        + cfg.lambda_ * bt @ np.linalg.solve(m_y, bt.T)
    gap = float(np.linalg.norm(elim - sys_p.matrix))
    return CheckResult(9, "multiplier elimination reproduces plain "
                          "(Frobenius <= 1e-12)",
                       gap <= 1e-12, f"gap={gap:.2e}")


def check_nitsche() -> CheckResult:
    mesh = unit_square_mesh(8)

    def ones(pts):
        return np.ones(pts.shape[:-1])              # -Lap(1) + 1 = 1

    sol = weakbc.run(weakbc.nitsche(), mesh, ones, ones)
    dev = float(np.abs(sol.u - 1.0).max())
    slope = nitsche_mms_slopes()["err_h1"]
    return CheckResult(10, "nitsche: u=1 reproduced <= 1e-10, "
                           "MMS H1 slope >= 0.9",
                       dev <= 1e-10 and slope >= 0.9,
                       f"max|u-1|={dev:.2e} slope={slope:.3f}")


def check_penalty_multiplier_equivalence() -> CheckResult:
    problem = weakbc.mms_problem()
    gap = weakbc.equivalence_check(unit_square_mesh(4), problem.f,
                                   problem.d, alpha=0.1)
    return CheckResult(11, "flux-multiplier vs penalty equivalence <= 1e-9",
                       gap <= 1e-9, f"relative H1 gap={gap:.2e}")


def check_svd_kernel(seed: int = 42) -> CheckResult:
    rng = np.random.default_rng(seed)
    shapes = [(1, 1), (2, 5), (5, 2), (8, 8), (20, 7), (13, 31),
              (60, 40), (40, 60)]
    worst = 0.0
    for trial in range(100):
        m, n = shapes[trial % len(shapes)]
        if trial % 3 == 0:
            k = max(1, min(m, n) // 2)
            a = rng.standard_normal((m, k)) @ rng.standard_normal((k, n))
        else:
            a = rng.standard_normal((m, n))
        r = svd(a)
        scale = max(np.linalg.norm(a), 1.0)
        worst = max(
            worst,
            np.linalg.norm(r.reconstruct() - a) / scale,
            np.linalg.norm(r.u.T @ r.u - np.eye(m)) / m,
            np.linalg.norm(r.v.T @ r.v - np.eye(n)) / n,
        )
    # eigenvalues of [[0, B], [B^T, 0]] pair as +/- singular values
    b = rng.standard_normal((5, 9))
    block = np.zeros((14, 14))
    block[:5, 5:] = b
    block[5:, :5] = b.T
    lam, _ = sym_eig(block)
    sig = svd(b).sigma
    expect = np.sort(np.concatenate([sig, -sig, np.zeros(4)]))
    pairing = float(np.abs(np.sort(lam) - expect).max())
    return CheckResult(12, "svd: 100 random matrices <= 1e-12, "
                           "block pairing <= 1e-10",
                       worst <= 1e-12 and pairing <= 1e-10,
                       f"worst={worst:.2e} pairing={pairing:.2e}")


def check_assembly_requadrature() -> CheckResult:
    mesh = unit_square_mesh(2)
    pairs = []
    for kind in (ElementKind.P1, ElementKind.P1_BUBBLE, ElementKind.P2):
        space = build_space(kind, mesh, components=2)
        pairs.append((stiffness(space, 4), stiffness(space, 6)))
        if kind is not ElementKind.P1_BUBBLE:
            pairs.append((mass(space, 4), mass(space, 6)))
        for pkind in (ElementKind.P0, ElementKind.P1):
            p = build_space(pkind, mesh)
            pairs.append((divergence(space, p, 4), divergence(space, p, 6)))
    p1 = build_space(ElementKind.P1, mesh)
    v1 = build_space(ElementKind.P1, mesh, components=2)
    pairs.append((grad_coupling(v1, p1, 4), grad_coupling(v1, p1, 6)))
    worst = 0.0
    for low, high in pairs:
        a, b = low.to_dense(), high.to_dense()
        worst = max(worst, np.linalg.norm(a - b)
                    / max(np.linalg.norm(b), 1e-30))
    return CheckResult(13, "assembly re-quadrature identity <= 1e-12 (n=2)",
                       worst <= 1e-12, f"worst relative gap={worst:.2e}")


CHECKS = (
    check_taylor_hood_stability,
    check_equal_order_decay,
    check_mini_stability,
    check_checkerboard_mode,
    check_loss_convergence,
    check_brezzi_pitkaranta_convergence,
    check_taylor_hood_convergence,
    check_locking_and_cure,
    check_multiplier_elimination,
    check_nitsche,
    check_penalty_multiplier_equivalence,
    check_svd_kernel,
    check_assembly_requadrature,
)


def run_all(seed: int = 42) -> list[CheckResult]:
    return [fn(seed) if fn is check_svd_kernel else fn() for fn in CHECKS]
