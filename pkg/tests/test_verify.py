"""Slope fitting and convergence report plumbing."""

import numpy as np
import pytest

from infsup_lab import stokes, verify
from infsup_lab.linalg import SingularMatrix
from infsup_lab.mesh import unit_square_mesh


def test_fit_slope_two_points():
    assert verify.fit_slope([1.0, 0.5], [4.0, 1.0]) == pytest.approx(2.0)


def test_fit_slope_exact_power_law():
    assert verify.fit_slope([1, 0.5, 0.25], [4, 1, 0.25]) == pytest.approx(2.0, abs=1e-12)


def test_fit_slope_degenerate():
    with pytest.raises(verify.DegenerateFit):
        verify.fit_slope([1.0], [1.0])
    with pytest.raises(verify.DegenerateFit):
        verify.fit_slope([1.0, 0.5], [1.0, 0.0])
    with pytest.raises(verify.DegenerateFit):
        verify.fit_slope([1.0, -0.5], [1.0, 1.0])


def test_fit_slope_noisy_quadratic():
    rng = np.random.default_rng(11)
    hs = 2.0 ** -np.arange(6)
    errs = hs ** 2 * (1.0 + 0.05 * rng.uniform(-1, 1, size=6))
    assert 1.85 <= verify.fit_slope(hs, errs) <= 2.15


def test_fit_slope_scale_invariant():
    rng = np.random.default_rng(12)
    hs = 2.0 ** -np.arange(5)
    errs = hs ** 1.5 * (1.0 + 0.1 * rng.uniform(-1, 1, size=5))
    s1 = verify.fit_slope(hs, errs)
    s2 = verify.fit_slope(hs, 1e6 * errs)
    assert abs(s1 - s2) <= 1e-12


def test_run_convergence_synthetic():
    report = verify.run_convergence(
        lambda n: {"err": 3.0 * (np.sqrt(2) / n) ** 2, "flat": 7.0},
        [4, 8, 16], method="synthetic", problem="powerlaw")
    assert report.slopes["err"] == pytest.approx(2.0, abs=1e-10)
    assert report.slopes["flat"] == pytest.approx(0.0, abs=1e-12)
    hs = [lv.h for lv in report.levels]
    assert hs == sorted(hs, reverse=True)


def test_run_convergence_too_few_levels_no_slopes():
    report = verify.run_convergence(lambda n: {"err": 1.0 / n}, [4, 8])
    assert report.slopes == {}
    assert len(report.levels) == 2


def test_run_convergence_records_failures():
    def builder(n):
        if n == 8:
            raise SingularMatrix("forced")
        return {"err": (1.0 / n) ** 2}

    report = verify.run_convergence(builder, [4, 8, 16, 32])
    failed = [lv for lv in report.levels if lv.failure]
    assert len(failed) == 1 and "SingularMatrix" in failed[0].failure
    # three healthy levels remain, enough for a fit
    assert report.slopes["err"] == pytest.approx(2.0, abs=1e-10)

    short = verify.run_convergence(builder, [4, 8, 16])
    assert short.slopes == {}


def test_run_convergence_stokes_integration():
    exact = stokes.manufactured_problem()

    def builder(n):
        sol = stokes.run(stokes.method_from_name("brezzi-pitkaranta"),
                         unit_square_mesh(n), exact.f)
        u_l2, u_h1, p_l2 = stokes.errors(sol, exact)
        return {"err_u_l2": u_l2, "err_u_h1": u_h1, "err_p_l2": p_l2}

    report = verify.run_convergence(builder, [4, 8, 16],
                                    method="brezzi-pitkaranta", problem="mms")
    assert report.slopes["err_u_h1"] >= 0.8
    assert report.slopes["err_u_l2"] >= 1.7


def test_report_serialization_views():
    report = verify.run_convergence(
        lambda n: {"e1": 1.0 / n, "e2": 2.0 / n}, [2, 4, 8],
        method="m", problem="p")
    d = verify.report_dict(report)
    assert d["method"] == "m" and len(d["levels"]) == 3
    assert set(d["slopes"]) == {"e1", "e2"}
    header, rows = verify.report_rows(report)
    assert header == ["level", "h", "e1", "e2"]
    assert len(rows) == 3 and rows[0][0] == 0
    assert rows[0][1] == pytest.approx(np.sqrt(2) / 2)


def test_report_rows_with_failure_blank_cells():
    def builder(n):
        if n == 4:
            raise ValueError("boom")
        return {"err": 1.0 / n}

    report = verify.run_convergence(builder, [2, 4, 8])
    header, rows = verify.report_rows(report)
    assert rows[1][2] == ""        # failed level leaves the column empty
    assert verify.report_dict(report)["levels"][1]["failure"].startswith("ValueError")
