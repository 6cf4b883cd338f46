"""Separable d-dimensional assembly: curvature ratio, sublevel convexity,
effective sums, and budgets."""

import numpy as np
import pytest

from hjhom import (
    build_separable_system,
    check_sublevel_convexity,
    compute_M,
    effective_sum,
    get_hamiltonian,
    segment_scan,
)
from hjhom.errors import HypothesisViolation, OutOfBox
from hjhom.hamiltonians import Hamiltonian1D
from hjhom.multid import budget_check

G1 = get_hamiltonian("multid_g1")


def test_M_default_generator_stable_under_refinement():
    m1 = compute_M(G1, n=2**14)
    m2 = compute_M(G1, n=2**15)
    assert m1 > 0.0
    assert abs(m1 - m2) < 1e-4


def test_M_known_curvature_at_one():
    # G1''(1) = -1 and G1'(1) = 5, so M is at least 1/25
    assert compute_M(G1) >= 1.0 / 25.0 - 1e-12


def test_M_scaling_law():
    two_g1 = Hamiltonian1D("2*G1", lambda p: 2 * np.asarray(G1.eval(p)),
                           lambda p: 2 * np.asarray(G1.d1(p)),
                           lambda p: 2 * np.asarray(G1.d2(p)))
    assert compute_M(two_g1) == pytest.approx(0.5 * compute_M(G1), rel=1e-8)


def test_M_rejects_convex_generator():
    quad = get_hamiltonian("quadratic")
    with pytest.raises(HypothesisViolation):
        compute_M(quad)


@pytest.fixture(scope="module")
def sys2(multid_certified):
    return build_separable_system(multid_certified.value, 2)


def test_system_levels(sys2, multid_certified):
    res = multid_certified.value
    assert sys2.R == pytest.approx(sys2.R1 + (sys2.d - 1) * sys2.breve_R)
    assert sys2.M > 0.0
    assert float(sys2.breve_G.eval(sys2.c)) == pytest.approx(sys2.breve_R, abs=1e-12)
    assert sys2.breve_R < sys2.R
    assert sys2.c == res.c and sys2.theta0 == res.bundle.theta0


def test_sublevel_origin(sys2):
    assert float(sys2.value(np.zeros(2))) == 0.0
    # r = 0 sublevel set is the origin alone: nearby points exceed 0
    for p in ([1e-3, 0.0], [0.0, 1e-3], [-1e-3, 1e-3]):
        assert float(sys2.value(np.array(p))) > 0.0


def test_midpoint_convexity_probes(sys2):
    for frac in (0.25, 0.5, 1.0):
        rep = check_sublevel_convexity(sys2, frac * sys2.R, samples=20000, seed=7)
        assert rep.ok, rep.midpoint_violations[:2]
        assert rep.differential_min > 0.0


def test_differential_margin_at_origin(sys2):
    # the companion inequality gap at p = 0 equals 1 / (M (d-1))
    gap0 = (float(sys2.breve_G.d2(0.0))
            - sys2.M * (sys2.d - 1) * float(sys2.breve_G.d1(0.0)) ** 2)
    assert gap0 == pytest.approx(1.0 / (sys2.M * (sys2.d - 1)), rel=1e-12)


def test_effective_sum_zero_potentials():
    # with both potentials constant the effective sum is the plain sum of
    # the coordinate Hamiltonians
    from dataclasses import replace
    from hjhom import zero_potential
    from hjhom.multid import SeparableSystem
    from hjhom.hamiltonians import build_breve_G

    M = compute_M(G1)
    breve = build_breve_G(M, 2, 5.0)
    sys0 = SeparableSystem(d=2, G1=G1, V1=zero_potential(), breve_G=breve,
                           breve_V=zero_potential(), M=M, R=5.0, R1=4.0,
                           breve_R=1.0, c=0.5, theta0=0.0)
    th = np.array([0.3, -0.2])
    want = float(G1.eval(0.3)) + float(breve.eval(-0.2))
    assert effective_sum(sys0, th) == pytest.approx(want, abs=1e-12)


def test_effective_sum_box_guard(sys2):
    with pytest.raises(OutOfBox):
        effective_sum(sys2, np.array([sys2.theta0 + 2 * sys2.c, 0.0]))
    with pytest.raises(OutOfBox):
        effective_sum(sys2, np.array([sys2.theta0, 2 * sys2.c]))


def test_effective_sum_coordinate_decomposition(sys2):
    h1 = sys2._solve_coord("first", sys2.theta0, 4096).hbar
    h0 = sys2._solve_coord("companion", 0.0, 4096).hbar
    total = effective_sum(sys2, np.array([sys2.theta0, 0.0]))
    assert total == pytest.approx(h1 + (sys2.d - 1) * h0, abs=1e-12)
    assert h0 == 0.0   # zero companion potential at zero momentum


def test_segment_scan_matches_1d_certificate(sys2, multid_certified):
    from hjhom import certify_nonquasiconvex

    res = multid_certified.value
    thetas, vals = segment_scan(sys2, len(res.sweep.thetas), sweep=res.sweep)
    cert_d = certify_nonquasiconvex(thetas, vals)
    c1 = res.certificate
    assert cert_d is not None
    assert cert_d.theta_mid == pytest.approx(c1.theta_mid, abs=1e-10)
    assert cert_d.theta_left == pytest.approx(c1.theta_left, abs=1e-10)
    assert cert_d.margin == pytest.approx(c1.margin, abs=1e-9)


def test_budgets_along_segment(sys2, multid_certified):
    res = multid_certified.value
    # populate the coordinate cache from the certification sweep first
    segment_scan(sys2, len(res.sweep.thetas), sweep=res.sweep)
    report = budget_check(sys2, [sys2.theta0 - sys2.c, sys2.theta0,
                                 sys2.theta0 + sys2.c])
    assert report["first_ok"] and report["companion_ok"]
