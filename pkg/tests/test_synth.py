"""Profile construction, potential synthesis, and the selection inequalities."""

import math

import numpy as np
import pytest

from hjhom import (
    build_counterexample,
    build_profile,
    compute_L,
    get_hamiltonian,
    select_ell,
    solve_cell,
    synthesize_potential,
)
from hjhom.errors import HypothesisViolation
from hjhom.hamiltonians import CERTIFIED_POINTS
from hjhom.numerics import max_abs_on
from hjhom.synth import (
    REGIME_CONCAVE,
    REGIME_RIGHT_CONVEX,
    slope_curvature_hypotheses,
    _adaptive_segment_integral,
)

QUAD = get_hamiltonian("quadratic")
FIG2 = get_hamiltonian("fig2_bump")
FIG3 = get_hamiltonian("fig3_flat")


def test_plateau_split_symmetric():
    assert compute_L(QUAD, -1.0, 1.0) == pytest.approx(0.5)


def test_plateau_split_formula():
    # slopes (-2, 1) -> L = 1/3
    assert compute_L(QUAD, -2.0, 1.0) == pytest.approx(1.0 / 3.0)


def test_plateau_split_balances_slopes():
    for (p1, p2) in ((-1.0, 1.0), (-0.3, 0.9), (-2.0, 0.5)):
        L = compute_L(QUAD, p1, p2)
        assert abs(float(QUAD.d1(p1)) * L + float(QUAD.d1(p2)) * (1 - L)) < 1e-15


def test_plateau_split_requires_sign_change():
    with pytest.raises(HypothesisViolation):
        compute_L(QUAD, 0.5, 1.0)


def test_select_ell_regimes():
    ell3, reg3 = select_ell(FIG3, *CERTIFIED_POINTS["fig3_flat"])
    assert reg3 == REGIME_CONCAVE
    assert 0 < ell3 < 0.5
    ell2, reg2 = select_ell(FIG2, *CERTIFIED_POINTS["fig2_bump"])
    assert reg2 == REGIME_RIGHT_CONVEX       # curvature at p2 is nonnegative
    assert 0 < ell2 < 0.5


def test_select_ell_small_ell_limit():
    # the ell -> 0 limit of the concave-regime expression
    p1, p2 = CERTIFIED_POINTS["fig3_flat"]
    L = compute_L(FIG3, p1, p2)
    k1 = max_abs_on(FIG3.d1, p1, p2)
    limit = (L * float(FIG3.d2(p1)) + (1 - L) * float(FIG3.d2(p2))) * math.exp(-k1)
    assert limit < 0.0


def test_hypotheses_fig_entries():
    hyp3 = slope_curvature_hypotheses(FIG3, *CERTIFIED_POINTS["fig3_flat"])
    assert hyp3.direct and hyp3.reflected    # both curvatures negative
    hyp2 = slope_curvature_hypotheses(FIG2, *CERTIFIED_POINTS["fig2_bump"])
    assert hyp2.direct and not hyp2.reflected


def test_profile_structure_and_mix():
    p1, p2 = CERTIFIED_POINTS["fig3_flat"]
    ell, _ = select_ell(FIG3, p1, p2)
    prof = build_profile(FIG3, p1, p2, ell)
    L = prof.L
    # plateaus exactly at the required values on the required windows
    xs_lo = np.linspace(0.0, L - ell, 101)
    xs_hi = np.linspace(L, 1.0 - ell, 101)
    assert np.all(prof.eval(xs_lo) == p1)
    assert np.all(prof.eval(xs_hi) == p2)
    xs = np.linspace(0, 1, 20001)
    f = prof.eval(xs)
    assert np.all(f >= p1 - 1e-15) and np.all(f <= p2 + 1e-15)
    # tuned slope integral vanishes
    assert abs(prof.integral_of(FIG3.d1)) < 1e-10
    assert 0.0 < prof.a < 1.0


def test_profile_mix_endpoints_bracket():
    # the two-sided inequality that guarantees the a=0 / a=1 integrals bracket 0
    p1, p2 = CERTIFIED_POINTS["fig3_flat"]
    ell, _ = select_ell(FIG3, p1, p2)
    prof = build_profile(FIG3, p1, p2, ell)
    lp = prof.ell_prime
    m1 = float(np.min(np.asarray(FIG3.d1(np.linspace(p1, p2, 4097)))))
    M1 = float(np.max(np.asarray(FIG3.d1(np.linspace(p1, p2, 4097)))))
    base = float(FIG3.d1(p1)) * (prof.L - ell) + float(FIG3.d1(p2)) * (1 - prof.L - ell)
    assert base + 2 * (ell - lp) * m1 + 2 * lp * M1 < 0
    assert base + 2 * (ell - lp) * M1 + 2 * lp * m1 > 0


def test_profile_c1_across_breakpoints():
    p1, p2 = CERTIFIED_POINTS["fig3_flat"]
    ell, _ = select_ell(FIG3, p1, p2)
    prof = build_profile(FIG3, p1, p2, ell)
    for b in prof.breakpoints[1:-1]:
        h = 1e-9
        left = (prof.eval(b) - prof.eval(b - h)) / h
        right = (prof.eval(b + h) - prof.eval(b)) / h
        # one-sided slopes agree to O(h) and match the closed-form derivative
        assert abs(left - right) < 1e-5 * max(1.0, abs(float(prof.d1(b))) + 1)
    # derivative is periodic (f' is Lipschitz, so values 1e-12 inside the
    # period agree with the endpoint up to Lip * 1e-12)
    assert float(prof.d1(0.0)) == 0.0
    assert abs(float(prof.d1(1.0 - 1e-12))) < 1e-6


def test_adaptive_segment_integral_matches_dense():
    p1, p2 = CERTIFIED_POINTS["fig2_bump"]
    ell, _ = select_ell(FIG2, p1, p2)
    prof = build_profile(FIG2, p1, p2, ell)
    ramp = max((s for s in prof.segments if not s.is_plateau),
               key=lambda s: abs(s.v - s.u))
    val = _adaptive_segment_integral(FIG2.d1, ramp)
    xs = np.linspace(ramp.x0, ramp.x1, 300001)
    from scipy.integrate import simpson

    dense = float(simpson(np.asarray(FIG2.d1(prof.eval(xs))), x=xs))
    assert abs(val - dense) < 1e-11


def test_synthesized_potential_identity():
    p1, p2 = CERTIFIED_POINTS["fig3_flat"]
    ell, _ = select_ell(FIG3, p1, p2)
    prof = build_profile(FIG3, p1, p2, ell)
    V, theta0 = synthesize_potential(FIG3, prof)
    xs = np.linspace(0, 1, 4001)
    resid = prof.d1(xs) + np.asarray(FIG3.eval(prof.eval(xs))) + V.values(xs)
    assert np.max(np.abs(resid)) == 0.0
    assert abs(V.values(0.0) - V.values(1.0 - 1e-13)) < 1e-8 * max(1, V.sup_abs)
    assert theta0 == pytest.approx(prof.mean(), abs=0)


def test_bundle_exactness_at_center():
    bundle = build_counterexample(FIG3, *CERTIFIED_POINTS["fig3_flat"])
    sol = solve_cell(bundle.G, bundle.V, bundle.theta0,
                     init=(0.0, float(bundle.profile.eval(0.0))))
    assert abs(sol.hbar) < 1e-8
    assert bundle.K1 == pytest.approx(max_abs_on(FIG3.d1, -0.25, 0.25))


def test_reflected_profile_consistency():
    p1, p2 = CERTIFIED_POINTS["fig3_flat"]
    ell, _ = select_ell(FIG3, p1, p2)
    prof = build_profile(FIG3, p1, p2, ell)
    refl = prof.reflect()
    xs = np.linspace(0, 1, 2001)
    # x -> -f(-x) up to the rotation that re-anchors the low plateau at 0
    assert refl.p1 == -prof.p2 and refl.p2 == -prof.p1
    assert refl.L == pytest.approx(1.0 - prof.L)
    assert refl.mean() == pytest.approx(-prof.mean(), abs=1e-14)
    assert abs(refl.integral_of(FIG3.d1)) < 1e-10  # for even-slope G' reflected
    assert np.all(refl.eval(xs) >= refl.p1 - 1e-15)
    assert np.all(refl.eval(xs) <= refl.p2 + 1e-15)


def test_case2_bundle_via_reflection():
    # modification window on the increasing side forces the reflected route
    from hjhom.hamiltonians import modify_convex_to_quasiconvex
    from hjhom.diagnostics import compute_I

    Gt, cand = modify_convex_to_quasiconvex(QUAD, 1.0, 2.0)
    bundle = build_counterexample(Gt, cand.p1, cand.p2)
    assert bundle.reflected
    sol = solve_cell(bundle.G, bundle.V, bundle.theta0,
                     init=(0.0, float(bundle.profile.eval(0.0))))
    assert abs(sol.hbar) < 1e-8
    assert abs(compute_I(sol, bundle.G)[1]) < 1e-8


def test_K1_monotone_limit_toward_center(fig3_certified):
    # pairwise Gronwall constants decrease to the window constant as c -> 0
    from hjhom.diagnostics import pairwise_K1
    from hjhom.cell import solve_cell_many

    res = fig3_certified.value
    b = res.bundle
    cs = [res.c / 2**k for k in range(4)]
    sols = solve_cell_many(b.G, b.V, [b.theta0 + c for c in cs], N=1024,
                           init=(0.0, float(b.profile.eval(0.0))))
    base = solve_cell(b.G, b.V, b.theta0, N=1024,
                      init=(0.0, float(b.profile.eval(0.0))))
    ks = [pairwise_K1(b.G, base.f_best, s.f_best) for s in sols]
    assert all(k2 <= k1 + 1e-12 for k1, k2 in zip(ks, ks[1:]))
    assert ks[-1] == pytest.approx(b.K1, abs=1e-3)
    assert all(k >= b.K1 - 1e-12 for k in ks)
