"""Cell-problem solver: integrator, period map, mean constraint, bounds."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjhom import (
    get_hamiltonian,
    integrate_cell_ode,
    momentum_bounds,
    reflect,
    sandwich_bounds,
    solve_cell,
    solve_cell_many,
    solve_lambda_for_periodicity,
    sweep_hbar,
    zero_potential,
    cosine_potential,
    constant_potential,
)
from hjhom.cell import validate_corrector
from hjhom.errors import Blowup
from hjhom.potentials import reflect_potential

QUAD = get_hamiltonian("quadratic")
COS = cosine_potential(1.0)


def test_integrator_constant_equilibrium():
    f, f_end = integrate_cell_ode(QUAD, zero_potential(), 0.5, 1.0, N=256)
    assert np.max(np.abs(f - 1.0)) == 0.0
    assert f_end == 1.0


def test_integrator_decay_toward_equilibrium():
    # autonomous phase line: f' = (1 - f^2)/2 from 1.1 decays toward 1;
    # closed form f(x) = coth(arccoth(1.1) + x/2) is the oracle
    f, f_end = integrate_cell_ode(QUAD, zero_potential(), 0.5, 1.1, N=512)
    assert np.all(np.diff(f) < 0.0)
    assert 1.0 < f_end < 1.1
    x0 = 0.5 * math.log(2.1 / 0.1)  # arccoth(1.1)
    exact = 1.0 / math.tanh(x0 + 0.5)
    assert abs(f_end - exact) < 1e-12


def test_integrator_monotone_in_lambda():
    _, e1 = integrate_cell_ode(QUAD, COS, 0.2, 0.0, N=256)
    _, e2 = integrate_cell_ode(QUAD, COS, 0.5, 0.0, N=256)
    assert e2 > e1


def test_integrator_blowup_guard():
    with pytest.raises(Blowup):
        integrate_cell_ode(QUAD, zero_potential(), -50.0, 0.0, N=256)


@settings(max_examples=12, deadline=None)
@given(p0=st.floats(-1.5, 1.5), dlam=st.floats(0.01, 1.0),
       dp=st.floats(0.01, 0.5))
def test_period_map_monotone(p0, dlam, dp):
    lam = float(QUAD.eval(p0)) + 0.2
    _, e = integrate_cell_ode(QUAD, COS, lam, p0, N=128)
    _, e_lam = integrate_cell_ode(QUAD, COS, lam + dlam, p0, N=128)
    _, e_p = integrate_cell_ode(QUAD, COS, lam, p0 + dp, N=128)
    assert e_lam > e
    assert e_p > e


def test_lambda_solver_constant_solution():
    lam, f = solve_lambda_for_periodicity(QUAD, zero_potential(), 1.0, N=256)
    assert abs(lam - 0.5) < 1e-12
    assert np.max(np.abs(f - 1.0)) < 1e-12


def test_lambda_solver_constant_shift():
    G = get_hamiltonian("multid_g1")
    lam, f = solve_lambda_for_periodicity(G, constant_potential(0.3), 0.7, N=256)
    assert abs(lam - (float(G.eval(0.7)) + 0.3)) < 1e-10
    assert np.max(np.abs(f - 0.7)) < 1e-10


def test_lambda_solver_agrees_with_eigen_oracle():
    from hjhom.pde import hopf_cole_oracle

    lam, f = solve_lambda_for_periodicity(QUAD, COS, 0.0)
    theta = float(np.trapezoid(f, np.linspace(0, 1, len(f))))
    hb = hopf_cole_oracle(COS, theta, n_x=512)
    assert abs(lam - hb) < 1e-6


def test_solve_cell_zero_potential_identity():
    for name in ("quadratic", "fig2_bump", "fig3_flat", "multid_g1"):
        G = get_hamiltonian(name)
        sol = solve_cell(G, zero_potential(), 1.0)
        assert sol.hbar == pytest.approx(float(G.eval(1.0)), abs=1e-12)
        assert np.max(np.abs(sol.f_grid - 1.0)) == 0.0


def test_solve_cell_full_path_matches_shortcircuit():
    # push V = 0 through the genuine shooting path
    for theta in (-0.7, 0.0, 1.3):
        sol = solve_cell(QUAD, zero_potential(), theta, N=512,
                         allow_shortcircuit=False)
        assert abs(sol.hbar - 0.5 * theta**2) < 1e-8
        assert np.max(np.abs(sol.f_grid - theta)) < 1e-8


def test_corrector_invariants_cosine():
    sol = solve_cell(QUAD, COS, 0.4)
    rep = validate_corrector(sol, QUAD, COS)
    assert rep["mean_err"] < 1e-6
    assert rep["period_err"] < 1e-11
    assert rep["ode_resid"] < 1e-4
    assert rep["sandwich_ok"] and rep["momentum_ok"]


def test_corrector_ordering_and_uniform_band():
    # strict ordering of correctors in theta, and the difference stays inside
    # the exponential band at every node
    from hjhom.diagnostics import check_bounds_lemma

    sols = solve_cell_many(QUAD, COS, [0.1, 0.45], N=1024)
    rep = check_bounds_lemma(sols[0], sols[1], QUAD)
    assert rep.ordered
    assert rep.n_violations == 0
    assert rep.mean_gap == pytest.approx(0.35, abs=1e-6)


def test_constant_potential_band_is_tight():
    from hjhom.diagnostics import check_bounds_lemma

    a = solve_cell(QUAD, constant_potential(0.2), 0.0, N=512)
    b = solve_cell(QUAD, constant_potential(0.2), 0.5, N=512)
    rep = check_bounds_lemma(a, b, QUAD)
    assert rep.ordered and rep.n_violations == 0
    assert np.max(np.abs((b.f_grid - a.f_grid) - 0.5)) == 0.0


def test_sweep_zero_potential_reproduces_G():
    sw = sweep_hbar(get_hamiltonian("fig3_flat"), zero_potential(), -2, 2, 41)
    expect = np.asarray(get_hamiltonian("fig3_flat").eval(sw.thetas))
    assert np.max(np.abs(sw.hbars - expect)) < 1e-12
    assert not sw.failures


def test_sweep_reflection_covariance():
    # sweeping the reflected system reverses the curve in theta
    G = get_hamiltonian("fig2_bump")
    sw = sweep_hbar(G, COS, -0.8, 0.8, 17, N=512)
    sw_r = sweep_hbar(reflect(G), reflect_potential(COS), -0.8, 0.8, 17, N=512)
    assert np.allclose(sw_r.hbars, sw.hbars[::-1], atol=5e-10)


def test_grid_refinement_is_fourth_order():
    V = cosine_potential(2.5)
    ref = solve_cell(QUAD, V, 0.3, N=16384, tol_period=1e-13,
                     tol_theta=1e-12).hbar
    errs = [abs(solve_cell(QUAD, V, 0.3, N=n, tol_period=1e-13,
                           tol_theta=1e-12).hbar - ref)
            for n in (512, 1024, 2048)]
    assert errs[0] / errs[1] > 8.0
    assert errs[1] / errs[2] > 8.0


def test_sandwich_and_momentum_bounds_definitions():
    lo, up = sandwich_bounds(QUAD, COS, 0.5)
    assert lo == pytest.approx(0.125 - 1.0, abs=1e-9)
    assert up == pytest.approx(0.125 + 1.0, abs=1e-9)
    pm, pp = momentum_bounds(QUAD, COS, 0.5)
    # G(p) <= U - min V = 0.125 + 2 -> |p| <= sqrt(4.25)
    assert pm == pytest.approx(-math.sqrt(4.25), abs=1e-6)
    assert pp == pytest.approx(math.sqrt(4.25), abs=1e-6)


def test_batch_init_accepts_arrays():
    thetas = np.linspace(-0.5, 0.5, 5)
    init = (np.asarray(QUAD.eval(thetas), dtype=float), thetas.copy())
    sols = solve_cell_many(QUAD, COS, thetas, N=512, init=init)
    single = solve_cell(QUAD, COS, 0.0, N=512)
    mid = sols[2]
    assert abs(mid.hbar - single.hbar) < 1e-10


def test_sweep_jobs_deterministic():
    a = sweep_hbar(QUAD, COS, -0.5, 0.5, 9, N=512, jobs=1)
    b = sweep_hbar(QUAD, COS, -0.5, 0.5, 9, N=512, jobs=2)
    assert np.array_equal(a.hbars, b.hbars)
    assert np.array_equal(a.thetas, b.thetas)


def test_csv_potential_roundtrip(tmp_path):
    from hjhom.potentials import from_csv

    xs = np.linspace(0.0, 1.0, 257, endpoint=False)
    vs = np.cos(2 * np.pi * xs)
    path = tmp_path / "pot.csv"
    with open(path, "w") as fh:
        fh.write("x,V\n")
        for x, v in zip(xs, vs):
            fh.write("%.17g,%.17g\n" % (x, v))
    V = from_csv(path)
    q = np.linspace(0, 2, 101)
    assert np.max(np.abs(V.values(q) - np.cos(2 * np.pi * q))) < 1e-3
    assert abs(V.values(0.0) - V.values(1.0)) == 0.0
    sol = solve_cell(QUAD, V, 0.0, N=1024)
    ref = solve_cell(QUAD, COS, 0.0, N=1024)
    assert abs(sol.hbar - ref.hbar) < 1e-4


def test_synthesized_potential_lipschitz_metadata(fig3_certified):
    V = fig3_certified.value.bundle.V
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 1, 4000)
    y = x + rng.uniform(-1e-4, 1e-4, 4000)
    gap = np.abs(V.values(x) - V.values(y))
    assert np.all(gap <= V.lipschitz_const * np.abs(x - y) * (1 + 1e-6) + 1e-12)
