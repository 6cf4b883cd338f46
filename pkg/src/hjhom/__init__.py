"""Effective Hamiltonians for 1-D periodic homogenization of viscous
Hamilton-Jacobi equations, counterexample synthesis, and quasiconvexity
certification."""

from .hamiltonians import (
    BumpParams,
    Hamiltonian1D,
    build_breve_G,
    build_J,
    bump_psi,
    bump_psi_d1,
    bump_psi_d2,
    get_hamiltonian,
    load_hamiltonian_csv,
    modify_convex_to_quasiconvex,
    reflect,
    with_bump,
)
from .potentials import (
    PeriodicPotential,
    constant_potential,
    cosine_potential,
    reflect_potential,
    zero_potential,
)
from .cell import (
    CorrectorSolution,
    SweepResult,
    integrate_cell_ode,
    momentum_bounds,
    sandwich_bounds,
    solve_cell,
    solve_cell_many,
    solve_lambda_for_periodicity,
    sweep_hbar,
)
from .diagnostics import (
    BoundsReport,
    LinearizedSolution,
    QuasiconvexityCertificate,
    certify_nonquasiconvex,
    check_bounds_lemma,
    compute_I,
    linearized_periodic_solution,
    predict_local_growth,
)
from .synth import (
    CounterexampleBundle,
    ProfileSpec,
    build_counterexample,
    build_profile,
    compute_L,
    select_ell,
    synthesize_potential,
)
from .pipeline import (
    CertifiedCounterexample,
    certify_bundle,
    load_bundle,
    run_pipeline,
    save_bundle,
)
from .pde import ParabolicRun, hopf_cole_oracle, long_time_slope
from .multid import (
    SeparableSystem,
    build_separable_system,
    check_sublevel_convexity,
    compute_M,
    effective_sum,
    segment_scan,
)

__version__ = "0.1.0"
