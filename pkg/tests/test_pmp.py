import math

import numpy as np
import pytest

from fuzzy_pmp.frac_ops import FracOrder
from fuzzy_pmp.fuzzy_core import GhCase, LevelGrid, LevelNotOnGridError, crisp, triangular
from fuzzy_pmp.pmp import (
    Feasibility,
    FeasibilityVerdict,
    LinearDynamics,
    Pairing,
    ProblemSpec,
    StationarySolveError,
    assemble_pmp_system,
    build_hamiltonian,
    check_diameter_feasibility,
    crisp_reduce,
    linear_dynamics_evaluators,
    stationary_solve,
)
from helpers import (
    GRID3,
    ex51_case1_hand,
    ex51_case2_hand,
    ex51_spec,
    ex52_hand,
    ex52_spec,
    ex53_spec,
    quad_cost,
    quad_cost_grad_1,
)


def _random_args(rng, ns):
    return {
        "t": float(rng.uniform(0.0, 2.0)),
        "x_lo": tuple(rng.uniform(-2, 2, ns)),
        "x_up": tuple(rng.uniform(-2, 2, ns)),
        "u_lo": float(rng.uniform(-2, 2)),
        "u_up": float(rng.uniform(-2, 2)),
        "p1": tuple(rng.uniform(-2, 2, ns)),
        "p2": tuple(rng.uniform(-2, 2, ns)),
    }


# --- linear dynamics helper ---------------------------------------------


def test_aligned_pairing_keeps_raw_coefficients():
    spec = ex51_spec(GhCase.CASE1)
    lo, up = spec.dynamics[0]((1.0,), (2.0,), 0.5, 1.5, 1.0)
    s = math.sin(1.0)
    assert abs(lo - (1.0 * 1.0 - s * 0.5)) <= 1e-15
    assert abs(up - (1.0 * 2.0 - s * 1.5)) <= 1e-15


def test_interval_pairing_splits_by_sign():
    spec = ex53_spec()
    # before t = 1/2 the state coefficient is negative: lower value uses x_up
    lo, up = spec.dynamics[0]((1.0,), (2.0,), 0.0, 0.0, 0.25)
    c = 2.0 * 0.25 - 1.0
    assert abs(lo - c * 2.0) <= 1e-15
    assert abs(up - c * 1.0) <= 1e-15
    # after t = 1/2 it is positive: lower with lower
    lo, up = spec.dynamics[0]((1.0,), (2.0,), 0.0, 0.0, 1.0)
    c = 2.0 * 1.0 - 1.0
    assert abs(lo - (c * 1.0 + math.sin(1.0) * 0.0)) <= 1e-15
    assert abs(up - c * 2.0) <= 1e-15


def test_linear_gradients_match_finite_differences(rng):
    spec = ex52_spec()
    args = _random_args(rng, 2)
    grad_lo, grad_up = spec.dynamics_grad[0](
        args["x_lo"], args["x_up"], args["u_lo"], args["u_up"], args["t"]
    )
    h = 1e-7

    def phi_lo(u_lo):
        return spec.dynamics[0](args["x_lo"], args["x_up"], u_lo, args["u_up"], args["t"])[0]

    fd = (phi_lo(args["u_lo"] + h) - phi_lo(args["u_lo"] - h)) / (2 * h)
    assert abs(grad_lo[4] - fd) <= 1e-7
    assert grad_up[4] == 0.0


# --- Hamiltonian ----------------------------------------------------------


def test_hamiltonian_first_case_formula(rng):
    spec = ex51_spec(GhCase.CASE1)
    ham = build_hamiltonian(spec)
    for _ in range(50):
        a = _random_args(rng, 1)
        s = math.sin(a["t"])
        c = 2.0 * a["t"] - 1.0
        expected = (
            -(a["u_lo"] ** 2 + a["u_up"] ** 2)
            + a["p1"][0] * (c * a["x_lo"][0] - s * a["u_lo"])
            + a["p2"][0] * (c * a["x_up"][0] - s * a["u_up"])
        )
        got = ham.value(a["x_lo"], a["x_up"], a["u_lo"], a["u_up"], a["p1"], a["p2"], a["t"])
        assert abs(got - expected) <= 1e-12


def test_hamiltonian_second_case_swaps_pairing(rng):
    spec = ex51_spec(GhCase.CASE2)
    ham = build_hamiltonian(spec)
    for _ in range(50):
        a = _random_args(rng, 1)
        s = math.sin(a["t"])
        c = 2.0 * a["t"] - 1.0
        expected = (
            -(a["u_lo"] ** 2 + a["u_up"] ** 2)
            + a["p1"][0] * (c * a["x_up"][0] - s * a["u_up"])
            + a["p2"][0] * (c * a["x_lo"][0] - s * a["u_lo"])
        )
        got = ham.value(a["x_lo"], a["x_up"], a["u_lo"], a["u_up"], a["p1"], a["p2"], a["t"])
        assert abs(got - expected) <= 1e-12


def test_zero_problem_hamiltonian_vanishes(rng):
    lin = LinearDynamics(
        pairing=Pairing.ALIGNED,
        state_coef=(((lambda t: 0.0),),),
        control_coef=((lambda t: 0.0),),
        offset=((lambda t: 0.0),),
    )
    dynamics, dynamics_grad = linear_dynamics_evaluators(lin)
    spec = ProblemSpec(
        time=(0.0, 1.0),
        beta=FracOrder(1.0),
        n_states=1,
        cost=lambda *args: (0.0, 0.0),
        dynamics=dynamics,
        boundary_a=(crisp(0, GRID3),),
        boundary_b=(crisp(0, GRID3),),
        cases=(GhCase.CASE1,),
    )
    ham = build_hamiltonian(spec)
    for _ in range(20):
        a = _random_args(rng, 1)
        assert ham.value(a["x_lo"], a["x_up"], a["u_lo"], a["u_up"], a["p1"], a["p2"], a["t"]) == 0.0
        grad = ham.gradient(a["x_lo"], a["x_up"], a["u_lo"], a["u_up"], a["p1"], a["p2"], a["t"])
        assert np.max(np.abs(np.asarray(grad))) <= 1e-9


def test_case_symmetry_for_crisp_dynamics(rng):
    # dynamics whose endpoint pair is symmetric: both cases coincide
    def sym_dyn(x_lo, x_up, u_lo, u_up, t):
        value = math.cos(t)
        return value, value

    kwargs = dict(
        time=(0.0, 1.0),
        beta=FracOrder(1.0),
        n_states=1,
        cost=quad_cost,
        dynamics=(sym_dyn,),
        boundary_a=(crisp(0, GRID3),),
        boundary_b=(crisp(0, GRID3),),
    )
    ham1 = build_hamiltonian(ProblemSpec(cases=(GhCase.CASE1,), **kwargs))
    ham2 = build_hamiltonian(ProblemSpec(cases=(GhCase.CASE2,), **kwargs))
    for _ in range(30):
        a = _random_args(rng, 1)
        v1 = ham1.value(a["x_lo"], a["x_up"], a["u_lo"], a["u_up"], a["p1"], a["p2"], a["t"])
        v2 = ham2.value(a["x_lo"], a["x_up"], a["u_lo"], a["u_up"], a["p1"], a["p2"], a["t"])
        assert v1 == v2


def test_finite_difference_gradient_matches_analytic(rng):
    spec = ex51_spec(GhCase.CASE1)
    fd_spec = ProblemSpec(
        time=spec.time,
        beta=spec.beta,
        n_states=1,
        cost=spec.cost,
        dynamics=spec.dynamics,
        boundary_a=spec.boundary_a,
        boundary_b=spec.boundary_b,
        cases=spec.cases,
    )
    assert spec.gradient_mode == "analytic"
    assert fd_spec.gradient_mode == "finite-difference"
    exact = build_hamiltonian(spec)
    approx = build_hamiltonian(fd_spec)
    for _ in range(30):
        a = _random_args(rng, 1)
        g1 = np.asarray(exact.gradient(a["x_lo"], a["x_up"], a["u_lo"], a["u_up"], a["p1"], a["p2"], a["t"]))
        g2 = np.asarray(approx.gradient(a["x_lo"], a["x_up"], a["u_lo"], a["u_up"], a["p1"], a["p2"], a["t"]))
        scale = np.maximum(1.0, np.abs(g1))
        assert np.max(np.abs(g1 - g2) / scale) <= 1e-5


# --- stationarity -----------------------------------------------------------


def test_stationary_closed_forms(rng):
    spec1 = ex51_spec(GhCase.CASE1)
    ham1 = build_hamiltonian(spec1)
    spec2 = ex52_spec()
    ham2 = build_hamiltonian(spec2)
    for _ in range(30):
        a = _random_args(rng, 1)
        u = stationary_solve(ham1, a["p1"], a["p2"], a["x_lo"], a["x_up"], a["t"])
        s = math.sin(a["t"])
        assert abs(u[0] + a["p1"][0] * s / 2.0) <= 1e-12
        assert abs(u[1] + a["p2"][0] * s / 2.0) <= 1e-12
        b = _random_args(rng, 2)
        u2 = stationary_solve(ham2, b["p1"], b["p2"], b["x_lo"], b["x_up"], b["t"])
        assert abs(u2[0] - b["p1"][0] / 2.0) <= 1e-12
        assert abs(u2[1] - b["p2"][0] / 2.0) <= 1e-12


def test_stationary_zero_costates():
    ham = build_hamiltonian(ex51_spec(GhCase.CASE1))
    u = stationary_solve(ham, (0.0,), (0.0,), (1.0,), (2.0,), 1.5)
    assert u == (0.0, 0.0)


def test_stationary_failure_carries_last_iterate():
    # cost linear in the control: no stationary point exists
    lin = LinearDynamics(
        pairing=Pairing.ALIGNED,
        state_coef=(((lambda t: 0.0),),),
        control_coef=((lambda t: 0.0),),
        offset=((lambda t: 0.0),),
    )
    dynamics, dynamics_grad = linear_dynamics_evaluators(lin)
    spec = ProblemSpec(
        time=(0.0, 1.0),
        beta=FracOrder(1.0),
        n_states=1,
        cost=lambda x_lo, x_up, u_lo, u_up, t: (u_lo, u_up),
        dynamics=dynamics,
        boundary_a=(crisp(0, GRID3),),
        boundary_b=(crisp(0, GRID3),),
        cases=(GhCase.CASE1,),
    )
    ham = build_hamiltonian(spec)
    with pytest.raises(StationarySolveError) as err:
        stationary_solve(ham, (1.0,), (1.0,), (0.0,), (0.0,), 0.5)
    assert err.value.last_iterate is not None
    assert err.value.residual > 0


# --- system assembly -------------------------------------------------------


def test_assembled_boundary_rows_at_core_level():
    system = assemble_pmp_system(ex51_spec(GhCase.CASE1), 1.0)
    at_a, at_b = system.boundary_values()
    assert tuple(at_a) == (1.0, 1.0)
    assert tuple(at_b) == (-1.0, -1.0)


def test_assemble_rejects_off_grid_level():
    with pytest.raises(LevelNotOnGridError):
        assemble_pmp_system(ex51_spec(GhCase.CASE1), 0.3)


def test_equation_counts():
    system = assemble_pmp_system(ex52_spec(), 0.5)
    assert system.equation_counts == {
        "adjoint": 4,
        "stationary": 2,
        "state": 4,
        "boundary": 8,
    }


@pytest.mark.parametrize(
    "spec_builder,hand",
    [
        (lambda: ex51_spec(GhCase.CASE1), ex51_case1_hand),
        (lambda: ex51_spec(GhCase.CASE2), ex51_case2_hand),
        (ex52_spec, ex52_hand),
    ],
)
def test_assembled_system_matches_hand_forms(spec_builder, hand, rng):
    spec = spec_builder()
    system = assemble_pmp_system(spec, 0.5)
    for _ in range(100):
        a = _random_args(rng, spec.n_states)
        expected = hand(a["t"], a["x_lo"], a["x_up"], a["u_lo"], a["u_up"], a["p1"], a["p2"])
        adj = system.adjoint_rhs(
            a["x_lo"], a["x_up"], a["u_lo"], a["u_up"], a["p1"], a["p2"], a["t"]
        )
        assert np.max(np.abs(adj - np.asarray(expected["adjoint"]))) <= 1e-12
        rates = system.state_rates(a["x_lo"], a["x_up"], a["u_lo"], a["u_up"], a["t"])
        assert np.max(np.abs(rates - np.asarray(expected["rates"]))) <= 1e-12
        control = system.solve_control(a["x_lo"], a["x_up"], a["p1"], a["p2"], a["t"])
        assert np.max(np.abs(np.asarray(control) - np.asarray(expected["control"]))) <= 1e-12


def test_variational_reduction_stationary_condition(rng):
    # dynamics equal to the control: the stationarity gives u_lo = p1 / 2
    lin = LinearDynamics(
        pairing=Pairing.ALIGNED,
        state_coef=(((lambda t: 0.0),),),
        control_coef=((lambda t: 1.0),),
        offset=((lambda t: 0.0),),
    )
    dynamics, dynamics_grad = linear_dynamics_evaluators(lin)
    spec = ProblemSpec(
        time=(0.0, 1.0),
        beta=FracOrder(1.0),
        n_states=1,
        cost=quad_cost,
        dynamics=dynamics,
        boundary_a=(triangular(-1, 0, 1, GRID3),),
        boundary_b=(triangular(-2, 0, 2, GRID3),),
        cases=(GhCase.CASE1,),
        cost_grad=quad_cost_grad_1,
        dynamics_grad=dynamics_grad,
        linear=lin,
    )
    system = assemble_pmp_system(spec, 0.0)
    for _ in range(20):
        p1 = float(rng.uniform(-3, 3))
        p2 = float(rng.uniform(-3, 3))
        u = system.solve_control((0.0,), (0.0,), (p1,), (p2,), 0.3)
        assert abs(u[0] - p1 / 2.0) <= 1e-12
        assert abs(u[1] - p2 / 2.0) <= 1e-12


def test_classical_reduction_adjoint_value():
    # at order one, the first-case adjoint right side at p1 = 1, t = 1.5
    # evaluates to 2*1.5 - 1 = 2
    system = assemble_pmp_system(ex51_spec(GhCase.CASE1), 1.0)
    adj = system.adjoint_rhs((0.0,), (0.0,), 0.0, 0.0, (1.0,), (0.0,), 1.5)
    assert adj[0] == 2.0


# --- crisp reduction --------------------------------------------------------


def test_crisp_reduce_collapses_cores():
    reduced = crisp_reduce(ex52_spec())
    assert reduced.boundary_a[0].is_crisp() and reduced.boundary_a[0].core() == (2.0, 2.0)
    assert reduced.boundary_b[0].core() == (0.0, 0.0)
    reduced53 = crisp_reduce(ex53_spec())
    assert reduced53.boundary_a[0].core() == (2.0, 2.0)
    assert reduced53.boundary_b[0].core() == (0.0, 0.0)


def test_crisp_reduce_idempotent():
    spec = ex52_spec()
    once = crisp_reduce(spec)
    twice = crisp_reduce(once)
    assert once == twice


def test_crisp_reduce_keeps_crisp_spec_unchanged():
    spec = ex53_spec(crisp_data=True)
    assert crisp_reduce(spec) == spec


# --- feasibility ------------------------------------------------------------


def test_feasibility_refutes_equal_width_plus_form():
    verdict = check_diameter_feasibility(ex53_spec())
    assert verdict.verdict is Feasibility.INFEASIBLE
    lo, hi = verdict.interval
    assert 0.5 - 1e-6 <= lo <= 0.5 + 1e-3
    assert abs(hi - 2.0) <= 1e-6
    assert "> 0" in verdict.certificate
    assert "width" in verdict.certificate


def test_feasibility_crisp_data_never_refuted():
    verdict = check_diameter_feasibility(ex53_spec(crisp_data=True))
    assert verdict.verdict is Feasibility.FEASIBLE


def test_feasibility_not_applicable_for_aligned_pairing():
    verdict = check_diameter_feasibility(ex51_spec(GhCase.CASE1))
    assert verdict.verdict is Feasibility.NOT_APPLICABLE


def test_feasibility_not_applicable_without_linear_metadata():
    spec = ex53_spec()
    stripped = ProblemSpec(
        time=spec.time,
        beta=spec.beta,
        n_states=1,
        cost=spec.cost,
        dynamics=spec.dynamics,
        boundary_a=spec.boundary_a,
        boundary_b=spec.boundary_b,
        cases=spec.cases,
    )
    verdict = check_diameter_feasibility(stripped)
    assert verdict.verdict is Feasibility.NOT_APPLICABLE


def test_feasibility_mismatched_widths_not_refuted():
    grid = GRID3
    lin = ex53_spec().linear
    spec = ex53_spec()
    widened = ProblemSpec(
        time=spec.time,
        beta=spec.beta,
        n_states=1,
        cost=spec.cost,
        dynamics=spec.dynamics,
        boundary_a=spec.boundary_a,
        boundary_b=(triangular(-2, 0, 2, grid),),
        cases=spec.cases,
        linear=lin,
    )
    assert check_diameter_feasibility(widened).verdict is Feasibility.FEASIBLE


def test_feasibility_random_crisp_specs(rng):
    for _ in range(20):
        value_a = float(rng.uniform(-3, 3))
        value_b = float(rng.uniform(-3, 3))
        spec = ex53_spec(crisp_data=True)
        shifted = ProblemSpec(
            time=spec.time,
            beta=spec.beta,
            n_states=1,
            cost=spec.cost,
            dynamics=spec.dynamics,
            boundary_a=(crisp(value_a, GRID3),),
            boundary_b=(crisp(value_b, GRID3),),
            cases=spec.cases,
            linear=spec.linear,
        )
        assert check_diameter_feasibility(shifted).verdict is not Feasibility.INFEASIBLE


def test_infeasible_verdict_requires_certificate():
    with pytest.raises(ValueError):
        FeasibilityVerdict(Feasibility.INFEASIBLE, "")
