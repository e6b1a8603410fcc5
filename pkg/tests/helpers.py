"""Hand-built problem fixtures shared across test modules.

These builders bypass the expression layer on purpose: they provide the
independently hand-coded evaluators used to cross-check the assembled
systems and give the solver tests a fast path.
"""

from __future__ import annotations

import math

from fuzzy_pmp.frac_ops import FracOrder
from fuzzy_pmp.fuzzy_core import GhCase, LevelGrid, crisp, triangular
from fuzzy_pmp.pmp import LinearDynamics, Pairing, ProblemSpec, linear_dynamics_evaluators

GRID3 = LevelGrid((0.0, 0.5, 1.0))


def quad_cost(x_lo, x_up, u_lo, u_up, t):
    return u_lo * u_lo, u_up * u_up


def quad_cost_grad_1(x_lo, x_up, u_lo, u_up, t):
    return (0.0, 0.0, 2.0 * u_lo, 0.0), (0.0, 0.0, 0.0, 2.0 * u_up)


def quad_cost_grad_2(x_lo, x_up, u_lo, u_up, t):
    return (0.0,) * 4 + (2.0 * u_lo, 0.0), (0.0,) * 4 + (0.0, 2.0 * u_up)


def ex51_linear() -> LinearDynamics:
    return LinearDynamics(
        pairing=Pairing.ALIGNED,
        state_coef=(((lambda t: 2.0 * t - 1.0),),),
        control_coef=((lambda t: -math.sin(t)),),
        offset=((lambda t: 0.0),),
    )


def ex51_spec(case: GhCase, beta: float = 1.0, grid: LevelGrid = GRID3) -> ProblemSpec:
    lin = ex51_linear()
    dynamics, dynamics_grad = linear_dynamics_evaluators(lin)
    return ProblemSpec(
        time=(1.0, 2.0),
        beta=FracOrder(beta),
        n_states=1,
        cost=quad_cost,
        dynamics=dynamics,
        boundary_a=(triangular(0.0, 1.0, 2.0, grid),),
        boundary_b=(triangular(-2.0, -1.0, 1.0, grid),),
        cases=(case,),
        cost_grad=quad_cost_grad_1,
        dynamics_grad=dynamics_grad,
        linear=lin,
        name=f"ex51-hand-case{case.value}",
    )


def ex52_linear() -> LinearDynamics:
    return LinearDynamics(
        pairing=Pairing.INTERVAL,
        state_coef=(
            ((lambda t: 0.0), (lambda t: -2.0)),
            ((lambda t: 2.0), (lambda t: 0.0)),
        ),
        control_coef=((lambda t: 1.0), (lambda t: 0.0)),
        offset=((lambda t: 0.0), (lambda t: 0.0)),
    )


def ex52_spec(grid: LevelGrid = GRID3) -> ProblemSpec:
    lin = ex52_linear()
    dynamics, dynamics_grad = linear_dynamics_evaluators(lin)
    b0 = triangular(1.0, 2.0, 3.0, grid)
    b1 = triangular(-0.5, 0.0, 0.5, grid)
    return ProblemSpec(
        time=(0.0, 1.0),
        beta=FracOrder(1.0),
        n_states=2,
        cost=quad_cost,
        dynamics=dynamics,
        boundary_a=(b0, b0),
        boundary_b=(b1, b1),
        cases=(GhCase.CASE1, GhCase.CASE2),
        cost_grad=quad_cost_grad_2,
        dynamics_grad=dynamics_grad,
        linear=lin,
        name="ex52-hand",
    )


def ex53_linear() -> LinearDynamics:
    return LinearDynamics(
        pairing=Pairing.INTERVAL,
        state_coef=(((lambda t: 2.0 * t - 1.0),),),
        control_coef=((lambda t: math.sin(t)),),
        offset=((lambda t: 0.0),),
    )


def ex53_spec(grid: LevelGrid = GRID3, crisp_data: bool = False) -> ProblemSpec:
    lin = ex53_linear()
    dynamics, dynamics_grad = linear_dynamics_evaluators(lin)
    if crisp_data:
        boundary_a = (crisp(2.0, grid),)
        boundary_b = (crisp(0.0, grid),)
    else:
        boundary_a = (triangular(1.0, 2.0, 3.0, grid),)
        boundary_b = (triangular(-1.0, 0.0, 1.0, grid),)
    return ProblemSpec(
        time=(0.0, 2.0),
        beta=FracOrder(1.0),
        n_states=1,
        cost=quad_cost,
        dynamics=dynamics,
        boundary_a=boundary_a,
        boundary_b=boundary_b,
        cases=(GhCase.CASE1,),
        cost_grad=quad_cost_grad_1,
        dynamics_grad=dynamics_grad,
        linear=lin,
        name="ex53-hand" + ("-crisp" if crisp_data else ""),
    )


def zero_dynamics_spec(grid: LevelGrid = GRID3, value: float = 0.75) -> ProblemSpec:
    """Trivial system: zero rates, equal crisp boundary data."""
    lin = LinearDynamics(
        pairing=Pairing.ALIGNED,
        state_coef=(((lambda t: 0.0),),),
        control_coef=((lambda t: 0.0),),
        offset=((lambda t: 0.0),),
    )
    dynamics, dynamics_grad = linear_dynamics_evaluators(lin)
    return ProblemSpec(
        time=(0.0, 1.0),
        beta=FracOrder(1.0),
        n_states=1,
        cost=quad_cost,
        dynamics=dynamics,
        boundary_a=(crisp(value, grid),),
        boundary_b=(crisp(value, grid),),
        cases=(GhCase.CASE1,),
        cost_grad=quad_cost_grad_1,
        dynamics_grad=dynamics_grad,
        linear=lin,
        name="trivial-constant",
    )


# hand-coded right sides of the three reference systems, in curve layout
# (x_lo_1, x_up_1, ...) for rates and (dH/dx_lo_i, dH/dx_up_i) for adjoints


def ex51_case1_hand(t, x_lo, x_up, u_lo, u_up, p1, p2):
    s = math.sin(t)
    c = 2.0 * t - 1.0
    return {
        "adjoint": (c * p1[0], c * p2[0]),
        "rates": (c * x_lo[0] - s * u_lo, c * x_up[0] - s * u_up),
        "control": (-p1[0] * s / 2.0, -p2[0] * s / 2.0),
    }


def ex51_case2_hand(t, x_lo, x_up, u_lo, u_up, p1, p2):
    s = math.sin(t)
    c = 2.0 * t - 1.0
    return {
        "adjoint": (c * p2[0], c * p1[0]),
        "rates": (c * x_up[0] - s * u_up, c * x_lo[0] - s * u_lo),
        "control": (-p2[0] * s / 2.0, -p1[0] * s / 2.0),
    }


def ex52_hand(t, x_lo, x_up, u_lo, u_up, p1, p2):
    return {
        "adjoint": (2.0 * p2[1], 2.0 * p1[1], -2.0 * p2[0], -2.0 * p1[0]),
        "rates": (
            -2.0 * x_up[1] + u_lo,
            -2.0 * x_lo[1] + u_up,
            2.0 * x_up[0],
            2.0 * x_lo[0],
        ),
        "control": (p1[0] / 2.0, p2[0] / 2.0),
    }


MALFORMED_EXPRESSIONS: tuple[tuple[str, int], ...] = (
    ("", 0),
    ("2*", 2),
    ("(1+2", 4),
    ("1+*2", 2),
    ("sin", 3),
    ("foo", 0),
    ("x10", 0),
    ("1+^2", 2),
    ("2**3", 2),
    ("()", 1),
    ("1/", 2),
    ("2^", 2),
    ("sin()", 4),
    ("sin(1", 5),
    ("((1)", 4),
    ("t t", 2),
    ("1..2", 2),
    ("u^(2", 4),
    ("-", 1),
    ("cos 3", 4),
)
