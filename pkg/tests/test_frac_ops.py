import math

import numpy as np
import pytest

from fuzzy_pmp.frac_ops import (
    CaputoCaseError,
    FracOrder,
    GridTooShortError,
    QuadratureWeights,
    caputo_left,
    fuzzy_caputo_gh,
    integration_by_parts_residual,
    rl_derivative_right,
    rl_integral_left,
)
from fuzzy_pmp.fuzzy_core import (
    FuzzyNumber,
    FuzzyTrajectory,
    GhCase,
    GridMismatchError,
    LevelGrid,
    TimeGrid,
    crisp,
    triangular,
)

GRID = LevelGrid.uniform(5)


def test_frac_order_domain():
    with pytest.raises(ValueError):
        FracOrder(0.0)
    with pytest.raises(ValueError):
        FracOrder(1.5)
    assert FracOrder(1.0).is_integer
    assert not FracOrder(0.5).is_integer


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8, 1.0])
@pytest.mark.parametrize("interval", [(0.0, 1.0), (1.0, 2.5)])
def test_weight_tables_exact_on_constants(alpha, interval):
    tg = TimeGrid.uniform(*interval, 301)
    assert QuadratureWeights.left(tg, alpha).row_sum_defect() <= 1e-12
    assert QuadratureWeights.right(tg, alpha).row_sum_defect() <= 1e-12


def test_left_integral_of_zero():
    tg = TimeGrid.uniform(0.0, 1.0, 65)
    out = rl_integral_left(np.zeros(65), tg, 0.5)
    assert np.max(np.abs(out)) == 0.0
    assert out[0] == 0.0


def test_left_integral_of_one_half_order():
    # closed form 2 sqrt(x-a) / sqrt(pi), cross-checked by adaptive quadrature
    from scipy.integrate import quad

    tg = TimeGrid.uniform(1.0, 2.0, 513)
    t = tg.as_array()
    out = rl_integral_left(np.ones_like(t), tg, 0.5)
    closed = 2.0 * np.sqrt(t - 1.0) / math.sqrt(math.pi)
    assert np.max(np.abs(out - closed)) <= 1e-10
    x = t[-1]
    oracle = quad(lambda s: (x - s) ** (-0.5), 1.0, x)[0] / math.gamma(0.5)
    assert abs(out[-1] - oracle) <= 1e-8


def test_left_integral_order_one_is_trapezoid():
    tg = TimeGrid.uniform(0.5, 2.0, 257)
    t = tg.as_array()
    out = rl_integral_left(t - 0.5, tg, 1.0)
    assert np.max(np.abs(out - (t - 0.5) ** 2 / 2.0)) <= 1e-12


def test_caputo_annihilates_constants():
    tg = TimeGrid.uniform(0.0, 3.0, 401)
    out = caputo_left(np.full(401, 7.25), tg, 0.6)
    assert np.max(np.abs(out)) <= 1e-10


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.8])
@pytest.mark.parametrize("p", [1, 2])
def test_caputo_monomials_closed_form(beta, p):
    tg = TimeGrid.uniform(1.0, 2.0, 1025)
    t = tg.as_array()
    out = caputo_left((t - 1.0) ** p, tg, beta)
    closed = math.gamma(p + 1) / math.gamma(p + 1 - beta) * (t - 1.0) ** (p - beta)
    assert np.max(np.abs(out - closed)) <= 1e-3


def test_right_derivative_of_zero():
    tg = TimeGrid.uniform(0.0, 1.0, 65)
    assert np.max(np.abs(rl_derivative_right(np.zeros(65), tg, 0.4))) == 0.0


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.8])
def test_right_derivative_monomial_closed_form(beta):
    tg = TimeGrid.uniform(0.0, 2.0, 1025)
    t = tg.as_array()
    out = rl_derivative_right(2.0 - t, tg, beta)
    closed = (2.0 - t) ** (1.0 - beta) / math.gamma(2.0 - beta)
    assert np.max(np.abs(out - closed)) <= 1e-3


def test_right_derivative_sign_convention_at_order_one():
    tg = TimeGrid.uniform(0.0, 1.0, 101)
    t = tg.as_array()
    out = rl_derivative_right(t, tg, 1.0)
    assert np.max(np.abs(out + 1.0)) <= 1e-12


def test_sample_grid_mismatch():
    tg = TimeGrid.uniform(0.0, 1.0, 33)
    with pytest.raises(GridMismatchError):
        caputo_left(np.zeros(32), tg, 0.5)
    with pytest.raises(GridMismatchError):
        rl_derivative_right(np.zeros(34), tg, 0.5)


def test_grid_too_short():
    tg = TimeGrid.uniform(0.0, 1.0, 2)
    with pytest.raises(GridTooShortError):
        caputo_left(np.zeros(2), tg, 0.5)


# --- invariants ---------------------------------------------------------


def test_linearity_is_exact():
    tg = TimeGrid.uniform(0.0, 1.0, 129)
    t = tg.as_array()
    f = np.sin(t)
    g = t**2
    lhs = caputo_left(2.5 * f + 0.75 * g, tg, 0.4)
    rhs = 2.5 * caputo_left(f, tg, 0.4) + 0.75 * caputo_left(g, tg, 0.4)
    assert np.max(np.abs(lhs - rhs)) <= 1e-13


def test_inversion_error_decreases_under_refinement():
    errors = []
    for n in (129, 257, 513):
        tg = TimeGrid.uniform(0.0, 1.0, n)
        t = tg.as_array()
        f = np.sin(t) + t**2
        rec = rl_integral_left(caputo_left(f, tg, 0.5), tg, 0.5)
        errors.append(np.max(np.abs(rec - (f - f[0]))))
    assert errors[0] > errors[1] > errors[2]


def test_integer_limit_matches_difference_stencils():
    tg = TimeGrid.uniform(0.0, 1.0, 51)
    t = tg.as_array()
    for samples, slope in ((np.full_like(t, 2.0), 0.0), (3.0 * t - 1.0, 3.0)):
        assert np.max(np.abs(caputo_left(samples, tg, 1.0) - slope)) <= 1e-12
        assert np.max(np.abs(rl_derivative_right(samples, tg, 1.0) + slope)) <= 1e-12


def test_operators_accept_sample_columns():
    tg = TimeGrid.uniform(0.0, 1.0, 65)
    t = tg.as_array()
    block = np.column_stack([t, t**2])
    out = caputo_left(block, tg, 0.5)
    assert out.shape == (65, 2)
    assert np.allclose(out[:, 0], caputo_left(t, tg, 0.5))


# --- fuzzy Caputo -------------------------------------------------------


def test_fuzzy_caputo_constant_trajectory():
    tg = TimeGrid.uniform(0.0, 1.0, 33)
    traj = FuzzyTrajectory(tg, (triangular(0, 1, 2, GRID),) * 33)
    deriv, cases = fuzzy_caputo_gh(traj, 0.5)
    assert all(case is GhCase.CASE1 for case in cases)
    assert np.max(np.abs(deriv.low_matrix())) <= 1e-10
    assert np.max(np.abs(deriv.up_matrix())) <= 1e-10


def test_fuzzy_caputo_crisp_drift():
    # fuzzy constant plus crisp linear drift: both endpoint derivatives
    # equal the monomial closed form, ties classify as the first case
    beta = 0.6
    tg = TimeGrid.uniform(0.0, 1.0, 257)
    base = triangular(0, 1, 2, GRID)
    values = tuple(
        FuzzyNumber(GRID, tuple(v + t for v in base.low), tuple(v + t for v in base.up))
        for t in tg.nodes
    )
    deriv, cases = fuzzy_caputo_gh(FuzzyTrajectory(tg, values), beta)
    assert all(case is GhCase.CASE1 for case in cases)
    t = tg.as_array()
    closed = t ** (1.0 - beta) / math.gamma(2.0 - beta)
    assert np.max(np.abs(deriv.low_matrix() - closed[:, None])) <= 1e-10


def test_fuzzy_caputo_linear_growth():
    beta = 0.5
    tg = TimeGrid.uniform(0.0, 1.0, 257)
    base = triangular(0, 1, 2, GRID)
    values = tuple(
        FuzzyNumber(GRID, tuple(v * t for v in base.low), tuple(v * t for v in base.up))
        for t in tg.nodes
    )
    deriv, cases = fuzzy_caputo_gh(FuzzyTrajectory(tg, values), beta)
    assert all(case is GhCase.CASE1 for case in cases)
    t = tg.as_array()
    r = GRID.as_array()
    factor = t**0.5 / math.gamma(1.5)
    assert np.max(np.abs(deriv.low_matrix() - np.outer(factor, r))) <= 1e-10
    assert np.max(np.abs(deriv.up_matrix() - np.outer(factor, 2.0 - r))) <= 1e-10


def test_fuzzy_caputo_mixed_ordering_raises():
    two = LevelGrid((0.0, 1.0))
    tg = TimeGrid.uniform(0.0, 1.0, 65)
    values = tuple(
        FuzzyNumber(two, (0.0, 0.4 - 0.2 * t), (1.0 - 0.2 * t, 0.6)) for t in tg.nodes
    )
    with pytest.raises(CaputoCaseError):
        fuzzy_caputo_gh(FuzzyTrajectory(tg, values), 0.5)


# --- integration by parts -------------------------------------------------


def test_ibp_zero_curve():
    tg = TimeGrid.uniform(0.0, 1.0, 65)
    assert integration_by_parts_residual(np.ones(65), np.zeros(65), tg, 0.5) == 0.0


def test_ibp_classical_limit_decreases():
    residuals = []
    for n in (65, 129, 257):
        tg = TimeGrid.uniform(0.0, 1.0, n)
        t = tg.as_array()
        x = t * (1.0 - t)
        p = np.cos(t)
        residuals.append(integration_by_parts_residual(p, x, tg, 1.0))
    assert residuals[0] > residuals[1] > residuals[2]


def test_ibp_half_order_parabola():
    # both sides equal 4 / (15 sqrt(pi)) analytically on [0, 1]
    tg = TimeGrid.uniform(0.0, 1.0, 1025)
    t = tg.as_array()
    x = t * (1.0 - t)
    p = np.ones_like(t)
    residual = integration_by_parts_residual(p, x, tg, 0.5)
    assert residual <= 1e-3
    common = 4.0 / (15.0 * math.sqrt(math.pi))
    lhs = np.trapezoid(p * caputo_left(x, tg, 0.5), t)
    assert abs(lhs - common) <= 1e-3
