"""Discrete fractional operators on shared time grids.

Left Riemann-Liouville integrals use product-trapezoidal weights: the
sample curve is interpolated piecewise linearly and integrated exactly
against the singular kernel, which keeps the weight tables triangular and
reproduces integrals of constants to rounding.  Left Caputo derivatives
fractionally integrate a three-point finite-difference derivative of the
samples (order 1 - alpha), so the order-1 limit degenerates to the plain
difference stencil with no singular kernels involved.  Right-sided
operators mirror the construction; the sign convention of the right
derivative is fixed so that at order 1 it returns the negated first
derivative.

Stencil orientation: for fractional orders the derivative stencils are
aligned with each operator's causal direction (backward-looking interior
stencils inside the left operator, forward-looking inside the right one).
Centered interior stencils, though equally accurate on smooth samples,
make the composed collocation equations singular-prone: they admit
node-alternating solutions, and equation systems built on them converge
to spurious branches.  All stencils used are second order, so values on
smooth samples are unaffected at that order.  The classical order-1
operators keep the centered/one-sided family; they are never inverted.

All tables are immutable once built and cached per (grid, order); the
operators themselves are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fuzzy_core import (
    FuzzyTrajectory,
    GhCase,
    GridMismatchError,
    TimeGrid,
)

__all__ = [
    "FracOrder",
    "GridTooShortError",
    "CaputoCaseError",
    "QuadratureWeights",
    "derivative_matrix",
    "left_integral_weights",
    "right_integral_weights",
    "caputo_left_matrix",
    "right_derivative_parts",
    "rl_integral_left",
    "caputo_left",
    "rl_derivative_right",
    "fuzzy_caputo_gh",
    "integration_by_parts_residual",
]


class GridTooShortError(ValueError):
    """The time grid has too few nodes for the requested stencil."""


class CaputoCaseError(ArithmeticError):
    """Endpoint Caputo derivatives mix orderings across levels."""


@dataclass(frozen=True)
class FracOrder:
    """Fractional order restricted to (0, 1]."""

    alpha: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", float(self.alpha))
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"order must lie in (0, 1], got {self.alpha}")

    @property
    def is_integer(self) -> bool:
        return self.alpha == 1.0


def _as_order(alpha: "float | FracOrder") -> FracOrder:
    return alpha if isinstance(alpha, FracOrder) else FracOrder(alpha)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@lru_cache(maxsize=64)
def _derivative_matrix_cached(nodes: tuple[float, ...]) -> np.ndarray:
    t = np.asarray(nodes)
    n = len(t)
    if n < 3:
        raise GridTooShortError("derivative stencils need at least 3 nodes")
    d = np.zeros((n, n))
    # second-order one-sided stencil at the first node
    h1 = t[1] - t[0]
    h2 = t[2] - t[1]
    d[0, 0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2))
    d[0, 1] = (h1 + h2) / (h1 * h2)
    d[0, 2] = -h1 / (h2 * (h1 + h2))
    # central three-point stencils in the interior
    for k in range(1, n - 1):
        h1 = t[k] - t[k - 1]
        h2 = t[k + 1] - t[k]
        d[k, k - 1] = -h2 / (h1 * (h1 + h2))
        d[k, k] = (h2 - h1) / (h1 * h2)
        d[k, k + 1] = h1 / (h2 * (h1 + h2))
    # mirrored one-sided stencil at the last node
    h1 = t[n - 1] - t[n - 2]
    h2 = t[n - 2] - t[n - 3]
    d[n - 1, n - 1] = (2.0 * h1 + h2) / (h1 * (h1 + h2))
    d[n - 1, n - 2] = -(h1 + h2) / (h1 * h2)
    d[n - 1, n - 3] = h1 / (h2 * (h1 + h2))
    return _readonly(d)


def derivative_matrix(time: TimeGrid) -> np.ndarray:
    """Three-point finite-difference derivative matrix (one-sided ends)."""
    return _derivative_matrix_cached(time.nodes)


def _apply_derivative(f: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Stencil application without forming the dense matrix."""
    if len(t) < 3:
        raise GridTooShortError("derivative stencils need at least 3 nodes")
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    h1 = (t[1:-1] - t[:-2]).reshape((-1,) + (1,) * (f.ndim - 1))
    h2 = (t[2:] - t[1:-1]).reshape((-1,) + (1,) * (f.ndim - 1))
    out[1:-1] = (
        -h2 / (h1 * (h1 + h2)) * f[:-2]
        + (h2 - h1) / (h1 * h2) * f[1:-1]
        + h1 / (h2 * (h1 + h2)) * f[2:]
    )
    a1 = t[1] - t[0]
    a2 = t[2] - t[1]
    out[0] = (
        -(2.0 * a1 + a2) / (a1 * (a1 + a2)) * f[0]
        + (a1 + a2) / (a1 * a2) * f[1]
        - a1 / (a2 * (a1 + a2)) * f[2]
    )
    b1 = t[-1] - t[-2]
    b2 = t[-2] - t[-3]
    out[-1] = (
        (2.0 * b1 + b2) / (b1 * (b1 + b2)) * f[-1]
        - (b1 + b2) / (b1 * b2) * f[-2]
        + b1 / (b2 * (b1 + b2)) * f[-3]
    )
    return out


def _interval_moments(gamma: float, big: np.ndarray, small: np.ndarray):
    """Exact kernel moments over one interpolation interval.

    For distances ``big > small >= 0`` from the evaluation point, returns
    (m0, m1) with ``m0 = integral of w^(gamma-1) dw`` and
    ``m1 = integral of (big - w) w^(gamma-1) dw`` over ``[small, big]``.
    """
    m0 = (big**gamma - small**gamma) / gamma
    m1 = big * m0 - (big ** (gamma + 1.0) - small ** (gamma + 1.0)) / (gamma + 1.0)
    return m0, m1


@lru_cache(maxsize=64)
def _left_weights_cached(nodes: tuple[float, ...], gamma: float) -> np.ndarray:
    t = np.asarray(nodes)
    n = len(t)
    w = np.zeros((n, n))
    gamma_const = math.gamma(gamma)
    for k in range(1, n):
        # piecewise-linear interpolation on [t_j, t_{j+1}], kernel (t_k - s)^(gamma-1)
        tj = t[:k]
        tj1 = t[1 : k + 1]
        h = tj1 - tj
        big = t[k] - tj
        small = t[k] - tj1
        m0, m1 = _interval_moments(gamma, big, small)
        left_coef = (m0 - m1 / h) / gamma_const
        right_coef = (m1 / h) / gamma_const
        np.add.at(w[k], np.arange(k), left_coef)
        np.add.at(w[k], np.arange(1, k + 1), right_coef)
    return _readonly(w)


@lru_cache(maxsize=64)
def _right_weights_cached(nodes: tuple[float, ...], gamma: float) -> np.ndarray:
    t = np.asarray(nodes)
    n = len(t)
    w = np.zeros((n, n))
    gamma_const = math.gamma(gamma)
    for k in range(n - 1):
        # kernel (s - t_k)^(gamma-1) over the intervals to the right of t_k
        tj = t[k : n - 1]
        tj1 = t[k + 1 : n]
        h = tj1 - tj
        small = tj - t[k]
        big = tj1 - t[k]
        m0 = (big**gamma - small**gamma) / gamma
        m1_right = (big ** (gamma + 1.0) - small ** (gamma + 1.0)) / (gamma + 1.0) - small * m0
        left_coef = (m0 - m1_right / h) / gamma_const
        right_coef = (m1_right / h) / gamma_const
        np.add.at(w[k], np.arange(k, n - 1), left_coef)
        np.add.at(w[k], np.arange(k + 1, n), right_coef)
    return _readonly(w)


@dataclass(frozen=True)
class QuadratureWeights:
    """Triangular weight table for a fractional integral on a grid.

    The table is exact on constants: row k of a left table sums to
    ``(t_k - a)^alpha / Gamma(alpha + 1)``.  Construction verifies this to
    1e-12 and the table is immutable afterwards.
    """

    time: TimeGrid
    alpha: FracOrder
    side: str
    table: np.ndarray

    def __post_init__(self) -> None:
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        defect = self.row_sum_defect()
        if defect > 1e-12:
            raise ValueError(f"weight table is not exact on constants (defect {defect:g})")

    @classmethod
    def left(cls, time: TimeGrid, alpha: "float | FracOrder") -> "QuadratureWeights":
        order = _as_order(alpha)
        return cls(time, order, "left", _left_weights_cached(time.nodes, order.alpha))

    @classmethod
    def right(cls, time: TimeGrid, alpha: "float | FracOrder") -> "QuadratureWeights":
        order = _as_order(alpha)
        return cls(time, order, "right", _right_weights_cached(time.nodes, order.alpha))

    def row_sum_defect(self) -> float:
        t = self.time.as_array()
        if self.side == "left":
            exact = (t - t[0]) ** self.alpha.alpha / math.gamma(self.alpha.alpha + 1.0)
        else:
            exact = (t[-1] - t) ** self.alpha.alpha / math.gamma(self.alpha.alpha + 1.0)
        return float(np.max(np.abs(self.table.sum(axis=1) - exact)))

    def apply(self, samples: np.ndarray) -> np.ndarray:
        samples = np.asarray(samples, dtype=float)
        if samples.shape[0] != len(self.time):
            raise GridMismatchError("samples must align with the time grid")
        return self.table @ samples


def left_integral_weights(time: TimeGrid, alpha: "float | FracOrder") -> np.ndarray:
    return _left_weights_cached(time.nodes, _as_order(alpha).alpha)


def right_integral_weights(time: TimeGrid, alpha: "float | FracOrder") -> np.ndarray:
    return _right_weights_cached(time.nodes, _as_order(alpha).alpha)


def _check_samples(f, time: TimeGrid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[0] != len(time):
        raise GridMismatchError(
            f"got {f.shape[0]} samples for a grid of {len(time)} nodes"
        )
    return f


def rl_integral_left(f, time: TimeGrid, alpha: "float | FracOrder") -> np.ndarray:
    """Left fractional integral of the samples; zero at the left endpoint.

    Accepts 1-D samples or a 2-D array of sample columns.
    """
    order = _as_order(alpha)
    f = _check_samples(f, time)
    return left_integral_weights(time, order) @ f


@lru_cache(maxsize=64)
def _caputo_left_matrix_cached(nodes: tuple[float, ...], alpha: float) -> np.ndarray:
    d = _derivative_matrix_cached(nodes)
    if alpha == 1.0:
        return d
    w = _left_weights_cached(nodes, 1.0 - alpha)
    return _readonly(w @ d)


def caputo_left_matrix(time: TimeGrid, alpha: "float | FracOrder") -> np.ndarray:
    """Matrix form of the left Caputo derivative on the grid."""
    return _caputo_left_matrix_cached(time.nodes, _as_order(alpha).alpha)


def caputo_left(f, time: TimeGrid, alpha: "float | FracOrder") -> np.ndarray:
    """Left Caputo derivative of the samples.

    The samples should come from a continuously differentiable function.
    At order 1 this is exactly the finite-difference derivative; for
    fractional orders the value at the left endpoint is zero.
    """
    order = _as_order(alpha)
    f = _check_samples(f, time)
    if len(time) < 3:
        raise GridTooShortError("Caputo differentiation needs at least 3 nodes")
    df = _apply_derivative(f, time.as_array())
    if order.is_integer:
        return df
    return left_integral_weights(time, 1.0 - order.alpha) @ df


@lru_cache(maxsize=64)
def _terminal_column(nodes: tuple[float, ...], alpha: float) -> np.ndarray:
    # Riemann-Liouville correction p(b) (b-t)^(-alpha) / Gamma(1-alpha).
    # The term is singular at t = b itself and is omitted at the last node;
    # equations built on this operator therefore stop one node short of b.
    t = np.asarray(nodes)
    bcol = np.zeros(len(t))
    bcol[:-1] = (t[-1] - t[:-1]) ** (-alpha) / math.gamma(1.0 - alpha)
    return _readonly(bcol)


@lru_cache(maxsize=64)
def _right_derivative_parts_cached(
    nodes: tuple[float, ...], alpha: float
) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(nodes)
    d = _derivative_matrix_cached(nodes)
    if alpha == 1.0:
        return _readonly(np.array(-d)), _readonly(np.zeros(len(t)))
    w = _right_weights_cached(nodes, 1.0 - alpha)
    m = w @ (-d)
    return _readonly(np.array(m)), _terminal_column(nodes, alpha)


def right_derivative_parts(
    time: TimeGrid, alpha: "float | FracOrder"
) -> tuple[np.ndarray, np.ndarray]:
    """Matrix and boundary column of the right Riemann-Liouville derivative.

    Applying the operator to samples ``p`` equals ``m @ p + p[-1] * bcol``.
    """
    return _right_derivative_parts_cached(time.nodes, _as_order(alpha).alpha)


def rl_derivative_right(p, time: TimeGrid, alpha: "float | FracOrder") -> np.ndarray:
    """Right Riemann-Liouville derivative of the samples.

    At order 1 this returns the negated finite-difference derivative, the
    convention under which adjoint equations built on this operator reduce
    to the classical costate equation.
    """
    order = _as_order(alpha)
    p = _check_samples(p, time)
    if len(time) < 3:
        raise GridTooShortError("right differentiation needs at least 3 nodes")
    dp = _apply_derivative(p, time.as_array())
    if order.is_integer:
        return -dp
    bcol = _terminal_column(time.nodes, order.alpha)
    core = right_integral_weights(time, 1.0 - order.alpha) @ (-dp)
    if p.ndim == 1:
        return core + p[-1] * bcol
    return core + np.outer(bcol, p[-1])


def fuzzy_caputo_gh(
    x: FuzzyTrajectory, beta: "float | FracOrder", tol: float = 1e-9
) -> tuple[FuzzyTrajectory, tuple[GhCase, ...]]:
    """Caputo derivative of a fuzzy trajectory with per-node case labels.

    Both endpoint curves are differentiated; per node the derivative's
    level cuts are the ordered pair of the two endpoint derivatives.  A
    node is labelled with the first case when the lower-endpoint
    derivative is the minimum at every level, with the second when the
    ordering is reversed everywhere (ties fall to the first case).  Mixed
    orderings raise :class:`CaputoCaseError`.
    """
    order = _as_order(beta)
    d_low = caputo_left(x.low_matrix(), x.time, order)
    d_up = caputo_left(x.up_matrix(), x.time, order)
    gap = d_up - d_low
    cases = []
    for k in range(len(x.time)):
        if np.all(gap[k] >= -tol):
            cases.append(GhCase.CASE1)
        elif np.all(gap[k] <= tol):
            cases.append(GhCase.CASE2)
        else:
            raise CaputoCaseError(
                f"endpoint Caputo derivatives mix orderings across levels at node {k}"
            )
    deriv = FuzzyTrajectory.from_matrices(
        x.time, x.grid, np.minimum(d_low, d_up), np.maximum(d_low, d_up)
    )
    return deriv, tuple(cases)


def integration_by_parts_residual(
    p, x, time: TimeGrid, beta: "float | FracOrder"
) -> float:
    """Defect of moving the fractional derivative across the inner product.

    For curves with ``x(a) = x(b) = 0`` the integrals of ``p * caputo(x)``
    and ``x * right_derivative(p)`` agree; the trapezoidal defect between
    the two serves as a convergence diagnostic.
    """
    order = _as_order(beta)
    p = _check_samples(p, time)
    x = _check_samples(x, time)
    t = time.as_array()
    lhs = np.trapezoid(p * caputo_left(x, time, order), t)
    rhs = np.trapezoid(x * rl_derivative_right(p, time, order), t)
    return float(abs(lhs - rhs))
