"""Fuzzy numbers as stacked families of level intervals.

A fuzzy quantity is stored through its level cuts: for every membership
level r on a shared :class:`LevelGrid` it keeps the closed interval
``[low(r), up(r)]``.  All arithmetic works levelwise on these endpoint
families; a family is a valid fuzzy number when the intervals are nested
(lower endpoints nondecreasing in r, upper endpoints nonincreasing, and
the core interval nonempty).

Values are immutable after construction and safe to share across threads.
The container itself does not enforce nesting, so that candidates produced
by the generalized Hukuhara difference or by numerical differentiation can
be inspected with :func:`validate_stacking` before being accepted.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "STACKING_TOL",
    "InvalidTriangularError",
    "GhDifferenceError",
    "GhDerivativeError",
    "LevelNotOnGridError",
    "GridMismatchError",
    "LevelGrid",
    "FuzzyNumber",
    "TimeGrid",
    "FuzzyTrajectory",
    "GhCase",
    "Comparison",
    "StackingViolation",
    "StackingVerdict",
    "GhDerivative",
    "triangular",
    "crisp",
    "validate_stacking",
    "gh_difference",
    "add",
    "scale",
    "multiply",
    "hausdorff_distance",
    "compare",
    "diameter",
    "gh_derivative_numeric",
]

#: Default absolute tolerance used when checking the nesting conditions.
STACKING_TOL = 1e-12


class InvalidTriangularError(ValueError):
    """Triangular parameters are not ordered p <= q <= s."""


class GhDifferenceError(ArithmeticError):
    """The generalized Hukuhara difference does not exist as a fuzzy number."""


class GhDerivativeError(ArithmeticError):
    """Endpoint derivatives mix orderings across levels at a node."""


class LevelNotOnGridError(ValueError):
    """A requested membership level is not a grid level."""


class GridMismatchError(ValueError):
    """Operands do not share the required grid."""


@dataclass(frozen=True)
class LevelGrid:
    """Ordered membership levels, always spanning 0 to 1."""

    levels: tuple[float, ...]

    def __post_init__(self) -> None:
        levels = tuple(float(r) for r in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 2:
            raise ValueError("level grid needs at least the levels 0 and 1")
        if levels[0] != 0.0 or levels[-1] != 1.0:
            raise ValueError("level grid must start at 0 and end at 1")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be strictly increasing")

    @classmethod
    def uniform(cls, n: int = 11) -> "LevelGrid":
        return cls(tuple(np.linspace(0.0, 1.0, n)))

    def __len__(self) -> int:
        return len(self.levels)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.levels)

    def index_of(self, r: float, tol: float = 1e-12) -> int:
        """Index of level ``r``; raises :class:`LevelNotOnGridError` if absent."""
        for i, level in enumerate(self.levels):
            if abs(level - r) <= tol:
                return i
        raise LevelNotOnGridError(f"level {r!r} is not on the grid {self.levels!r}")


DEFAULT_GRID = LevelGrid.uniform(11)


@dataclass(frozen=True)
class FuzzyNumber:
    """Endpoint families of the level cuts ``[low(r), up(r)]``.

    The constructor only checks shapes; use :func:`validate_stacking` to
    decide whether the families form a valid fuzzy number.
    """

    grid: LevelGrid
    low: tuple[float, ...]
    up: tuple[float, ...]

    def __post_init__(self) -> None:
        low = tuple(float(v) for v in self.low)
        up = tuple(float(v) for v in self.up)
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "up", up)
        if len(low) != len(self.grid) or len(up) != len(self.grid):
            raise GridMismatchError("endpoint families must match the level grid length")

    def low_array(self) -> np.ndarray:
        return np.asarray(self.low)

    def up_array(self) -> np.ndarray:
        return np.asarray(self.up)

    def is_crisp(self, tol: float = 0.0) -> bool:
        return all(abs(u - l) <= tol for l, u in zip(self.low, self.up))

    def core(self) -> tuple[float, float]:
        """Level-1 interval."""
        return self.low[-1], self.up[-1]

    def __add__(self, other: "FuzzyNumber") -> "FuzzyNumber":
        return add(self, other)

    def __neg__(self) -> "FuzzyNumber":
        return scale(-1.0, self)

    def __mul__(self, factor: float) -> "FuzzyNumber":
        return scale(float(factor), self)

    __rmul__ = __mul__


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time nodes on ``[a, b]``."""

    a: float
    b: float
    nodes: tuple[float, ...]

    def __post_init__(self) -> None:
        nodes = tuple(float(t) for t in self.nodes)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if not self.a < self.b:
            raise ValueError("time interval must satisfy a < b")
        if len(nodes) < 2 or nodes[0] != self.a or nodes[-1] != self.b:
            raise ValueError("nodes must run from a to b")
        if any(t2 <= t1 for t1, t2 in zip(nodes, nodes[1:])):
            raise ValueError("time nodes must be strictly increasing")

    @classmethod
    def uniform(cls, a: float, b: float, n: int) -> "TimeGrid":
        return cls(a, b, tuple(np.linspace(a, b, n)))

    def __len__(self) -> int:
        return len(self.nodes)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.nodes)


@dataclass(frozen=True)
class FuzzyTrajectory:
    """A fuzzy value per time node, all sharing one level grid."""

    time: TimeGrid
    values: tuple[FuzzyNumber, ...]

    def __post_init__(self) -> None:
        values = tuple(self.values)
        object.__setattr__(self, "values", values)
        if len(values) != len(self.time):
            raise GridMismatchError("one fuzzy value per time node is required")
        if not values:
            raise GridMismatchError("empty trajectory")
        grid = values[0].grid
        if any(v.grid != grid for v in values[1:]):
            raise GridMismatchError("all values must share one level grid")

    @property
    def grid(self) -> LevelGrid:
        return self.values[0].grid

    def low_matrix(self) -> np.ndarray:
        """Lower endpoints, shape (time nodes, levels)."""
        return np.array([v.low for v in self.values])

    def up_matrix(self) -> np.ndarray:
        """Upper endpoints, shape (time nodes, levels)."""
        return np.array([v.up for v in self.values])

    @classmethod
    def from_matrices(
        cls, time: TimeGrid, grid: LevelGrid, low: np.ndarray, up: np.ndarray
    ) -> "FuzzyTrajectory":
        low = np.asarray(low, dtype=float)
        up = np.asarray(up, dtype=float)
        if low.shape != (len(time), len(grid)) or up.shape != low.shape:
            raise GridMismatchError("matrices must be (time nodes, levels)")
        values = tuple(
            FuzzyNumber(grid, tuple(low[k]), tuple(up[k])) for k in range(len(time))
        )
        return cls(time, values)


class GhCase(enum.Enum):
    """Endpoint pairing of a generalized Hukuhara derivative."""

    CASE1 = 1
    CASE2 = 2


class Comparison(enum.Enum):
    PRECEDES = "precedes"
    STRICTLY_PRECEDES = "strictly_precedes"
    SUCCEEDS = "succeeds"
    EQUIVALENT = "equivalent"
    NONCOMPARABLE = "noncomparable"


@dataclass(frozen=True)
class StackingViolation:
    condition: str
    level_a: float
    level_b: float
    detail: str


@dataclass(frozen=True)
class StackingVerdict:
    valid: bool
    violations: tuple[StackingViolation, ...] = ()

    def __bool__(self) -> bool:
        return self.valid


def triangular(p: float, q: float, s: float, grid: LevelGrid = DEFAULT_GRID) -> FuzzyNumber:
    """Triangular fuzzy number with support [p, s] and core q.

    Endpoint families are linear in the level: ``low(r) = q - (1-r)(q-p)``
    and ``up(r) = q + (1-r)(s-q)``.
    """
    if not (p <= q <= s):
        raise InvalidTriangularError(f"parameters must satisfy p <= q <= s, got ({p}, {q}, {s})")
    r = grid.as_array()
    low = q - (1.0 - r) * (q - p)
    up = q + (1.0 - r) * (s - q)
    return FuzzyNumber(grid, tuple(low), tuple(up))


def crisp(c: float, grid: LevelGrid = DEFAULT_GRID) -> FuzzyNumber:
    """Degenerate fuzzy number whose every level cut is [c, c]."""
    vals = (float(c),) * len(grid)
    return FuzzyNumber(grid, vals, vals)


def validate_stacking(x: FuzzyNumber, tol: float = STACKING_TOL) -> StackingVerdict:
    """Check the nesting conditions of the level-cut families.

    Valid means: lower endpoints nondecreasing in r, upper endpoints
    nonincreasing in r, and ``low(1) <= up(1)``.  Comparisons use the
    absolute tolerance ``tol`` to absorb roundoff.  Limit conditions are
    vacuous on a finite grid and are not represented here.
    """
    violations: list[StackingViolation] = []
    levels = x.grid.levels
    for i in range(len(levels) - 1):
        ra, rb = levels[i], levels[i + 1]
        if x.low[i + 1] < x.low[i] - tol:
            violations.append(
                StackingViolation(
                    "lower-nondecreasing", ra, rb,
                    f"low({ra:g})={x.low[i]:.17g} > low({rb:g})={x.low[i + 1]:.17g}",
                )
            )
        if x.up[i + 1] > x.up[i] + tol:
            violations.append(
                StackingViolation(
                    "upper-nonincreasing", ra, rb,
                    f"up({ra:g})={x.up[i]:.17g} < up({rb:g})={x.up[i + 1]:.17g}",
                )
            )
    if x.low[-1] > x.up[-1] + tol:
        violations.append(
            StackingViolation(
                "core-nonempty", 1.0, 1.0,
                f"low(1)={x.low[-1]:.17g} > up(1)={x.up[-1]:.17g}",
            )
        )
    return StackingVerdict(valid=not violations, violations=tuple(violations))


def _require_shared_grid(x: FuzzyNumber, y: FuzzyNumber) -> None:
    if x.grid != y.grid:
        raise GridMismatchError("operands must share one level grid")


def gh_difference(x: FuzzyNumber, y: FuzzyNumber, tol: float = STACKING_TOL) -> FuzzyNumber:
    """Generalized Hukuhara difference ``z`` with ``x = y + z`` or ``y = x + (-1)z``.

    Levelwise, ``z_low = min(x_low - y_low, x_up - y_up)`` and ``z_up`` the
    matching max.  When the resulting families fail the nesting conditions
    the difference does not exist and :class:`GhDifferenceError` is raised.
    """
    _require_shared_grid(x, y)
    dl = x.low_array() - y.low_array()
    du = x.up_array() - y.up_array()
    z = FuzzyNumber(x.grid, tuple(np.minimum(dl, du)), tuple(np.maximum(dl, du)))
    verdict = validate_stacking(z, tol=tol)
    if not verdict:
        raise GhDifferenceError(
            "gH-difference does not exist as a fuzzy number: "
            + "; ".join(v.detail for v in verdict.violations)
        )
    return z


def add(x: FuzzyNumber, y: FuzzyNumber) -> FuzzyNumber:
    """Levelwise interval addition."""
    _require_shared_grid(x, y)
    return FuzzyNumber(
        x.grid,
        tuple(x.low_array() + y.low_array()),
        tuple(x.up_array() + y.up_array()),
    )


def scale(lam: float, x: FuzzyNumber) -> FuzzyNumber:
    """Scalar multiple; endpoints swap when the factor is negative."""
    lam = float(lam)
    low = lam * x.low_array()
    up = lam * x.up_array()
    if lam < 0:
        low, up = up, low
    return FuzzyNumber(x.grid, tuple(low), tuple(up))


def multiply(x: FuzzyNumber, y: FuzzyNumber) -> FuzzyNumber:
    """Levelwise interval product (min/max over the four endpoint products)."""
    _require_shared_grid(x, y)
    products = np.stack(
        [
            x.low_array() * y.low_array(),
            x.low_array() * y.up_array(),
            x.up_array() * y.low_array(),
            x.up_array() * y.up_array(),
        ]
    )
    return FuzzyNumber(x.grid, tuple(products.min(axis=0)), tuple(products.max(axis=0)))


def hausdorff_distance(x: FuzzyNumber, y: FuzzyNumber) -> float:
    """Largest endpoint discrepancy over all grid levels."""
    _require_shared_grid(x, y)
    dl = np.abs(x.low_array() - y.low_array())
    du = np.abs(x.up_array() - y.up_array())
    return float(np.max(np.maximum(dl, du)))


def compare(x: FuzzyNumber, y: FuzzyNumber) -> Comparison:
    """Partial order on fuzzy numbers via both endpoint families.

    ``x`` precedes ``y`` when ``x_low(r) <= y_low(r)`` and
    ``x_up(r) <= y_up(r)`` at every grid level; strictly when additionally
    both inequalities are strict at some level.  Precedence both ways is
    equivalence; neither way is noncomparability.
    """
    _require_shared_grid(x, y)
    xl, xu = x.low_array(), x.up_array()
    yl, yu = y.low_array(), y.up_array()
    forward = bool(np.all(xl <= yl) and np.all(xu <= yu))
    backward = bool(np.all(yl <= xl) and np.all(yu <= xu))
    if forward and backward:
        return Comparison.EQUIVALENT
    if forward:
        if np.any((xl < yl) & (xu < yu)):
            return Comparison.STRICTLY_PRECEDES
        return Comparison.PRECEDES
    if backward:
        return Comparison.SUCCEEDS
    return Comparison.NONCOMPARABLE


def diameter(x: FuzzyNumber, r: float) -> float:
    """Width ``up(r) - low(r)`` of the level cut at a grid level."""
    i = x.grid.index_of(r)
    return x.up[i] - x.low[i]


@dataclass(frozen=True)
class GhDerivative:
    """Numeric gH-derivative at a node, with its case and nesting verdict."""

    value: FuzzyNumber
    case: GhCase
    stacking: StackingVerdict


def gh_derivative_numeric(
    x: FuzzyTrajectory, k: int, tol: float = 1e-9
) -> GhDerivative:
    """Finite-difference gH-derivative of a trajectory at node ``k``.

    Central differences at interior nodes, one-sided at the ends.  The
    endpoint derivative pair (d_low, d_up) classifies the node: the first
    pairing applies when d_low <= d_up at every level, the second when the
    ordering is reversed everywhere.  Exact ties report the first pairing.
    A mixed sign pattern across levels raises :class:`GhDerivativeError`.
    """
    t = x.time.as_array()
    n = len(t) - 1
    if not 0 <= k <= n:
        raise IndexError(f"node index {k} outside 0..{n}")
    low = x.low_matrix()
    up = x.up_matrix()
    if k == 0:
        dt = t[1] - t[0]
        d_low = (low[1] - low[0]) / dt
        d_up = (up[1] - up[0]) / dt
    elif k == n:
        dt = t[n] - t[n - 1]
        d_low = (low[n] - low[n - 1]) / dt
        d_up = (up[n] - up[n - 1]) / dt
    else:
        dt = t[k + 1] - t[k - 1]
        d_low = (low[k + 1] - low[k - 1]) / dt
        d_up = (up[k + 1] - up[k - 1]) / dt
    gap = d_up - d_low
    if np.all(gap >= -tol):
        case = GhCase.CASE1
        value = FuzzyNumber(x.grid, tuple(d_low), tuple(d_up))
    elif np.all(gap <= tol):
        case = GhCase.CASE2
        value = FuzzyNumber(x.grid, tuple(d_up), tuple(d_low))
    else:
        raise GhDerivativeError(
            f"endpoint derivatives at node {k} mix orderings across levels; "
            "the trajectory is not gH-differentiable there"
        )
    return GhDerivative(value=value, case=case, stacking=validate_stacking(value))
