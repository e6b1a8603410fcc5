"""Hamiltonian construction and per-level optimality systems.

A problem couples endpoint families: at membership level r the state
curves are the endpoint pairs (x_lo, x_up) per component, the control the
pair (u_lo, u_up), and two costates (p1, p2) attach to every state
component.  The Hamiltonian is

    H = -(L_lo + L_up) + sum_i p1_i * phi<1>_i + p2_i * phi<2>_i

where for a component in the first differentiability case the pairing is
(phi<1>, phi<2>) = (phi_lo, phi_up) and in the second case it is swapped.
Necessary conditions then consist of right-fractional adjoint equations
driven by dH/dx, pointwise stationarity dH/du = 0, and left-Caputo state
equations whose right sides use the same pairing as the costates.

Cost and dynamics enter as endpoint-pair evaluators; a helper builds the
pairs for linear dynamics from time-dependent coefficients, either in the
aligned convention (low with low) or by sign-split interval arithmetic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .frac_ops import FracOrder
from .fuzzy_core import (
    FuzzyNumber,
    GhCase,
    LevelGrid,
    crisp,
    validate_stacking,
)

__all__ = [
    "CostEvaluator",
    "DynamicsEvaluator",
    "GradEvaluator",
    "Pairing",
    "LinearDynamics",
    "linear_dynamics_evaluators",
    "ProblemSpec",
    "Hamiltonian",
    "build_hamiltonian",
    "StationarySolveError",
    "stationary_solve",
    "PmpSystem",
    "assemble_pmp_system",
    "crisp_reduce",
    "Feasibility",
    "FeasibilityVerdict",
    "check_diameter_feasibility",
]

# evaluator signatures:
#   cost(x_lo, x_up, u_lo, u_up, t) -> (L_lo, L_up)
#   dynamics_i(x_lo, x_up, u_lo, u_up, t) -> (phi_lo_i, phi_up_i)
# gradient callbacks return, per output endpoint, the partials with
# respect to (x_lo_1.., x_up_1.., u_lo, u_up) as two flat tuples.
CostEvaluator = Callable[..., tuple[float, float]]
DynamicsEvaluator = Callable[..., tuple[float, float]]
GradEvaluator = Callable[..., tuple[tuple[float, ...], tuple[float, ...]]]


class Pairing(enum.Enum):
    """How endpoint pairs of linear dynamics are formed."""

    ALIGNED = "aligned"
    INTERVAL = "interval"


@dataclass(frozen=True)
class LinearDynamics:
    """Coefficient description phi_i = sum_j A[i][j](t) x_j + C[i](t) u + d[i](t)."""

    pairing: Pairing
    state_coef: tuple[tuple[Callable[[float], float], ...], ...]
    control_coef: tuple[Callable[[float], float], ...]
    offset: tuple[Callable[[float], float], ...]
    display: tuple[str, ...] = ()

    @property
    def n_states(self) -> int:
        return len(self.state_coef)


def _linear_endpoint_pair(
    lin: LinearDynamics, i: int, x_lo, x_up, u_lo: float, u_up: float, t: float
) -> tuple[float, float]:
    base = lin.offset[i](t)
    lo = up = base
    for j in range(lin.n_states):
        a = lin.state_coef[i][j](t)
        if lin.pairing is Pairing.ALIGNED or a >= 0.0:
            lo += a * x_lo[j]
            up += a * x_up[j]
        else:
            lo += a * x_up[j]
            up += a * x_lo[j]
    c = lin.control_coef[i](t)
    if lin.pairing is Pairing.ALIGNED or c >= 0.0:
        lo += c * u_lo
        up += c * u_up
    else:
        lo += c * u_up
        up += c * u_lo
    return lo, up


def _linear_gradients(
    lin: LinearDynamics, i: int, n: int, x_lo, x_up, u_lo, u_up, t: float
):
    dlo_xlo = [0.0] * n
    dlo_xup = [0.0] * n
    dup_xlo = [0.0] * n
    dup_xup = [0.0] * n
    for j in range(n):
        a = lin.state_coef[i][j](t)
        if lin.pairing is Pairing.ALIGNED or a >= 0.0:
            dlo_xlo[j] = a
            dup_xup[j] = a
        else:
            dlo_xup[j] = a
            dup_xlo[j] = a
    c = lin.control_coef[i](t)
    if lin.pairing is Pairing.ALIGNED or c >= 0.0:
        dlo_u = (c, 0.0)
        dup_u = (0.0, c)
    else:
        dlo_u = (0.0, c)
        dup_u = (c, 0.0)
    grad_lo = tuple(dlo_xlo) + tuple(dlo_xup) + dlo_u
    grad_up = tuple(dup_xlo) + tuple(dup_xup) + dup_u
    return grad_lo, grad_up


def linear_dynamics_evaluators(
    lin: LinearDynamics,
) -> tuple[tuple[DynamicsEvaluator, ...], tuple[GradEvaluator, ...]]:
    """Endpoint-pair evaluators and exact gradients for linear dynamics."""
    n = lin.n_states
    evaluators = []
    gradients = []
    for i in range(n):
        def make(i: int):
            def dyn(x_lo, x_up, u_lo, u_up, t):
                return _linear_endpoint_pair(lin, i, x_lo, x_up, u_lo, u_up, t)

            def grad(x_lo, x_up, u_lo, u_up, t):
                return _linear_gradients(lin, i, n, x_lo, x_up, u_lo, u_up, t)

            return dyn, grad

        dyn, grad = make(i)
        evaluators.append(dyn)
        gradients.append(grad)
    return tuple(evaluators), tuple(gradients)


@dataclass(frozen=True)
class ProblemSpec:
    """Declarative description of one fuzzy fractional control problem."""

    time: tuple[float, float]
    beta: FracOrder
    n_states: int
    cost: CostEvaluator
    dynamics: tuple[DynamicsEvaluator, ...]
    boundary_a: tuple[FuzzyNumber, ...]
    boundary_b: tuple[FuzzyNumber, ...]
    cases: tuple[GhCase, ...]
    cost_grad: Optional[GradEvaluator] = None
    dynamics_grad: Optional[tuple[GradEvaluator, ...]] = None
    grad_step: float = 1e-6
    linear: Optional[LinearDynamics] = None
    name: str = ""

    def __post_init__(self) -> None:
        a, b = self.time
        if not a < b:
            raise ValueError("time interval must satisfy a < b")
        beta = self.beta if isinstance(self.beta, FracOrder) else FracOrder(self.beta)
        object.__setattr__(self, "beta", beta)
        ns = self.n_states
        if len(self.dynamics) != ns or len(self.cases) != ns:
            raise ValueError("one dynamics evaluator and one case tag per state")
        if len(self.boundary_a) != ns or len(self.boundary_b) != ns:
            raise ValueError("boundary data must cover every state at both ends")
        grid = self.boundary_a[0].grid
        for side in (self.boundary_a, self.boundary_b):
            for bnd in side:
                if bnd.grid != grid:
                    raise ValueError("boundary data must share one level grid")
                verdict = validate_stacking(bnd)
                if not verdict:
                    raise ValueError(
                        "boundary datum is not a valid fuzzy number: "
                        + "; ".join(v.detail for v in verdict.violations)
                    )
        if self.dynamics_grad is not None and len(self.dynamics_grad) != ns:
            raise ValueError("gradient callbacks must cover every state")

    @property
    def level_grid(self) -> LevelGrid:
        return self.boundary_a[0].grid

    @property
    def gradient_mode(self) -> str:
        if self.cost_grad is not None and self.dynamics_grad is not None:
            return "analytic"
        return "finite-difference"


def _paired(case: GhCase, lo: float, up: float) -> tuple[float, float]:
    if case is GhCase.CASE1:
        return lo, up
    return up, lo


class Hamiltonian:
    """Scalar Hamiltonian with partial-derivative families.

    Partials fall back to central finite differences (relative step
    ``grad_step``) when analytic callbacks are absent.
    """

    def __init__(self, spec: ProblemSpec):
        self._spec = spec
        self.n_states = spec.n_states

    def value(self, x_lo, x_up, u_lo, u_up, p1, p2, t) -> float:
        spec = self._spec
        l_lo, l_up = spec.cost(x_lo, x_up, u_lo, u_up, t)
        total = -(l_lo + l_up)
        for i in range(spec.n_states):
            phi_lo, phi_up = spec.dynamics[i](x_lo, x_up, u_lo, u_up, t)
            first, second = _paired(spec.cases[i], phi_lo, phi_up)
            total += p1[i] * first + p2[i] * second
        return total

    # argument layout used by the flat gradient helpers:
    # (x_lo_1.., x_up_1.., u_lo, u_up), length 2*n_states + 2
    def _fd_gradient(self, x_lo, x_up, u_lo, u_up, p1, p2, t) -> np.ndarray:
        spec = self._spec
        ns = spec.n_states
        args = list(x_lo) + list(x_up) + [u_lo, u_up]
        grad = np.zeros(2 * ns + 2)

        def value_at(vals):
            return self.value(
                tuple(vals[:ns]), tuple(vals[ns : 2 * ns]), vals[-2], vals[-1], p1, p2, t
            )

        for j in range(len(args)):
            h = spec.grad_step * max(1.0, abs(args[j]))
            plus = list(args)
            minus = list(args)
            plus[j] += h
            minus[j] -= h
            grad[j] = (value_at(plus) - value_at(minus)) / (2.0 * h)
        return grad

    def _analytic_gradient(self, x_lo, x_up, u_lo, u_up, p1, p2, t) -> list[float]:
        # hot path for the solvers: plain floats, no array round-trips
        spec = self._spec
        g_lo, g_up = spec.cost_grad(x_lo, x_up, u_lo, u_up, t)
        grad = [-(a + b) for a, b in zip(g_lo, g_up)]
        for i in range(spec.n_states):
            d_lo, d_up = spec.dynamics_grad[i](x_lo, x_up, u_lo, u_up, t)
            if spec.cases[i] is not GhCase.CASE1:
                d_lo, d_up = d_up, d_lo
            w1 = p1[i]
            w2 = p2[i]
            for j in range(len(grad)):
                grad[j] += w1 * d_lo[j] + w2 * d_up[j]
        return grad

    def gradient(self, x_lo, x_up, u_lo, u_up, p1, p2, t):
        """All partials in the flat layout (x_lo.., x_up.., u_lo, u_up)."""
        if self._spec.gradient_mode == "analytic":
            return self._analytic_gradient(x_lo, x_up, u_lo, u_up, p1, p2, t)
        return self._fd_gradient(x_lo, x_up, u_lo, u_up, p1, p2, t)

    def grad_x(self, x_lo, x_up, u_lo, u_up, p1, p2, t) -> tuple[np.ndarray, np.ndarray]:
        ns = self.n_states
        g = np.asarray(self.gradient(x_lo, x_up, u_lo, u_up, p1, p2, t))
        return g[:ns], g[ns : 2 * ns]

    def grad_u(self, x_lo, x_up, u_lo, u_up, p1, p2, t) -> np.ndarray:
        g = self.gradient(x_lo, x_up, u_lo, u_up, p1, p2, t)
        return np.asarray(g[-2:])


def build_hamiltonian(spec: ProblemSpec) -> Hamiltonian:
    return Hamiltonian(spec)


class StationarySolveError(RuntimeError):
    """Newton failed to solve the stationarity conditions."""

    def __init__(self, message: str, last_iterate: tuple[float, float], residual: float):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


def stationary_solve(
    ham: Hamiltonian,
    p1,
    p2,
    x_lo,
    x_up,
    t: float,
    seed: tuple[float, float] = (0.0, 0.0),
    max_iter: int = 50,
    tol: float = 1e-12,
    damping: float = 0.5,
    fd_step: float = 1e-6,
) -> tuple[float, float]:
    """Control pair solving dH/du_lo = dH/du_up = 0 by damped Newton.

    For quadratic costs the first step lands on the closed-form root.
    """
    u = np.asarray(seed, dtype=float)

    def grad(uv) -> np.ndarray:
        return ham.grad_u(x_lo, x_up, uv[0], uv[1], p1, p2, t)

    g = grad(u)
    norm = float(np.max(np.abs(g)))
    for _ in range(max_iter):
        if norm <= tol:
            return float(u[0]), float(u[1])
        jac = np.zeros((2, 2))
        for j in range(2):
            h = fd_step * max(1.0, abs(u[j]))
            up_v = u.copy()
            dn_v = u.copy()
            up_v[j] += h
            dn_v[j] -= h
            jac[:, j] = (grad(up_v) - grad(dn_v)) / (2.0 * h)
        try:
            step = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError:
            raise StationarySolveError(
                "singular stationarity Jacobian", (float(u[0]), float(u[1])), norm
            ) from None
        scale_f = 1.0
        for _ in range(30):
            candidate = u + scale_f * step
            g_new = grad(candidate)
            norm_new = float(np.max(np.abs(g_new)))
            if norm_new < norm or norm_new <= tol:
                u, g, norm = candidate, g_new, norm_new
                break
            scale_f *= damping
        else:
            raise StationarySolveError(
                "stationarity Newton stalled", (float(u[0]), float(u[1])), norm
            )
    if norm <= tol:
        return float(u[0]), float(u[1])
    raise StationarySolveError(
        f"stationarity Newton did not converge in {max_iter} iterations",
        (float(u[0]), float(u[1])),
        norm,
    )


@dataclass(frozen=True)
class PmpSystem:
    """The optimality system of one problem at one membership level.

    Curve layout used throughout: state endpoint curves are ordered
    (x_lo_1, x_up_1, x_lo_2, ...), costate curves (p1_1, p2_1, p1_2, ...).
    """

    spec: ProblemSpec
    r: float
    ham: Hamiltonian
    xa_lo: tuple[float, ...]
    xa_up: tuple[float, ...]
    xb_lo: tuple[float, ...]
    xb_up: tuple[float, ...]

    @property
    def beta(self) -> FracOrder:
        return self.spec.beta

    @property
    def n_states(self) -> int:
        return self.spec.n_states

    @property
    def time(self) -> tuple[float, float]:
        return self.spec.time

    @property
    def equation_counts(self) -> dict[str, int]:
        ns = self.spec.n_states
        return {
            "adjoint": 2 * ns,
            "stationary": 2,
            "state": 2 * ns,
            "boundary": 4 * ns,
        }

    def state_rates(self, x_lo, x_up, u_lo, u_up, t) -> np.ndarray:
        """Right sides for the endpoint state curves, paired per case."""
        spec = self.spec
        out = np.zeros(2 * spec.n_states)
        for i in range(spec.n_states):
            phi_lo, phi_up = spec.dynamics[i](x_lo, x_up, u_lo, u_up, t)
            out[2 * i], out[2 * i + 1] = _paired(spec.cases[i], phi_lo, phi_up)
        return out

    def adjoint_rhs(self, x_lo, x_up, u_lo, u_up, p1, p2, t) -> np.ndarray:
        """Right sides of the costate equations: (dH/dx_lo_i, dH/dx_up_i)."""
        gx_lo, gx_up = self.ham.grad_x(x_lo, x_up, u_lo, u_up, p1, p2, t)
        out = np.zeros(2 * self.spec.n_states)
        out[0::2] = gx_lo
        out[1::2] = gx_up
        return out

    def stationary_residual(self, x_lo, x_up, u_lo, u_up, p1, p2, t) -> np.ndarray:
        return self.ham.grad_u(x_lo, x_up, u_lo, u_up, p1, p2, t)

    def solve_control(self, x_lo, x_up, p1, p2, t, **kwargs) -> tuple[float, float]:
        return stationary_solve(self.ham, p1, p2, x_lo, x_up, t, **kwargs)

    def boundary_values(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoint-curve boundary rows at t=a and t=b (curve layout order)."""
        ns = self.spec.n_states
        at_a = np.zeros(2 * ns)
        at_b = np.zeros(2 * ns)
        at_a[0::2] = self.xa_lo
        at_a[1::2] = self.xa_up
        at_b[0::2] = self.xb_lo
        at_b[1::2] = self.xb_up
        return at_a, at_b


def assemble_pmp_system(spec: ProblemSpec, r: float) -> PmpSystem:
    """Instantiate the optimality system at membership level ``r``."""
    idx = spec.level_grid.index_of(r)
    xa_lo = tuple(bnd.low[idx] for bnd in spec.boundary_a)
    xa_up = tuple(bnd.up[idx] for bnd in spec.boundary_a)
    xb_lo = tuple(bnd.low[idx] for bnd in spec.boundary_b)
    xb_up = tuple(bnd.up[idx] for bnd in spec.boundary_b)
    return PmpSystem(
        spec=spec,
        r=float(spec.level_grid.levels[idx]),
        ham=build_hamiltonian(spec),
        xa_lo=xa_lo,
        xa_up=xa_up,
        xb_lo=xb_lo,
        xb_up=xb_up,
    )


def crisp_reduce(spec: ProblemSpec) -> ProblemSpec:
    """Collapse boundary data to their level-1 cores.

    Endpoint families become constant, the case tags all collapse to the
    first pairing (the pairings coincide on crisp data), and the resulting
    system is the classical two-point optimality problem.  Idempotent.
    """
    grid = spec.level_grid

    def core_value(bnd: FuzzyNumber) -> float:
        lo, up = bnd.core()
        return 0.5 * (lo + up)

    boundary_a = tuple(crisp(core_value(b), grid) for b in spec.boundary_a)
    boundary_b = tuple(crisp(core_value(b), grid) for b in spec.boundary_b)
    return replace(
        spec,
        boundary_a=boundary_a,
        boundary_b=boundary_b,
        cases=(GhCase.CASE1,) * spec.n_states,
    )


class Feasibility(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    NOT_APPLICABLE = "not-applicable"


@dataclass(frozen=True)
class FeasibilityVerdict:
    verdict: Feasibility
    certificate: str = ""
    interval: Optional[tuple[float, float]] = None

    def __post_init__(self) -> None:
        if self.verdict is Feasibility.INFEASIBLE and not self.certificate:
            raise ValueError("an infeasible verdict requires a certificate")


def _refine_sign_change(f: Callable[[float], float], lo: float, hi: float) -> float:
    """Bisect for the left edge of positivity: f(lo) <= 0 < f(hi)."""
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def check_diameter_feasibility(
    spec: ProblemSpec, samples: int = 4001, width_tol: float = 1e-9
) -> FeasibilityVerdict:
    """Refutation test based on level-cut widths of the boundary data.

    Under either differentiability case the width of a state's level cut
    is monotone in time, so equal widths at both ends force the width to
    stay constant and the dynamics' right side to have width zero.  For a
    scalar state with interval-paired linear dynamics this is impossible
    on any subinterval where both the state and the control coefficient
    are strictly positive, unless the boundary data are crisp.

    "Feasible" only means this test does not refute the problem.
    """
    lin = spec.linear
    if lin is None:
        return FeasibilityVerdict(
            Feasibility.NOT_APPLICABLE,
            "test requires linear dynamics with coefficient evaluators",
        )
    if lin.pairing is not Pairing.INTERVAL:
        return FeasibilityVerdict(
            Feasibility.NOT_APPLICABLE,
            "dynamics pairing is aligned, not the interval form the width argument needs",
        )
    if any(case is not GhCase.CASE1 for case in spec.cases):
        return FeasibilityVerdict(
            Feasibility.NOT_APPLICABLE,
            "test applies to first-case differentiability only",
        )
    if spec.n_states != 1:
        return FeasibilityVerdict(
            Feasibility.NOT_APPLICABLE,
            "width argument is formulated for a scalar state",
        )
    bnd_a = spec.boundary_a[0]
    bnd_b = spec.boundary_b[0]
    width_a = bnd_a.up_array() - bnd_a.low_array()
    width_b = bnd_b.up_array() - bnd_b.low_array()
    if float(np.max(np.abs(width_a - width_b))) > width_tol:
        return FeasibilityVerdict(
            Feasibility.FEASIBLE,
            "boundary level-cut widths differ between the ends; no contradiction derived",
        )
    max_width = float(np.max(width_a))
    if max_width <= width_tol:
        return FeasibilityVerdict(
            Feasibility.FEASIBLE,
            "boundary data are crisp; the width argument derives no contradiction",
        )

    a_coef = lin.state_coef[0][0]
    c_coef = lin.control_coef[0]
    t0, t1 = spec.time
    ts = np.linspace(t0, t1, samples)
    positive = np.array([a_coef(t) > 0.0 and c_coef(t) > 0.0 for t in ts])
    if not positive.any():
        return FeasibilityVerdict(
            Feasibility.FEASIBLE,
            "coefficients are never jointly positive; no contradiction derived",
        )
    # longest run of joint positivity
    best_start = best_len = 0
    run_start = None
    for k, flag in enumerate(np.append(positive, False)):
        if flag and run_start is None:
            run_start = k
        elif not flag and run_start is not None:
            if k - run_start > best_len:
                best_start, best_len = run_start, k - run_start
            run_start = None
    lo = ts[best_start]
    hi = ts[best_start + best_len - 1]
    if best_start > 0:
        lo = _refine_sign_change(lambda t: min(a_coef(t), c_coef(t)), ts[best_start - 1], lo)
    if best_start + best_len < len(ts):
        hi_edge = ts[best_start + best_len]
        hi = -_refine_sign_change(lambda t: min(a_coef(-t), c_coef(-t)), -hi_edge, -hi)
    certificate = (
        f"boundary level-cut widths agree at both ends (maximum width {max_width:g}) "
        f"and both the state coefficient and the control coefficient are > 0 for t in "
        f"({lo:.6g}, {hi:.6g}]; constant width forces the right-side width "
        f"a(t)*width(x) + c(t)*width(u) to vanish there, so width(x) = width(u) = 0, "
        f"contradicting the fuzzy boundary data"
    )
    return FeasibilityVerdict(Feasibility.INFEASIBLE, certificate, (float(lo), float(hi)))
