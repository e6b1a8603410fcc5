"""Numerical solution of the assembled two-point optimality systems.

Classical case (order 1): single shooting on the costate initial values
with a fixed-step fourth-order Runge-Kutta integration of the coupled
state and costate equations, damped Newton driving the terminal state
mismatch to zero.  The returned smooth curves carry an O(h^2) stencil
defect against the independent residual evaluator, so the mesh controls
the achievable dynamics residual.

Fractional case (order below 1): outer shooting on the free costate
terminal values; each inner evaluation alternates a backward solve of the
right-fractional adjoint equations through the triangular weight tables,
a pointwise control update from the stationarity conditions, and a
forward Newton solve of the left-Caputo state collocation equations,
sweeping to a fixed point.  The accepted curves satisfy the same discrete
equations the residual evaluator re-applies, so their defects sit at the
Newton tolerance.

Per-level solves are pure functions of (system, config): no cross-level
state exists, so levels may run in any order or concurrently and produce
bit-identical results.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import frac_ops
from .frac_ops import FracOrder
from .fuzzy_core import (
    FuzzyNumber,
    FuzzyTrajectory,
    GhCase,
    LevelGrid,
    StackingVerdict,
    TimeGrid,
    validate_stacking,
)
from .pmp import PmpSystem, ProblemSpec, assemble_pmp_system

__all__ = [
    "SolveConfig",
    "ResidualReport",
    "LevelSolution",
    "SolveFailure",
    "solve_bvp_ode",
    "solve_bvp_fractional",
    "solve_level",
    "residual_norm",
    "SolutionBundle",
    "solve_problem",
]


@dataclass(frozen=True)
class SolveConfig:
    """Numerical knobs for one level solve."""

    mesh: int = 401
    tol: float = 1e-6
    max_newton: int = 100
    damping: float = 0.5
    max_sweeps: int = 200
    sweep_tol: float = 1e-9

    def __post_init__(self) -> None:
        if self.mesh < 5:
            raise ValueError("mesh needs at least 5 nodes")
        if not 0.0 < self.tol < 1.0:
            raise ValueError("tolerance must lie in (0, 1)")
        if self.max_newton <= 0 or self.max_sweeps <= 0:
            raise ValueError("iteration limits must be positive")
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping factor must lie in (0, 1)")
        if self.sweep_tol <= 0.0:
            raise ValueError("sweep tolerance must be positive")


@dataclass(frozen=True)
class ResidualReport:
    """Max-norm defects per equation family (differential, boundary, stationary)."""

    dynamics: float
    boundary: float
    stationary: float

    def worst(self) -> float:
        return max(self.dynamics, self.boundary, self.stationary)

    def within(self, tol: float) -> bool:
        return self.worst() <= tol


@dataclass
class LevelSolution:
    """Solved (or best-effort) curves of one level, with diagnostics."""

    r: float
    time: TimeGrid
    x_lo: np.ndarray  # (n_states, nodes)
    x_up: np.ndarray
    u_lo: np.ndarray  # (nodes,)
    u_up: np.ndarray
    p1: np.ndarray  # (n_states, nodes)
    p2: np.ndarray
    residuals: ResidualReport
    converged: bool
    iterations: int
    message: str = ""


class SolveFailure(RuntimeError):
    """Solver did not reach the tolerance; carries the best iterate."""

    def __init__(self, message: str, solution: Optional[LevelSolution] = None):
        super().__init__(message)
        self.solution = solution


# curve layout shared with pmp: x curves (x_lo_1, x_up_1, ...) then
# costate curves (p1_1, p2_1, ...)


def _split_state(z: np.ndarray, ns: int):
    return tuple(z[0 : 2 * ns : 2]), tuple(z[1 : 2 * ns : 2])


def _split_costate(z: np.ndarray, ns: int):
    return tuple(z[2 * ns :: 2]), tuple(z[2 * ns + 1 :: 2])


class _ControlSolver:
    """Pointwise stationarity elimination with a quadratic fast path.

    When the Hamiltonian is quadratic in the control pair with a constant
    second-derivative block, a single 2x2 linear solve replaces the Newton
    iteration.  The candidate root is verified on every call; any mismatch
    permanently falls back to the damped Newton solve.
    """

    def __init__(self, system: PmpSystem):
        self.system = system
        self.ham = system.ham
        self.h11 = None
        self.h12 = self.h21 = self.h22 = 0.0
        self.disabled = False

    def __call__(self, x_lo, x_up, p1, p2, t):
        if not self.disabled:
            ham = self.ham
            g0 = ham.gradient(x_lo, x_up, 0.0, 0.0, p1, p2, t)[-2:]
            if self.h11 is None:
                ga = ham.gradient(x_lo, x_up, 1.0, 0.0, p1, p2, t)[-2:]
                gb = ham.gradient(x_lo, x_up, 0.0, 1.0, p1, p2, t)[-2:]
                self.h11 = ga[0] - g0[0]
                self.h21 = ga[1] - g0[1]
                self.h12 = gb[0] - g0[0]
                self.h22 = gb[1] - g0[1]
            det = self.h11 * self.h22 - self.h12 * self.h21
            if det != 0.0:
                u_lo = (-g0[0] * self.h22 + g0[1] * self.h12) / det
                u_up = (-g0[1] * self.h11 + g0[0] * self.h21) / det
                g = ham.gradient(x_lo, x_up, u_lo, u_up, p1, p2, t)[-2:]
                scale = 1.0 + abs(g0[0]) + abs(g0[1])
                if abs(g[0]) <= 1e-10 * scale and abs(g[1]) <= 1e-10 * scale:
                    return u_lo, u_up
            self.disabled = True
        return self.system.solve_control(x_lo, x_up, p1, p2, t)


def _controls_on_grid(system: PmpSystem, t: np.ndarray, x: np.ndarray, p: np.ndarray, control=None):
    """Stationary control pair at every node; x and p in curve layout (2ns, N)."""
    if control is None:
        control = _ControlSolver(system)
    n_nodes = x.shape[1]
    u_lo = np.zeros(n_nodes)
    u_up = np.zeros(n_nodes)
    for k in range(n_nodes):
        u_lo[k], u_up[k] = control(
            tuple(x[0::2, k]), tuple(x[1::2, k]), tuple(p[0::2, k]), tuple(p[1::2, k]), t[k]
        )
    return u_lo, u_up


def _rates_on_grid(system, t, x, u_lo, u_up) -> np.ndarray:
    out = np.zeros_like(x)
    for k in range(x.shape[1]):
        out[:, k] = system.state_rates(
            tuple(x[0::2, k]), tuple(x[1::2, k]), u_lo[k], u_up[k], t[k]
        )
    return out


def _adjoint_rhs_on_grid(system, t, x, u_lo, u_up, p) -> np.ndarray:
    out = np.zeros_like(p)
    for k in range(p.shape[1]):
        out[:, k] = system.adjoint_rhs(
            tuple(x[0::2, k]),
            tuple(x[1::2, k]),
            u_lo[k],
            u_up[k],
            tuple(p[0::2, k]),
            tuple(p[1::2, k]),
            t[k],
        )
    return out


def _state_nodal_jacobian(system, t_k, x_k, u_lo, u_up, step=1e-7) -> np.ndarray:
    """d(state rates)/d(nodal state values), both in curve layout."""
    m = len(x_k)
    jac = np.zeros((m, m))
    for j in range(m):
        h = step * max(1.0, abs(x_k[j]))
        plus = x_k.copy()
        minus = x_k.copy()
        plus[j] += h
        minus[j] -= h
        rp = system.state_rates(tuple(plus[0::2]), tuple(plus[1::2]), u_lo, u_up, t_k)
        rm = system.state_rates(tuple(minus[0::2]), tuple(minus[1::2]), u_lo, u_up, t_k)
        jac[:, j] = (rp - rm) / (2.0 * h)
    return jac


def _adjoint_coupling(system, t_k, x_k, u_lo, u_up) -> tuple[np.ndarray, np.ndarray]:
    """Split dH/dx into its costate-free part and exact linear p-coupling."""
    ns = system.n_states
    zeros = (0.0,) * ns
    x_lo = tuple(x_k[0::2])
    x_up = tuple(x_k[1::2])
    g0 = system.adjoint_rhs(x_lo, x_up, u_lo, u_up, zeros, zeros, t_k)
    coupling = np.zeros((2 * ns, 2 * ns))
    for c in range(2 * ns):
        p1 = [0.0] * ns
        p2 = [0.0] * ns
        if c % 2 == 0:
            p1[c // 2] = 1.0
        else:
            p2[c // 2] = 1.0
        g1 = system.adjoint_rhs(x_lo, x_up, u_lo, u_up, tuple(p1), tuple(p2), t_k)
        coupling[:, c] = g1 - g0
    return g0, coupling


# ---------------------------------------------------------------------------
# classical case (order one)
# ---------------------------------------------------------------------------


def _rk4_shoot(
    system: PmpSystem, t: np.ndarray, s: np.ndarray, control=None
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate states and costates forward from t[0]; returns (x, p) arrays.

    The inner loop runs on plain floats: the per-stage control solve and
    Hamiltonian gradients dominate, and small-array round-trips would
    triple the cost of fine meshes.
    """
    ns = system.n_states
    at_a, _ = system.boundary_values()
    z = [float(v) for v in at_a] + [float(v) for v in s]
    m = len(z)
    n_nodes = len(t)
    xs = np.zeros((2 * ns, n_nodes))
    ps = np.zeros((2 * ns, n_nodes))
    xs[:, 0] = z[: 2 * ns]
    ps[:, 0] = z[2 * ns :]
    if control is None:
        control = _ControlSolver(system)
    spec = system.spec
    dynamics = spec.dynamics
    gradient = system.ham.gradient
    case1 = tuple(case is GhCase.CASE1 for case in spec.cases)

    def rate(tk: float, zk: list[float]) -> list[float]:
        x_lo = tuple(zk[0 : 2 * ns : 2])
        x_up = tuple(zk[1 : 2 * ns : 2])
        p1 = tuple(zk[2 * ns :: 2])
        p2 = tuple(zk[2 * ns + 1 :: 2])
        u_lo, u_up = control(x_lo, x_up, p1, p2, tk)
        out = [0.0] * m
        for i in range(ns):
            lo, up = dynamics[i](x_lo, x_up, u_lo, u_up, tk)
            if case1[i]:
                out[2 * i], out[2 * i + 1] = lo, up
            else:
                out[2 * i], out[2 * i + 1] = up, lo
        g = gradient(x_lo, x_up, u_lo, u_up, p1, p2, tk)
        for i in range(ns):
            out[2 * ns + 2 * i] = -g[i]
            out[2 * ns + 2 * i + 1] = -g[ns + i]
        return out

    idx = range(m)
    for k in range(n_nodes - 1):
        tk = t[k]
        h = t[k + 1] - tk
        half = 0.5 * h
        k1 = rate(tk, z)
        k2 = rate(tk + half, [z[j] + half * k1[j] for j in idx])
        k3 = rate(tk + half, [z[j] + half * k2[j] for j in idx])
        k4 = rate(t[k + 1], [z[j] + h * k3[j] for j in idx])
        sixth = h / 6.0
        z = [z[j] + sixth * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j]) for j in idx]
        if not math.isfinite(sum(z)):
            raise SolveFailure("state integration blew up during shooting")
        xs[:, k + 1] = z[: 2 * ns]
        ps[:, k + 1] = z[2 * ns :]
    return xs, ps


def _damped_newton(residual, s0: np.ndarray, tol: float, max_iter: int, damping: float):
    """Generic damped Newton with finite-difference Jacobian."""
    s = np.asarray(s0, dtype=float).copy()
    res = residual(s)
    norm = float(np.max(np.abs(res)))
    iterations = 0
    for _ in range(max_iter):
        if norm <= tol:
            break
        iterations += 1
        jac = np.zeros((len(res), len(s)))
        for j in range(len(s)):
            h = 1e-6 * max(1.0, abs(s[j]))
            sp = s.copy()
            sp[j] += h
            jac[:, j] = (residual(sp) - res) / h
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            raise SolveFailure("singular shooting Jacobian") from None
        factor = 1.0
        improved = False
        for _ in range(40):
            candidate = s + factor * step
            res_new = residual(candidate)
            norm_new = float(np.max(np.abs(res_new)))
            if norm_new < norm or norm_new <= tol:
                s, res, norm = candidate, res_new, norm_new
                improved = True
                break
            factor *= damping
        if not improved:
            break
    return s, norm, iterations


def solve_bvp_ode(system: PmpSystem, config: SolveConfig = SolveConfig()) -> LevelSolution:
    """Classical-order solve: single shooting on the costate initial values.

    The coupled state and costate equations are integrated with fixed-step
    RK4 (controls from the stationarity solve at every stage) and damped
    Newton adjusts the costate initial values until the terminal states
    match.  Success requires the independent residual report to sit within
    the tolerance; the dynamics entry is limited by the stencil truncation
    of the smooth curves, which shrinks as O(h^2) with the mesh.
    """
    if not system.beta.is_integer:
        raise ValueError("solve_bvp_ode handles order 1 only")
    a, b = system.time
    time = TimeGrid.uniform(a, b, config.mesh)
    t = time.as_array()
    ns = system.n_states
    _, at_b = system.boundary_values()
    control = _ControlSolver(system)
    last: dict = {}

    def shoot_residual(s: np.ndarray) -> np.ndarray:
        xs, ps = _rk4_shoot(system, t, s, control)
        last["s"], last["xs"], last["ps"] = s.copy(), xs, ps
        return xs[:, -1] - at_b

    s0 = np.zeros(2 * ns)
    s, shoot_norm, shoot_iters = _damped_newton(
        shoot_residual,
        s0,
        tol=min(config.tol * 1e-2, 1e-7),
        max_iter=config.max_newton,
        damping=config.damping,
    )
    if not math.isfinite(shoot_norm) or shoot_norm > config.tol:
        raise SolveFailure(f"shooting stalled at terminal defect {shoot_norm:g}")
    if np.array_equal(last.get("s"), s):
        xs, ps = last["xs"], last["ps"]
    else:
        xs, ps = _rk4_shoot(system, t, s, control)
    u_lo, u_up = _controls_on_grid(system, t, xs, ps, control)
    solution = _package(system, time, xs, ps, u_lo, u_up, shoot_iters, config.tol)
    if not solution.converged:
        raise SolveFailure(
            f"residuals {solution.residuals} exceed tol {config.tol}", solution
        )
    return solution


# ---------------------------------------------------------------------------
# fractional case
# ---------------------------------------------------------------------------


class _FractionalStepper:
    """Shared matrices and sweep machinery for one (grid, order) pair."""

    def __init__(self, system: PmpSystem, time: TimeGrid):
        self.system = system
        self.time = time
        self.t = time.as_array()
        self.ns = system.n_states
        self.n_nodes = len(time)
        beta = system.beta
        self.cmat = frac_ops.caputo_left_matrix(time, beta)
        self.rmat, self.bcol = frac_ops.right_derivative_parts(time, beta)
        self.at_a, self.at_b = system.boundary_values()
        self.control = _ControlSolver(system)

    def adjoint_solve(self, x: np.ndarray, u_lo, u_up, s: np.ndarray) -> np.ndarray:
        """Exact solve of the adjoint equations, linear in the costates.

        Equations are imposed on nodes 0..N-2 (the right-derivative is
        singular at the terminal node); the terminal values are the
        shooting unknowns ``s``.
        """
        ns, n = self.ns, self.n_nodes
        nc = 2 * ns
        size = nc * n
        big = np.zeros((size, size))
        rhs = np.zeros(size)
        g0 = np.zeros((nc, n))
        coup = np.zeros((n, nc, nc))
        for k in range(n):
            g0[:, k], coup[k] = _adjoint_coupling(
                self.system, self.t[k], x[:, k], u_lo[k], u_up[k]
            )
        for c in range(nc):
            offset = c * n
            big[offset : offset + n - 1, offset : offset + n] = self.rmat[: n - 1]
            big[offset : offset + n - 1, offset + n - 1] += self.bcol[: n - 1]
            rhs[offset : offset + n - 1] = g0[c, : n - 1]
            for c2 in range(nc):
                big[offset : offset + n - 1, c2 * n : c2 * n + n - 1] -= np.diag(
                    coup[: n - 1, c, c2]
                )
            big[offset + n - 1, offset + n - 1] = 1.0
            rhs[offset + n - 1] = s[c]
        sol = np.linalg.solve(big, rhs)
        return sol.reshape(nc, n)

    def state_solve(self, x0: np.ndarray, u_lo, u_up) -> np.ndarray:
        """Newton on the left-Caputo collocation rows, boundary row at t=a."""
        ns, n = self.ns, self.n_nodes
        nc = 2 * ns
        x = x0.copy()

        def residual(xc: np.ndarray) -> np.ndarray:
            rates = _rates_on_grid(self.system, self.t, xc, u_lo, u_up)
            out = self.cmat @ xc.T - rates.T  # (n, nc)
            out[0] = xc[:, 0] - self.at_a
            return out.T.reshape(-1)

        res = residual(x)
        norm = float(np.max(np.abs(res)))
        for _ in range(30):
            if norm <= 1e-11:
                break
            size = nc * n
            big = np.zeros((size, size))
            for c in range(nc):
                big[c * n : (c + 1) * n, c * n : (c + 1) * n] = self.cmat
                big[c * n, :] = 0.0
                big[c * n, c * n] = 1.0
            for k in range(1, n):
                nodal = _state_nodal_jacobian(
                    self.system, self.t[k], x[:, k], u_lo[k], u_up[k]
                )
                for c in range(nc):
                    for c2 in range(nc):
                        big[c * n + k, c2 * n + k] -= nodal[c, c2]
            step = np.linalg.solve(big, -res)
            x = x + step.reshape(nc, n)
            res = residual(x)
            new_norm = float(np.max(np.abs(res)))
            if not math.isfinite(new_norm):
                raise SolveFailure("state collocation Newton produced non-finite values")
            if new_norm >= norm and norm < 1e-8:
                break
            norm = new_norm
        if norm > 1e-8:
            raise SolveFailure(f"state collocation Newton stalled at defect {norm:g}")
        return x

    def sweeps(self, s: np.ndarray, x: np.ndarray, p: np.ndarray, u_lo, u_up, config: SolveConfig):
        """Alternate adjoint solve, control update, state solve to a fixed point."""
        prev_change = math.inf
        growth = 0
        for sweep in range(1, config.max_sweeps + 1):
            p_new = self.adjoint_solve(x, u_lo, u_up, s)
            u_lo_new, u_up_new = _controls_on_grid(self.system, self.t, x, p_new, self.control)
            x_new = self.state_solve(x, u_lo_new, u_up_new)
            change = max(
                float(np.max(np.abs(x_new - x))),
                float(np.max(np.abs(p_new - p))),
                float(np.max(np.abs(u_lo_new - u_lo))),
                float(np.max(np.abs(u_up_new - u_up))),
            )
            x, p, u_lo, u_up = x_new, p_new, u_lo_new, u_up_new
            if change <= config.sweep_tol:
                return x, p, u_lo, u_up, sweep
            if change > prev_change:
                growth += 1
                if growth >= 5:
                    raise SolveFailure(
                        f"fixed-point sweeps diverging (change {change:g} after {sweep} sweeps)"
                    )
            else:
                growth = 0
            prev_change = change
        raise SolveFailure(f"fixed point not reached in {config.max_sweeps} sweeps")


def _fractional_attempt(
    system: PmpSystem, config: SolveConfig, s0: np.ndarray
) -> tuple[LevelSolution, np.ndarray]:
    a, b = system.time
    time = TimeGrid.uniform(a, b, config.mesh)
    stepper = _FractionalStepper(system, time)
    ns = system.n_states
    n = len(time)
    frac = np.linspace(0.0, 1.0, n)
    x_init = np.outer(stepper.at_a, 1.0 - frac) + np.outer(stepper.at_b, frac)
    state = {
        "x": x_init,
        "p": np.zeros((2 * ns, n)),
        "u_lo": np.zeros(n),
        "u_up": np.zeros(n),
        "sweeps": 0,
    }

    def residual(s: np.ndarray) -> np.ndarray:
        x, p, u_lo, u_up, used = stepper.sweeps(
            s, state["x"], state["p"], state["u_lo"], state["u_up"], config
        )
        state.update(x=x, p=p, u_lo=u_lo, u_up=u_up, sweeps=state["sweeps"] + used)
        return x[:, -1] - stepper.at_b

    s, norm, iters = _damped_newton(
        residual,
        s0,
        tol=min(config.tol * 1e-2, 1e-7),
        max_iter=config.max_newton,
        damping=config.damping,
    )
    if norm > config.tol:
        raise SolveFailure(f"shooting on terminal costates stalled at defect {norm:g}")
    residual(s)  # leave state at the accepted unknowns
    solution = _package(
        system, time, state["x"], state["p"], state["u_lo"], state["u_up"], iters, config.tol
    )
    if not solution.converged:
        raise SolveFailure(
            f"residuals {solution.residuals} exceed tol {config.tol}", solution
        )
    return solution, s


def solve_bvp_fractional(
    system: PmpSystem, config: SolveConfig = SolveConfig()
) -> LevelSolution:
    """Fractional-order solve; falls back to an order homotopy on failure.

    The homotopy starts from the classical solve at order 1 and walks the
    order down in steps of 0.1, warm-starting the terminal costates.
    """
    beta = system.beta
    if beta.is_integer:
        raise ValueError("solve_bvp_fractional handles orders below 1 only")
    ns = system.n_states
    try:
        solution, _ = _fractional_attempt(system, config, np.zeros(2 * ns))
        return solution
    except SolveFailure as direct_failure:
        try:
            ode_system = assemble_pmp_system(
                replace(system.spec, beta=FracOrder(1.0)), system.r
            )
            ode_solution = solve_bvp_ode(ode_system, config)
        except SolveFailure as ode_failure:
            # a warm start only needs usable curves, not a tight residual
            if ode_failure.solution is None:
                raise direct_failure from None
            ode_solution = ode_failure.solution
        s = np.ravel(np.column_stack([ode_solution.p1[:, -1], ode_solution.p2[:, -1]]))
        current = 1.0
        solution = None
        while current - beta.alpha > 1e-12:
            current = max(beta.alpha, current - 0.1)
            step_system = assemble_pmp_system(
                replace(system.spec, beta=FracOrder(current)), system.r
            )
            solution, s = _fractional_attempt(step_system, config, s)
        if solution is None:
            raise direct_failure from None
        return solution


def solve_level(system: PmpSystem, config: SolveConfig = SolveConfig()) -> LevelSolution:
    """Dispatch on the fractional order."""
    if system.beta.is_integer:
        return solve_bvp_ode(system, config)
    return solve_bvp_fractional(system, config)


# ---------------------------------------------------------------------------
# verification and packaging
# ---------------------------------------------------------------------------


def residual_norm(solution: LevelSolution, system: PmpSystem) -> ResidualReport:
    """Recompute equation defects from the curves alone.

    Re-applies the fractional operators to the solved samples; never uses
    solver internals.  Differential equations are checked on the nodes
    where the discrete system imposes them: state rows on interior nodes
    (classical) or on all nodes past t=a (fractional), costate rows on all
    nodes (classical) or on all nodes before t=b (fractional).
    """
    time = solution.time
    t = time.as_array()
    beta = system.beta
    ns = system.n_states
    n = len(time)
    x = np.zeros((2 * ns, n))
    x[0::2] = solution.x_lo
    x[1::2] = solution.x_up
    p = np.zeros((2 * ns, n))
    p[0::2] = solution.p1
    p[1::2] = solution.p2

    rates = _rates_on_grid(system, t, x, solution.u_lo, solution.u_up)
    adj = _adjoint_rhs_on_grid(system, t, x, solution.u_lo, solution.u_up, p)

    caputo = np.array([frac_ops.caputo_left(x[c], time, beta) for c in range(2 * ns)])
    right = np.array([frac_ops.rl_derivative_right(p[c], time, beta) for c in range(2 * ns)])

    if beta.is_integer:
        state_defect = caputo[:, 1 : n - 1] - rates[:, 1 : n - 1]
        adjoint_defect = right - adj
    else:
        state_defect = caputo[:, 1:] - rates[:, 1:]
        adjoint_defect = right[:, : n - 1] - adj[:, : n - 1]
    dynamics = max(
        float(np.max(np.abs(state_defect))), float(np.max(np.abs(adjoint_defect)))
    )

    at_a, at_b = system.boundary_values()
    boundary = max(
        float(np.max(np.abs(x[:, 0] - at_a))), float(np.max(np.abs(x[:, -1] - at_b)))
    )

    stat = 0.0
    for k in range(n):
        g = system.stationary_residual(
            tuple(x[0::2, k]),
            tuple(x[1::2, k]),
            solution.u_lo[k],
            solution.u_up[k],
            tuple(p[0::2, k]),
            tuple(p[1::2, k]),
            t[k],
        )
        stat = max(stat, float(np.max(np.abs(g))))
    return ResidualReport(dynamics=dynamics, boundary=boundary, stationary=stat)


def _package(
    system: PmpSystem,
    time: TimeGrid,
    x: np.ndarray,
    p: np.ndarray,
    u_lo: np.ndarray,
    u_up: np.ndarray,
    iterations: int,
    tol: float,
    message: str = "",
) -> LevelSolution:
    solution = LevelSolution(
        r=system.r,
        time=time,
        x_lo=x[0::2].copy(),
        x_up=x[1::2].copy(),
        u_lo=np.asarray(u_lo).copy(),
        u_up=np.asarray(u_up).copy(),
        p1=p[0::2].copy(),
        p2=p[1::2].copy(),
        residuals=ResidualReport(math.inf, math.inf, math.inf),
        converged=False,
        iterations=iterations,
        message=message,
    )
    report = residual_norm(solution, system)
    solution.residuals = report
    solution.converged = report.within(tol)
    return solution


@dataclass
class SolutionBundle:
    """Cross-level results with assembled fuzzy trajectories and diagnostics."""

    spec: ProblemSpec
    levels: LevelGrid
    time: TimeGrid
    solutions: tuple[LevelSolution, ...]
    states: Optional[tuple[FuzzyTrajectory, ...]]
    control: Optional[FuzzyTrajectory]
    stacking: dict[str, tuple[StackingVerdict, ...]]

    @property
    def all_converged(self) -> bool:
        return all(sol.converged for sol in self.solutions)

    def solution_at(self, r: float) -> LevelSolution:
        for sol in self.solutions:
            if abs(sol.r - r) <= 1e-12:
                return sol
        raise KeyError(f"no solved level at r={r}")


def solve_problem(
    spec: ProblemSpec,
    levels: LevelGrid,
    config: SolveConfig = SolveConfig(),
    threads: int = 0,
) -> SolutionBundle:
    """Solve every membership level and assemble the fuzzy trajectories.

    Levels are independent pure solves; ``threads`` > 0 runs them in a
    thread pool, results are merged in level order either way.
    """

    def run_level(r: float) -> LevelSolution:
        system = assemble_pmp_system(spec, r)
        try:
            return solve_level(system, config)
        except SolveFailure as failure:
            if failure.solution is not None:
                sol = failure.solution
                sol.message = str(failure)
                return sol
            a, b = spec.time
            time = TimeGrid.uniform(a, b, config.mesh)
            n = len(time)
            ns = spec.n_states
            empty = LevelSolution(
                r=r,
                time=time,
                x_lo=np.full((ns, n), np.nan),
                x_up=np.full((ns, n), np.nan),
                u_lo=np.full(n, np.nan),
                u_up=np.full(n, np.nan),
                p1=np.full((ns, n), np.nan),
                p2=np.full((ns, n), np.nan),
                residuals=ResidualReport(math.inf, math.inf, math.inf),
                converged=False,
                iterations=0,
                message=str(failure),
            )
            return empty

    if threads and threads > 0:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            solutions = tuple(pool.map(run_level, levels.levels))
    else:
        solutions = tuple(run_level(r) for r in levels.levels)

    time = solutions[0].time
    states: Optional[tuple[FuzzyTrajectory, ...]] = None
    control: Optional[FuzzyTrajectory] = None
    stacking: dict[str, tuple[StackingVerdict, ...]] = {}
    if all(sol.converged for sol in solutions):
        ns = spec.n_states
        n = len(time)
        state_trajs = []
        for i in range(ns):
            low = np.column_stack([sol.x_lo[i] for sol in solutions])
            up = np.column_stack([sol.x_up[i] for sol in solutions])
            traj = FuzzyTrajectory.from_matrices(time, levels, low, up)
            state_trajs.append(traj)
            stacking[f"x{i + 1}"] = tuple(
                validate_stacking(traj.values[k], tol=1e-8) for k in range(n)
            )
        low = np.column_stack([sol.u_lo for sol in solutions])
        up = np.column_stack([sol.u_up for sol in solutions])
        control = FuzzyTrajectory.from_matrices(time, levels, low, up)
        stacking["u"] = tuple(
            validate_stacking(control.values[k], tol=1e-8) for k in range(n)
        )
        states = tuple(state_trajs)
    return SolutionBundle(
        spec=spec,
        levels=levels,
        time=time,
        solutions=solutions,
        states=states,
        control=control,
        stacking=stacking,
    )
