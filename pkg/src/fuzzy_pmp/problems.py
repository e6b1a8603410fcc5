"""Declarative problem files, builtin registry, and run orchestration.

Problem files are line-oriented ``key = value`` text.  Keys: ``name``,
``t0``, ``t1``, ``beta``, ``pairing`` (optional, default aligned),
``case`` (optional, default all case1), ``cost``, one ``dynamics.xK``
line per state, and boundary triples ``xK.t0 = (p, q, s)`` and
``xK.t1 = (p, q, s)``.  Comments start with ``#``.  Expressions use the
grammar of :mod:`fuzzy_pmp.expressions` over ``t``, ``u`` and the states.

Cost and aligned dynamics turn into endpoint pairs by substituting all
lower endpoints (for the lower value) or all upper endpoints; interval
dynamics are restricted to expressions linear in states and control, and
their endpoint pairs come from sign-split coefficients.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import expressions as ex
from .bvp import SolutionBundle, SolveConfig, solve_problem
from .frac_ops import FracOrder
from .fuzzy_core import GhCase, LevelGrid, triangular
from .pmp import (
    Feasibility,
    FeasibilityVerdict,
    LinearDynamics,
    Pairing,
    ProblemSpec,
    check_diameter_feasibility,
    linear_dynamics_evaluators,
)

__all__ = [
    "ProblemFileError",
    "ProblemFile",
    "parse_problem",
    "problem_to_text",
    "build_spec",
    "builtin_names",
    "builtin_text",
    "load_problem",
    "RunResult",
    "run",
]

THREADS_ENV = "FUZZY_PMP_THREADS"


class ProblemFileError(ValueError):
    """Malformed problem file; carries the 1-based line number when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class ProblemFile:
    name: str
    t0: float
    t1: float
    beta: float
    pairing: Pairing
    cases: tuple[GhCase, ...]
    cost: ex.Expression
    dynamics: tuple[ex.Expression, ...]
    boundary: tuple[tuple[tuple[float, float, float], tuple[float, float, float]], ...]

    @property
    def n_states(self) -> int:
        return len(self.dynamics)


_TRIPLE_RE = re.compile(
    r"^\(\s*([^,\s]+)\s*,\s*([^,\s]+)\s*,\s*([^,\s)]+)\s*\)$"
)
_KEY_RE = re.compile(r"^([A-Za-z][A-Za-z0-9._]*)\s*=\s*(.*)$")


def _parse_float(text: str, line: int, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ProblemFileError(f"{what} is not a number: {text!r}", line) from None


def _parse_case_tag(tag: str, line: int) -> GhCase:
    norm = tag.strip().lower()
    if norm in ("1", "case1"):
        return GhCase.CASE1
    if norm in ("2", "case2"):
        return GhCase.CASE2
    raise ProblemFileError(f"unknown case tag {tag!r} (use case1/case2)", line)


def parse_problem(text: str) -> ProblemFile:
    """Parse problem-file text; all errors carry line numbers."""
    scalars: dict[str, tuple[str, int]] = {}
    dynamics: dict[int, tuple[str, int]] = {}
    boundary: dict[tuple[int, str], tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _KEY_RE.match(line)
        if m is None:
            raise ProblemFileError(f"expected 'key = value', got {line!r}", lineno)
        key, value = m.group(1), m.group(2).strip()
        dyn = re.fullmatch(r"dynamics\.x([1-9])", key)
        bnd = re.fullmatch(r"x([1-9])\.(t0|t1)", key)
        if dyn:
            idx = int(dyn.group(1))
            if idx in dynamics:
                raise ProblemFileError(f"duplicate key {key!r}", lineno)
            dynamics[idx] = (value, lineno)
        elif bnd:
            entry = (int(bnd.group(1)), bnd.group(2))
            if entry in boundary:
                raise ProblemFileError(f"duplicate key {key!r}", lineno)
            boundary[entry] = (value, lineno)
        elif key in ("name", "t0", "t1", "beta", "pairing", "case", "cost"):
            if key in scalars:
                raise ProblemFileError(f"duplicate key {key!r}", lineno)
            scalars[key] = (value, lineno)
        else:
            raise ProblemFileError(f"unknown key {key!r}", lineno)

    for required in ("name", "t0", "t1", "beta", "cost"):
        if required not in scalars:
            raise ProblemFileError(f"missing required key {required!r}")
    if not dynamics:
        raise ProblemFileError("missing required key 'dynamics.x1'")
    n_states = max(dynamics)
    if sorted(dynamics) != list(range(1, n_states + 1)):
        raise ProblemFileError("dynamics lines must cover x1..xN without gaps")

    t0 = _parse_float(*scalars["t0"], what="t0")
    t1 = _parse_float(*scalars["t1"], what="t1")
    if not t0 < t1:
        raise ProblemFileError("t0 must be smaller than t1", scalars["t0"][1])
    beta = _parse_float(*scalars["beta"], what="beta")
    if not 0.0 < beta <= 1.0:
        raise ProblemFileError("beta must lie in (0, 1]", scalars["beta"][1])

    if "pairing" in scalars:
        value, lineno = scalars["pairing"]
        try:
            pairing = Pairing(value.strip().lower())
        except ValueError:
            raise ProblemFileError(
                f"pairing must be 'aligned' or 'interval', got {value!r}", lineno
            ) from None
    else:
        pairing = Pairing.ALIGNED

    if "case" in scalars:
        value, lineno = scalars["case"]
        tags = [tag for tag in value.split(",") if tag.strip()]
        cases = tuple(_parse_case_tag(tag, lineno) for tag in tags)
        if len(cases) != n_states:
            raise ProblemFileError(
                f"case list has {len(cases)} tags for {n_states} states", lineno
            )
    else:
        cases = (GhCase.CASE1,) * n_states

    def parse_expr(value: str, lineno: int, allowed_states: int) -> ex.Expression:
        try:
            tree = ex.parse_expression(value)
        except (ex.ExprSyntaxError, ex.UnknownIdentifierError) as err:
            raise ProblemFileError(f"bad expression: {err}", lineno) from None
        for var in ex.variables_used(tree):
            if var.startswith("x") and int(var[1:]) > allowed_states:
                raise ProblemFileError(
                    f"expression references {var} but only {allowed_states} states exist",
                    lineno,
                )
        return tree

    cost = parse_expr(*scalars["cost"], allowed_states=n_states)
    dyn_exprs = tuple(
        parse_expr(*dynamics[i], allowed_states=n_states) for i in range(1, n_states + 1)
    )

    triples = []
    for i in range(1, n_states + 1):
        per_end = []
        for end in ("t0", "t1"):
            if (i, end) not in boundary:
                raise ProblemFileError(f"missing boundary line 'x{i}.{end} = (p, q, s)'")
            value, lineno = boundary[(i, end)]
            m = _TRIPLE_RE.match(value)
            if m is None:
                raise ProblemFileError(
                    f"malformed triple {value!r}, expected (p, q, s)", lineno
                )
            p, q, s = (
                _parse_float(m.group(j), lineno, what=f"x{i}.{end} entry") for j in (1, 2, 3)
            )
            if not p <= q <= s:
                raise ProblemFileError(
                    f"triple must be ordered p <= q <= s, got ({p:g}, {q:g}, {s:g})", lineno
                )
            per_end.append((p, q, s))
        triples.append((per_end[0], per_end[1]))

    return ProblemFile(
        name=scalars["name"][0],
        t0=t0,
        t1=t1,
        beta=beta,
        pairing=pairing,
        cases=cases,
        cost=cost,
        dynamics=dyn_exprs,
        boundary=tuple(triples),
    )


def problem_to_text(pf: ProblemFile) -> str:
    """Serialize; reparsing yields a structurally equal value."""
    lines = [
        f"name = {pf.name}",
        f"t0 = {pf.t0!r}",
        f"t1 = {pf.t1!r}",
        f"beta = {pf.beta!r}",
        f"pairing = {pf.pairing.value}",
        "case = " + ", ".join(f"case{c.value}" for c in pf.cases),
        f"cost = {ex.to_text(pf.cost)}",
    ]
    for i, dyn in enumerate(pf.dynamics, start=1):
        lines.append(f"dynamics.x{i} = {ex.to_text(dyn)}")
    for i, (at0, at1) in enumerate(pf.boundary, start=1):
        lines.append(f"x{i}.t0 = ({at0[0]!r}, {at0[1]!r}, {at0[2]!r})")
        lines.append(f"x{i}.t1 = ({at1[0]!r}, {at1[1]!r}, {at1[2]!r})")
    return "\n".join(lines) + "\n"


def _env(n_states: int, states: Sequence[float], u: float, t: float) -> dict[str, float]:
    env = {"t": t, "u": u}
    for j in range(n_states):
        env[f"x{j + 1}"] = states[j]
    return env


def _endpoint_pair_evaluator(tree: ex.Expression, n_states: int):
    """Aligned endpoint substitution: lows into the low value, ups into the up."""
    fn = ex.compiled(tree)

    def evaluate(x_lo, x_up, u_lo, u_up, t):
        return (
            fn(_env(n_states, x_lo, u_lo, t)),
            fn(_env(n_states, x_up, u_up, t)),
        )

    return evaluate


def _gradient_closures(tree: ex.Expression, n_states: int):
    """Compiled partials in (x.., u); falls back to dual numbers if needed."""
    names = [f"x{j + 1}" for j in range(n_states)] + ["u"]
    try:
        compiled = [ex.compiled(ex.differentiate(tree, name)) for name in names]

        def partials(env: dict[str, float]) -> list[float]:
            return [fn(env) for fn in compiled]

    except ValueError:

        def partials(env: dict[str, float]) -> list[float]:
            return [ex.evaluate_with_derivative(tree, env, name)[1] for name in names]

    return partials


def _endpoint_pair_gradient(tree: ex.Expression, n_states: int):
    """Gradients of the aligned endpoint pair in the flat layout.

    The low value depends only on lower endpoints and u_lo, the up value
    only on upper endpoints and u_up.
    """
    partials = _gradient_closures(tree, n_states)
    zeros = (0.0,) * n_states

    def gradient(x_lo, x_up, u_lo, u_up, t):
        g_lo = partials(_env(n_states, x_lo, u_lo, t))
        g_up = partials(_env(n_states, x_up, u_up, t))
        low = tuple(g_lo[:n_states]) + zeros + (g_lo[n_states], 0.0)
        up = zeros + tuple(g_up[:n_states]) + (0.0, g_up[n_states])
        return low, up

    return gradient


def _extract_linear(pf: ProblemFile) -> Optional[LinearDynamics]:
    """Symbolic coefficient extraction for dynamics linear in states/control.

    An expression is affine in the states and the control exactly when all
    its first partials in those symbols are expressions of t alone; the
    partials then are the coefficients.  Returns None otherwise.
    """
    n = pf.n_states
    names = [f"x{j + 1}" for j in range(n)] + ["u"]
    state_rows: list[tuple[Callable[[float], float], ...]] = []
    control_col: list[Callable[[float], float]] = []
    offsets: list[Callable[[float], float]] = []
    zeros = [0.0] * n
    for tree in pf.dynamics:
        coefs = []
        try:
            for name in names:
                derivative = ex.differentiate(tree, name)
                if ex.variables_used(derivative) & set(names):
                    return None
                coefs.append(ex.compiled(derivative))
        except ValueError:
            return None

        def coef_fn(fn):
            return lambda t: fn({"t": t})

        state_rows.append(tuple(coef_fn(fn) for fn in coefs[:n]))
        control_col.append(coef_fn(coefs[n]))
        base = ex.compiled(tree)
        offsets.append(lambda t, base=base: base(_env(n, zeros, 0.0, t)))
    return LinearDynamics(
        pairing=pf.pairing,
        state_coef=tuple(state_rows),
        control_coef=tuple(control_col),
        offset=tuple(offsets),
        display=tuple(ex.to_text(tree) for tree in pf.dynamics),
    )


def build_spec(pf: ProblemFile, grid: LevelGrid) -> ProblemSpec:
    """Instantiate the endpoint-pair evaluators over a level grid."""
    n = pf.n_states
    lin = _extract_linear(pf)
    if pf.pairing is Pairing.INTERVAL:
        if lin is None:
            raise ProblemFileError(
                "interval pairing needs dynamics linear in states and control"
            )
        dynamics, dynamics_grad = linear_dynamics_evaluators(lin)
    else:
        dynamics = tuple(_endpoint_pair_evaluator(tree, n) for tree in pf.dynamics)
        dynamics_grad = tuple(_endpoint_pair_gradient(tree, n) for tree in pf.dynamics)

    boundary_a = tuple(triangular(*pf.boundary[i][0], grid) for i in range(n))
    boundary_b = tuple(triangular(*pf.boundary[i][1], grid) for i in range(n))
    return ProblemSpec(
        time=(pf.t0, pf.t1),
        beta=FracOrder(pf.beta),
        n_states=n,
        cost=_endpoint_pair_evaluator(pf.cost, n),
        dynamics=dynamics,
        boundary_a=boundary_a,
        boundary_b=boundary_b,
        cases=pf.cases,
        cost_grad=_endpoint_pair_gradient(pf.cost, n),
        dynamics_grad=dynamics_grad,
        linear=lin,
        name=pf.name,
    )


# ---------------------------------------------------------------------------
# builtin problems
# ---------------------------------------------------------------------------

_BUILTIN_TEXTS: dict[str, str] = {
    "ex51-case1": """\
# non-autonomous scalar problem, aligned endpoint pairing, first case
name = ex51-case1
t0 = 1
t1 = 2
beta = 1
pairing = aligned
case = case1
cost = u^2
dynamics.x1 = (2*t - 1)*x1 - sin(t)*u
x1.t0 = (0, 1, 2)
x1.t1 = (-2, -1, 1)
""",
    "ex51-case2": """\
# same data as ex51-case1 under second-case differentiability
name = ex51-case2
t0 = 1
t1 = 2
beta = 1
pairing = aligned
case = case2
cost = u^2
dynamics.x1 = (2*t - 1)*x1 - sin(t)*u
x1.t0 = (0, 1, 2)
x1.t1 = (-2, -1, 1)
""",
    "ex52": """\
# autonomous two-state problem, mixed cases, interval pairing
name = ex52
t0 = 0
t1 = 1
beta = 1
pairing = interval
case = case1, case2
cost = u^2
dynamics.x1 = -2*x2 + u
dynamics.x2 = 2*x1
x1.t0 = (1, 2, 3)
x1.t1 = (-0.5, 0, 0.5)
x2.t0 = (1, 2, 3)
x2.t1 = (-0.5, 0, 0.5)
""",
    "ex52-crisp": """\
# crisp reduction of ex52: boundary data collapsed to their cores
name = ex52-crisp
t0 = 0
t1 = 1
beta = 1
pairing = interval
case = case1, case1
cost = u^2
dynamics.x1 = -2*x2 + u
dynamics.x2 = 2*x1
x1.t0 = (2, 2, 2)
x1.t1 = (0, 0, 0)
x2.t0 = (2, 2, 2)
x2.t1 = (0, 0, 0)
""",
    "ex53": """\
# plus-form scalar problem whose fuzzy minimizers do not exist
name = ex53
t0 = 0
t1 = 2
beta = 1
pairing = interval
case = case1
cost = u^2
dynamics.x1 = (2*t - 1)*x1 + sin(t)*u
x1.t0 = (1, 2, 3)
x1.t1 = (-1, 0, 1)
""",
    "ex53-crisp": """\
# crisp reduction of ex53; solvable classically
name = ex53-crisp
t0 = 0
t1 = 2
beta = 1
pairing = interval
case = case1
cost = u^2
dynamics.x1 = (2*t - 1)*x1 + sin(t)*u
x1.t0 = (2, 2, 2)
x1.t1 = (0, 0, 0)
""",
    "remark42-variational": """\
# variational reduction: dynamics are the control itself
name = remark42-variational
t0 = 0
t1 = 1
beta = 1
pairing = aligned
case = case1
cost = u^2
dynamics.x1 = u
x1.t0 = (-1, 0, 1)
x1.t1 = (-2, 0, 2)
""",
}

_BUILTIN_INFO: dict[str, str] = {
    "ex51-case1": "scalar, time-varying coefficients, aligned pairing, first case",
    "ex51-case2": "scalar, time-varying coefficients, aligned pairing, second case",
    "ex52": "two states, mixed cases, interval pairing",
    "ex52-crisp": "crisp-core reduction of ex52",
    "ex53": "scalar plus-form problem refuted by the width argument",
    "ex53-crisp": "crisp-core reduction of ex53",
    "remark42-variational": "variational form: state rate equals the control",
}


def builtin_names() -> tuple[str, ...]:
    return tuple(sorted(_BUILTIN_TEXTS))


def builtin_info(name: str) -> str:
    return _BUILTIN_INFO.get(name, "")


def builtin_text(name: str) -> str:
    try:
        return _BUILTIN_TEXTS[name]
    except KeyError:
        raise ProblemFileError(f"unknown builtin problem {name!r}") from None


def load_problem(source: "str | Path") -> ProblemFile:
    """Builtin name or path to a problem file."""
    text = str(source)
    if text in _BUILTIN_TEXTS:
        return parse_problem(_BUILTIN_TEXTS[text])
    path = Path(source)
    if path.exists():
        return parse_problem(path.read_text(encoding="utf-8"))
    raise ProblemFileError(
        f"{text!r} is neither a builtin problem ({', '.join(builtin_names())}) "
        "nor an existing file"
    )


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    problem: ProblemFile
    verdict: FeasibilityVerdict
    bundle: Optional[SolutionBundle]
    files: tuple[Path, ...]
    exit_code: int  # 0 solved, 2 infeasible, 3 solve failure


def _threads_from_env() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 0
    try:
        return max(0, int(raw))
    except ValueError:
        return 0


def run(
    problem: "ProblemFile | str | Path",
    config: SolveConfig = SolveConfig(),
    levels: Optional[LevelGrid] = None,
    out_dir: "Optional[str | Path]" = None,
    formats: Sequence[str] = ("csv",),
    threads: Optional[int] = None,
) -> RunResult:
    """Feasibility check, per-level solves, and file emission.

    The width-based feasibility check runs first: a refuted problem is
    not solved at all (exit code 2).  Per-level solves may run in a
    thread pool (``threads`` or the FUZZY_PMP_THREADS variable); results
    are merged in level order regardless.
    """
    pf = problem if isinstance(problem, ProblemFile) else load_problem(problem)
    levels = levels if levels is not None else LevelGrid.uniform(11)
    spec = build_spec(pf, levels)
    verdict = check_diameter_feasibility(spec)
    if verdict.verdict is Feasibility.INFEASIBLE:
        return RunResult(pf, verdict, None, (), exit_code=2)
    if threads is None:
        threads = _threads_from_env()
    bundle = solve_problem(spec, levels, config, threads=threads)
    files: list[Path] = []
    if out_dir is not None and any(sol.converged for sol in bundle.solutions):
        from . import output

        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            files.append(output.emit_csv(bundle, out_path / f"{pf.name}.csv"))
        if "svg" in formats:
            files.extend(output.emit_svg(bundle, out_path, pf.name))
    exit_code = 0 if bundle.all_converged else 3
    return RunResult(pf, verdict, bundle, tuple(files), exit_code)
