"""Fuzzy fractional optimal control via necessary conditions.

Layers: level-cut fuzzy arithmetic (:mod:`fuzzy_pmp.fuzzy_core`),
discrete fractional operators (:mod:`fuzzy_pmp.frac_ops`), optimality
system assembly (:mod:`fuzzy_pmp.pmp`), two-point solvers
(:mod:`fuzzy_pmp.bvp`), and a declarative problem format with builtin
examples, CSV/SVG emission, and a CLI (:mod:`fuzzy_pmp.problems`,
:mod:`fuzzy_pmp.output`, :mod:`fuzzy_pmp.cli`).
"""

from .bvp import (
    LevelSolution,
    ResidualReport,
    SolutionBundle,
    SolveConfig,
    SolveFailure,
    residual_norm,
    solve_bvp_fractional,
    solve_bvp_ode,
    solve_level,
    solve_problem,
)
from .frac_ops import (
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
from .fuzzy_core import (
    Comparison,
    FuzzyNumber,
    FuzzyTrajectory,
    GhCase,
    GhDerivative,
    GhDerivativeError,
    GhDifferenceError,
    GridMismatchError,
    InvalidTriangularError,
    LevelGrid,
    LevelNotOnGridError,
    StackingVerdict,
    TimeGrid,
    add,
    compare,
    crisp,
    diameter,
    gh_derivative_numeric,
    gh_difference,
    hausdorff_distance,
    multiply,
    scale,
    triangular,
    validate_stacking,
)
from .pmp import (
    Feasibility,
    FeasibilityVerdict,
    Hamiltonian,
    LinearDynamics,
    Pairing,
    PmpSystem,
    ProblemSpec,
    StationarySolveError,
    assemble_pmp_system,
    build_hamiltonian,
    check_diameter_feasibility,
    crisp_reduce,
    linear_dynamics_evaluators,
    stationary_solve,
)
from .problems import (
    ProblemFile,
    ProblemFileError,
    RunResult,
    build_spec,
    builtin_names,
    builtin_text,
    load_problem,
    parse_problem,
    problem_to_text,
    run,
)

__version__ = "0.1.0"
