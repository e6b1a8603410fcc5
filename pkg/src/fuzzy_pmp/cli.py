"""Command-line interface.

Subcommands: ``solve <name|path>``, ``check <name|path>``, ``list``.
Exit codes: 0 solved, 2 infeasible by certificate, 3 solve failure,
4 input error.

The library default mesh (401 nodes) is tuned for fractional runs; the
CLI defaults to a finer mesh and a 1e-4 residual tolerance so classical
solves of the builtin problems succeed out of the box.  Tighten with
``--mesh``/``--tol`` as needed.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import Optional, Sequence

from .bvp import SolveConfig
from .fuzzy_core import GhCase, LevelGrid
from .pmp import Feasibility
from .problems import (
    ProblemFileError,
    build_spec,
    builtin_info,
    builtin_names,
    load_problem,
    run,
)
from .pmp import check_diameter_feasibility

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_SOLVE_FAILURE = 3
EXIT_INPUT_ERROR = 4


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 means "infeasible" here
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT_ERROR, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="fuzzy-pmp",
        description="Solve fuzzy fractional optimal-control problems by their "
        "necessary conditions (adjoint/stationary two-point systems per level).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="list builtin problems")

    check = sub.add_parser("check", help="run the width-based feasibility test only")
    check.add_argument("problem", help="builtin name or path to a problem file")
    check.add_argument("--levels", type=int, default=11, help="membership levels (default 11)")

    solve = sub.add_parser("solve", help="solve a problem across membership levels")
    solve.add_argument("problem", help="builtin name or path to a problem file")
    solve.add_argument("--beta", type=float, default=None, help="override the fractional order")
    solve.add_argument("--levels", type=int, default=11, help="membership levels (default 11)")
    solve.add_argument("--mesh", type=int, default=2001, help="time nodes (default 2001)")
    solve.add_argument("--tol", type=float, default=1e-4, help="residual tolerance (default 1e-4)")
    solve.add_argument(
        "--case",
        default=None,
        help="override case tags, e.g. 'case1,case2' or '1,2' (one per state)",
    )
    solve.add_argument("--out", default=".", help="output directory (default current)")
    solve.add_argument(
        "--format", choices=("csv", "svg", "both"), default="csv", help="emitted files"
    )
    return parser


def _parse_cases(text: str, n_states: int) -> tuple[GhCase, ...]:
    tags = [tag.strip().lower() for tag in text.split(",") if tag.strip()]
    cases = []
    for tag in tags:
        if tag in ("1", "case1"):
            cases.append(GhCase.CASE1)
        elif tag in ("2", "case2"):
            cases.append(GhCase.CASE2)
        else:
            raise ProblemFileError(f"unknown case tag {tag!r} (use case1/case2)")
    if len(cases) != n_states:
        raise ProblemFileError(f"case list has {len(cases)} tags for {n_states} states")
    return tuple(cases)


def _cmd_list() -> int:
    for name in builtin_names():
        print(f"{name:24s} {builtin_info(name)}")
    return EXIT_OK


def _cmd_check(args: argparse.Namespace) -> int:
    pf = load_problem(args.problem)
    spec = build_spec(pf, LevelGrid.uniform(args.levels))
    verdict = check_diameter_feasibility(spec)
    print(f"{pf.name}: {verdict.verdict.value}")
    if verdict.certificate:
        print(verdict.certificate)
    return EXIT_INFEASIBLE if verdict.verdict is Feasibility.INFEASIBLE else EXIT_OK


def _cmd_solve(args: argparse.Namespace) -> int:
    pf = load_problem(args.problem)
    if args.beta is not None:
        if not 0.0 < args.beta <= 1.0:
            raise ProblemFileError("beta must lie in (0, 1]")
        pf = replace(pf, beta=float(args.beta))
    if args.case is not None:
        pf = replace(pf, cases=_parse_cases(args.case, pf.n_states))
    formats = ("csv", "svg") if args.format == "both" else (args.format,)
    config = SolveConfig(mesh=args.mesh, tol=args.tol)
    result = run(
        pf,
        config=config,
        levels=LevelGrid.uniform(args.levels),
        out_dir=args.out,
        formats=formats,
    )
    if result.exit_code == EXIT_INFEASIBLE:
        print(f"{pf.name}: infeasible by certificate")
        print(result.verdict.certificate)
        return EXIT_INFEASIBLE
    bundle = result.bundle
    assert bundle is not None
    for sol in bundle.solutions:
        status = "ok" if sol.converged else "FAILED"
        res = sol.residuals
        print(
            f"r={sol.r:<4g} {status:6s} residuals: dynamics={res.dynamics:.2e} "
            f"boundary={res.boundary:.2e} stationary={res.stationary:.2e}"
            + (f"  ({sol.message})" if sol.message else "")
        )
    for path in result.files:
        print(f"wrote {path}")
    if result.exit_code == EXIT_SOLVE_FAILURE:
        print("one or more levels failed", file=sys.stderr)
    return result.exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "list":
            return _cmd_list()
        if args.command == "check":
            return _cmd_check(args)
        return _cmd_solve(args)
    except ProblemFileError as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except ValueError as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
