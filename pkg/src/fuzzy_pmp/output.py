"""CSV and SVG emission for solution bundles.

Both writers are deterministic: identical bundles produce byte-identical
files.  CSV rows carry one (time node, level, state) combination each,
sorted by (state, level, time), floats rendered with 9 significant
digits, LF line endings, UTF-8.  SVG output is one file per plotted
quantity (the control and each state), drawing the lower and upper
endpoint curves for every solved level; the core level is solid, the
support bounds are dashed (upper) and dotted (lower).
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import numpy as np

from .bvp import LevelSolution, SolutionBundle

__all__ = ["emit_csv", "emit_svg"]

CSV_HEADER = "t,r,state,low,up,u_low,u_up,p1,p2"


def _fmt(value: float) -> str:
    return format(float(value), ".9g")


def emit_csv(bundle: SolutionBundle, path: "str | Path") -> Path:
    """Write the solved levels of a bundle as one CSV file."""
    solved = [sol for sol in bundle.solutions if sol.converged]
    if not solved:
        raise ValueError("bundle has no solved level to emit")
    path = Path(path)
    t = solved[0].time.as_array()
    lines = [CSV_HEADER]
    n_states = solved[0].x_lo.shape[0]
    for i in range(n_states):
        label = f"x{i + 1}"
        for sol in solved:
            r_txt = _fmt(sol.r)
            for k in range(len(t)):
                lines.append(
                    ",".join(
                        (
                            _fmt(t[k]),
                            r_txt,
                            label,
                            _fmt(sol.x_lo[i][k]),
                            _fmt(sol.x_up[i][k]),
                            _fmt(sol.u_lo[k]),
                            _fmt(sol.u_up[k]),
                            _fmt(sol.p1[i][k]),
                            _fmt(sol.p2[i][k]),
                        )
                    )
                )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

_WIDTH = 640.0
_HEIGHT = 420.0
_MARGIN_L = 58.0
_MARGIN_R = 18.0
_MARGIN_T = 34.0
_MARGIN_B = 44.0
_MAX_POINTS = 512


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _polyline(xs: Iterable[float], ys: Iterable[float], style: str) -> str:
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" {style} points="{points}"/>'


def _level_style(r: float, which: str) -> str:
    if r >= 1.0:
        return 'stroke="#202020" stroke-width="1.6"'
    if r <= 0.0:
        dash = "6,4" if which == "up" else "2,3"
        return f'stroke="#c03030" stroke-width="1.2" stroke-dasharray="{dash}"'
    return 'stroke="#9090b8" stroke-width="0.8"'


def _render_chart(
    title: str, t: np.ndarray, curves: list[tuple[float, str, np.ndarray]]
) -> str:
    values = np.concatenate([c[2] for c in curves])
    v_lo = float(np.min(values))
    v_hi = float(np.max(values))
    if v_hi - v_lo < 1e-12:
        pad = max(1e-6, abs(v_hi) * 0.1 + 0.1)
        v_lo -= pad
        v_hi += pad
    else:
        pad = 0.05 * (v_hi - v_lo)
        v_lo -= pad
        v_hi += pad
    t_lo, t_hi = float(t[0]), float(t[-1])
    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def sx(tv: np.ndarray) -> np.ndarray:
        return _MARGIN_L + (tv - t_lo) / (t_hi - t_lo) * plot_w

    def sy(v: np.ndarray) -> np.ndarray:
        return _MARGIN_T + (v_hi - v) / (v_hi - v_lo) * plot_h

    stride = max(1, (len(t) - 1) // _MAX_POINTS)
    idx = list(range(0, len(t), stride))
    if idx[-1] != len(t) - 1:
        idx.append(len(t) - 1)
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH:.0f}" '
        f'height="{_HEIGHT:.0f}" viewBox="0 0 {_WIDTH:.0f} {_HEIGHT:.0f}">',
        f'<rect width="{_WIDTH:.0f}" height="{_HEIGHT:.0f}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    axis_style = 'stroke="#404040" stroke-width="1"'
    x0, y0 = _MARGIN_L, _HEIGHT - _MARGIN_B
    parts.append(f'<line x1="{x0:.1f}" y1="{_MARGIN_T:.1f}" x2="{x0:.1f}" y2="{y0:.1f}" {axis_style}/>')
    parts.append(
        f'<line x1="{x0:.1f}" y1="{y0:.1f}" x2="{_WIDTH - _MARGIN_R:.1f}" y2="{y0:.1f}" {axis_style}/>'
    )
    for tick in _ticks(t_lo, t_hi):
        px = float(sx(np.array([tick]))[0])
        parts.append(f'<line x1="{px:.1f}" y1="{y0:.1f}" x2="{px:.1f}" y2="{y0 + 4:.1f}" {axis_style}/>')
        parts.append(
            f'<text x="{px:.1f}" y="{y0 + 16:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{tick:.3g}</text>'
        )
    for tick in _ticks(v_lo, v_hi):
        py = float(sy(np.array([tick]))[0])
        parts.append(f'<line x1="{x0 - 4:.1f}" y1="{py:.1f}" x2="{x0:.1f}" y2="{py:.1f}" {axis_style}/>')
        parts.append(
            f'<text x="{x0 - 7:.1f}" y="{py + 3:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{tick:.3g}</text>'
        )
    for r, which, values in curves:
        parts.append(_polyline(sx(t[idx]), sy(values[idx]), _level_style(r, which)))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_svg(bundle: SolutionBundle, out_dir: "str | Path", base_name: str) -> list[Path]:
    """One SVG per plotted quantity: the control and every state."""
    solved = [sol for sol in bundle.solutions if sol.converged]
    if not solved:
        raise ValueError("bundle has no solved level to plot")
    out_dir = Path(out_dir)
    t = solved[0].time.as_array()
    n_states = solved[0].x_lo.shape[0]
    written: list[Path] = []

    def curves_for(extract_lo, extract_up) -> list[tuple[float, str, np.ndarray]]:
        curves = []
        for sol in solved:
            curves.append((sol.r, "low", np.asarray(extract_lo(sol))))
            curves.append((sol.r, "up", np.asarray(extract_up(sol))))
        return curves

    quantities: list[tuple[str, list[tuple[float, str, np.ndarray]]]] = [
        ("u", curves_for(lambda s: s.u_lo, lambda s: s.u_up))
    ]
    for i in range(n_states):
        quantities.append(
            (
                f"x{i + 1}",
                curves_for(lambda s, i=i: s.x_lo[i], lambda s, i=i: s.x_up[i]),
            )
        )
    for label, curves in quantities:
        path = out_dir / f"{base_name}_{label}.svg"
        path.write_text(
            _render_chart(f"{base_name}: {label}", t, curves), encoding="utf-8", newline="\n"
        )
        written.append(path)
    return written
