"""Static SVG charts written by hand, no plotting dependency.

Every plotted point carries ``data-series``, ``data-x`` and ``data-y``
attributes so the exact values can be recovered by parsing the file.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .metrics import (continual_accuracy, final_accuracy, forgetting, forward_transfer, read_baseline_csv,
                      read_matrix_csv)

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 50, 60


def _esc(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;"))


def _frame(title: str, y_lo: float, y_hi: float, y_label: str) -> list[str]:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{W / 2:.1f}" y="28" text-anchor="middle" font-size="16" font-family="sans-serif">{_esc(title)}</text>',
    ]
    for i in range(6):
        v = y_lo + (y_hi - y_lo) * i / 5
        y = _ypx(v, y_lo, y_hi)
        out.append(f'<line x1="{LEFT}" y1="{y:.2f}" x2="{W - RIGHT}" y2="{y:.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end" font-size="11" font-family="sans-serif">{v:.2f}</text>')
    out.append(f'<line x1="{LEFT}" y1="{H - BOTTOM}" x2="{W - RIGHT}" y2="{H - BOTTOM}" stroke="#000000"/>')
    out.append(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{H - BOTTOM}" stroke="#000000"/>')
    out.append(f'<text x="18" y="{(TOP + H - BOTTOM) / 2:.1f}" font-size="12" font-family="sans-serif" '
               f'transform="rotate(-90 18 {(TOP + H - BOTTOM) / 2:.1f})" text-anchor="middle">{_esc(y_label)}</text>')
    return out


def _ypx(v: float, lo: float, hi: float) -> float:
    return (H - BOTTOM) - (v - lo) / (hi - lo) * (H - BOTTOM - TOP)


def _xpx(i: int, n: int) -> float:
    if n == 1:
        return LEFT + (W - RIGHT - LEFT) / 2
    return LEFT + i * (W - RIGHT - LEFT) / (n - 1)


def line_chart(title: str, x_labels: Sequence[str], series: Sequence[tuple[str, Sequence[float | None]]],
               y_label: str = "accuracy", y_range: tuple[float, float] = (0.0, 1.0)) -> str:
    """Line chart; ``None`` entries are skipped (a task not yet trained)."""
    lo, hi = y_range
    out = _frame(title, lo, hi, y_label)
    n = len(x_labels)
    for i, lab in enumerate(x_labels):
        out.append(f'<text x="{_xpx(i, n):.2f}" y="{H - BOTTOM + 18}" text-anchor="middle" font-size="11" '
                   f'font-family="sans-serif">{_esc(lab)}</text>')
    for s_idx, (name, ys) in enumerate(series):
        color = COLORS[s_idx % len(COLORS)]
        pts = [(i, float(v)) for i, v in enumerate(ys) if v is not None]
        out.append(f'<g class="series" data-name="{_esc(name)}">')
        if len(pts) > 1:
            path = " ".join(f"{_xpx(i, n):.2f},{_ypx(v, lo, hi):.2f}" for i, v in pts)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{path}"/>')
        for i, v in pts:
            out.append(f'<circle cx="{_xpx(i, n):.2f}" cy="{_ypx(v, lo, hi):.2f}" r="3.5" fill="{color}" '
                       f'data-series="{_esc(name)}" data-x="{_esc(x_labels[i])}" data-y="{v!r}"/>')
        out.append("</g>")
        ly = TOP + 16 * s_idx
        out.append(f'<rect x="{W - RIGHT + 14}" y="{ly - 9}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{W - RIGHT + 30}" y="{ly}" font-size="11" font-family="sans-serif">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bar_chart(title: str, labels: Sequence[str], values: Sequence[float], y_label: str = "value") -> str:
    vals = [float(v) for v in values]
    lo = min(0.0, min(vals, default=0.0))
    hi = max(1.0, max(vals, default=1.0))
    out = _frame(title, lo, hi, y_label)
    n = max(len(vals), 1)
    slot = (W - RIGHT - LEFT) / n
    zero = _ypx(0.0, lo, hi)
    out.append('<g class="series" data-name="bars">')
    for i, (lab, v) in enumerate(zip(labels, vals)):
        x = LEFT + slot * i + slot * 0.15
        y = min(zero, _ypx(v, lo, hi))
        h = abs(_ypx(v, lo, hi) - zero)
        out.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{slot * 0.7:.2f}" height="{h:.2f}" '
                   f'fill="{COLORS[i % len(COLORS)]}" data-series="bars" data-x="{_esc(lab)}" data-y="{v!r}"/>')
        out.append(f'<text x="{x + slot * 0.35:.2f}" y="{H - BOTTOM + 18}" text-anchor="middle" font-size="11" '
                   f'font-family="sans-serif">{_esc(lab)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def grouped_bar_chart(title: str, groups: Sequence[str], metric_names: Sequence[str],
                      values: Sequence[Sequence[float]]) -> str:
    """One group of bars per entry in ``groups`` (e.g. lambda schedules)."""
    flat = [float(v) for row in values for v in row]
    lo = min(0.0, min(flat, default=0.0))
    hi = max(1.0, max(flat, default=1.0))
    out = _frame(title, lo, hi, "value")
    n = max(len(groups), 1)
    slot = (W - RIGHT - LEFT) / n
    bw = slot * 0.8 / max(len(metric_names), 1)
    zero = _ypx(0.0, lo, hi)
    for m_idx, name in enumerate(metric_names):
        color = COLORS[m_idx % len(COLORS)]
        out.append(f'<g class="series" data-name="{_esc(name)}">')
        for g_idx, group in enumerate(groups):
            v = float(values[g_idx][m_idx])
            x = LEFT + slot * g_idx + slot * 0.1 + bw * m_idx
            y = min(zero, _ypx(v, lo, hi))
            out.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{bw:.2f}" height="{abs(_ypx(v, lo, hi) - zero):.2f}" '
                       f'fill="{color}" data-series="{_esc(name)}" data-x="{_esc(group)}" data-y="{v!r}"/>')
        out.append("</g>")
        ly = TOP + 16 * m_idx
        out.append(f'<rect x="{W - RIGHT + 14}" y="{ly - 9}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{W - RIGHT + 30}" y="{ly}" font-size="11" font-family="sans-serif">{_esc(name)}</text>')
    for g_idx, group in enumerate(groups):
        out.append(f'<text x="{LEFT + slot * (g_idx + 0.5):.2f}" y="{H - BOTTOM + 18}" text-anchor="middle" '
                   f'font-size="10" font-family="sans-serif">{_esc(group)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def matrix_charts(A: np.ndarray, b: Sequence[float] | None = None) -> dict[str, str]:
    """The three per-run charts: average over seen tasks, per-task breakdown, summary bars."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    T = A.shape[0]
    steps = [f"after T{i + 1}" for i in range(T)]
    avg = [float(A[i, :i + 1].mean()) for i in range(T)]
    charts = {
        "average_accuracy.svg": line_chart("Average accuracy over seen tasks", steps, [("average", avg)]),
        "per_task_accuracy.svg": line_chart(
            "Per-task accuracy", steps,
            [(f"T{j + 1}", [float(A[i, j]) if i >= j else None for i in range(T)]) for j in range(A.shape[1])]),
    }
    names = ["FA", "CA", "F", "FT"]
    if T > 1:
        base = np.zeros(A.shape[1]) if b is None else np.asarray(b, dtype=np.float64)
        vals = [final_accuracy(A), continual_accuracy(A), forgetting(A), forward_transfer(A, base)]
    else:
        vals = [final_accuracy(A), continual_accuracy(A), 0.0, 0.0]
    charts["summary_metrics.svg"] = bar_chart("Summary metrics", names, vals)
    return charts


def emit_plots(run_dir: str | Path, baseline: Sequence[float] | None = None) -> list[Path]:
    run_dir = Path(run_dir)
    matrix = run_dir / "matrix.csv"
    if not matrix.exists():
        raise FileNotFoundError(f"no matrix.csv in {run_dir}")
    A = read_matrix_csv(matrix)
    if baseline is None and (run_dir / "baseline.csv").exists():
        baseline = read_baseline_csv(run_dir / "baseline.csv")
    out_dir = run_dir / "plots"
    out_dir.mkdir(exist_ok=True)
    paths = []
    for name, svg in matrix_charts(A, baseline).items():
        p = out_dir / name
        p.write_text(svg)
        paths.append(p)
    return paths
