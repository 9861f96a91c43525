"""Minimal byte-stable SVG output: line charts and keypoint displacement plots."""

from __future__ import annotations

import math
from html import escape
from typing import Sequence

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f")


def _f(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= n:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 10))
        v += step
    return out


def line_chart(
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    title: str = "",
    x_label: str = "",
    y_label: str = "",
    log_x: bool = False,
    width: int = 640,
    height: int = 420,
) -> str:
    """One polyline per ``(label, xs, ys)``; ``log_x`` plots log10 of x."""
    left, right, top, bottom = 70, 160, 40, 60
    pw, ph = width - left - right, height - top - bottom
    xs_all = [float(x) for _, xs, _ in series for x in xs]
    ys_all = [float(y) for _, _, ys in series for y in ys]
    if not xs_all:
        raise ValueError("nothing to plot")
    if log_x and min(xs_all) <= 0:
        raise ValueError("log x-axis needs positive x values")
    tx = (lambda x: math.log10(x)) if log_x else (lambda x: x)
    x0, x1 = tx(min(xs_all)), tx(max(xs_all))
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    y0, y1 = min(ys_all), max(ys_all)
    pad = 0.05 * (y1 - y0) if y1 > y0 else 1.0
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return left + (tx(x) - x0) / (x1 - x0) * pw

    def py(y):
        return top + (y1 - y) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{_f(left + pw / 2)}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if log_x:
        xticks = [10.0**e for e in range(math.floor(x0), math.ceil(x1) + 1) if x0 <= e <= x1]
    else:
        xticks = _ticks(x0, x1)
    for t in xticks:
        X = px(t)
        out.append(f'<line x1="{_f(X)}" y1="{top + ph}" x2="{_f(X)}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_f(X)}" y="{top + ph + 18}" text-anchor="middle">{_f(t)}</text>')
    for t in _ticks(y0, y1):
        Y = py(t)
        out.append(f'<line x1="{left - 5}" y1="{_f(Y)}" x2="{left}" y2="{_f(Y)}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{_f(Y + 4)}" text-anchor="end">{_f(t)}</text>')
    out.append(
        f'<text x="{_f(left + pw / 2)}" y="{height - 15}" text-anchor="middle">'
        f'{escape(x_label)}{" (log scale)" if log_x else ""}</text>'
    )
    out.append(
        f'<text x="18" y="{_f(top + ph / 2)}" text-anchor="middle" '
        f'transform="rotate(-90 18 {_f(top + ph / 2)})">{escape(y_label)}</text>'
    )
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_f(px(float(x)))},{_f(py(float(y)))}" for x, y in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in zip(xs, ys):
            out.append(f'<circle cx="{_f(px(float(x)))}" cy="{_f(py(float(y)))}" r="2" fill="{color}"/>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def component_figure(
    neutral: np.ndarray, displacement: np.ndarray, mask: np.ndarray, scale: float = 1.0, title: str = "", size: int = 400
) -> str:
    """Neutral keypoints (red), neutral + scale * displacement (green), arrows between them.

    ``neutral`` and ``displacement`` are (68, 2) in standard-space units;
    arrow lengths are drawn in those units (the view box is the 200x200
    standard space plus a margin).
    """
    neutral = np.asarray(neutral, dtype=float)
    moved = neutral + scale * np.asarray(displacement, dtype=float)
    margin = 20
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="{-margin} {-margin} {200 + 2 * margin} {200 + 2 * margin}" font-family="sans-serif" font-size="6">',
        '<defs><marker id="head" viewBox="0 0 6 6" refX="5" refY="3" markerWidth="4" markerHeight="4" '
        'orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="#1f77b4"/></marker></defs>',
        f'<rect x="{-margin}" y="{-margin}" width="{200 + 2 * margin}" height="{200 + 2 * margin}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="100" y="{-margin + 8}" text-anchor="middle">{escape(title)}</text>')
    for k in np.flatnonzero(mask):
        (ax, ay), (bx, by) = neutral[k], moved[k]
        out.append(
            f'<line class="arrow" data-k="{k}" x1="{_f(ax)}" y1="{_f(ay)}" x2="{_f(bx)}" y2="{_f(by)}" '
            f'stroke="#1f77b4" stroke-width="0.6" marker-end="url(#head)"/>'
        )
    for k in np.flatnonzero(mask):
        out.append(f'<circle class="neutral" cx="{_f(neutral[k, 0])}" cy="{_f(neutral[k, 1])}" r="1.2" fill="red"/>')
        out.append(f'<circle class="expression" cx="{_f(moved[k, 0])}" cy="{_f(moved[k, 1])}" r="1.2" fill="green"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
