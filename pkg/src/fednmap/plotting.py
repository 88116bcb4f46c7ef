"""Dependency-free SVG line charts.

Output is a pure function of the input numbers: coordinates are written with
fixed precision and series are drawn in the order given, so equal inputs give
byte-identical files.
"""

from __future__ import annotations

import math
from html import escape
from typing import Mapping, Sequence

__all__ = ["line_chart", "small_multiples"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
DASHES = ("", "6,3", "2,2", "8,2,2,2")

Series = Mapping[str, tuple[Sequence[float], Sequence[float]]]


def _finite_points(xs, ys, logy):
    pts = []
    for x, y in zip(xs, ys):
        if y is None or not math.isfinite(x) or not math.isfinite(y):
            continue
        if logy and y <= 0:
            continue
        pts.append((float(x), math.log10(y) if logy else float(y)))
    return pts


def _ticks(lo, hi, logy):
    if logy:
        return [float(k) for k in range(math.floor(lo), math.ceil(hi) + 1)]
    span = hi - lo
    step = 10 ** math.floor(math.log10(span)) if span > 0 else 1.0
    if span / step < 3:
        step /= 2
    start = math.floor(lo / step) * step
    return [start + k * step for k in range(int(round((hi - start) / step)) + 2)]


def _tick_label(v, logy):
    return f"1e{int(v)}" if logy else f"{v:.3g}"


def _panel(series: Series, x0, y0, w, h, title, xlabel, ylabel, logy, legend=True):
    out = []
    all_pts = {name: _finite_points(xs, ys, logy) for name, (xs, ys) in series.items()}
    flat = [p for pts in all_pts.values() for p in pts]
    left, right, top, bottom = 60, 10, 24, 34
    pw, ph = w - left - right, h - top - bottom
    out.append(f'<text x="{x0 + w / 2:.2f}" y="{y0 + 16:.2f}" text-anchor="middle" '
               f'font-size="12">{escape(title)}</text>')
    out.append(f'<rect x="{x0 + left:.2f}" y="{y0 + top:.2f}" width="{pw:.2f}" height="{ph:.2f}" '
               'fill="none" stroke="#444"/>')
    if not flat:
        out.append(f'<text x="{x0 + w / 2:.2f}" y="{y0 + top + ph / 2:.2f}" text-anchor="middle" '
                   'font-size="11">no data</text>')
        return out
    xmin, xmax = min(p[0] for p in flat), max(p[0] for p in flat)
    ymin, ymax = min(p[1] for p in flat), max(p[1] for p in flat)
    if xmax == xmin:
        xmax = xmin + 1.0
    if ymax == ymin:
        ymin, ymax = ymin - 0.5, ymax + 0.5
    ticks = [t for t in _ticks(ymin, ymax, logy) if ymin <= t <= ymax] or [ymin, ymax]

    def sx(x):
        return x0 + left + (x - xmin) / (xmax - xmin) * pw

    def sy(y):
        return y0 + top + (ymax - y) / (ymax - ymin) * ph

    for t in ticks:
        out.append(f'<line x1="{x0 + left:.2f}" y1="{sy(t):.2f}" x2="{x0 + left + pw:.2f}" '
                   f'y2="{sy(t):.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{x0 + left - 4:.2f}" y="{sy(t) + 4:.2f}" text-anchor="end" '
                   f'font-size="10">{_tick_label(t, logy)}</text>')
    for v in (xmin, xmax):
        out.append(f'<text x="{sx(v):.2f}" y="{y0 + top + ph + 14:.2f}" text-anchor="middle" '
                   f'font-size="10">{v:.6g}</text>')
    out.append(f'<text x="{x0 + left + pw / 2:.2f}" y="{y0 + h - 4:.2f}" text-anchor="middle" '
               f'font-size="11">{escape(xlabel)}</text>')
    out.append(f'<text x="{x0 + 12:.2f}" y="{y0 + top + ph / 2:.2f}" text-anchor="middle" '
               f'font-size="11" transform="rotate(-90 {x0 + 12:.2f} {y0 + top + ph / 2:.2f})">'
               f'{escape(ylabel)}</text>')
    for k, (name, pts) in enumerate(all_pts.items()):
        if not pts:
            continue
        color, dash = PALETTE[k % len(PALETTE)], DASHES[(k // len(PALETTE) + k) % len(DASHES)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"{dash_attr}/>')
        if legend:
            ly = y0 + top + 12 + 14 * k
            out.append(f'<line x1="{x0 + left + pw - 90:.2f}" y1="{ly - 4:.2f}" '
                       f'x2="{x0 + left + pw - 74:.2f}" y2="{ly - 4:.2f}" stroke="{color}" '
                       f'stroke-width="1.5"{dash_attr}/>')
            out.append(f'<text x="{x0 + left + pw - 70:.2f}" y="{ly:.2f}" font-size="10">'
                       f'{escape(name)}</text>')
    return out


def _document(width, height, body):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def line_chart(panels: Sequence[tuple[str, str, Series]], xlabel: str = "round",
               logy: bool = True, width: int = 520, height: int = 300) -> str:
    """Stack one chart per ``(title, ylabel, series)`` vertically; series overlay within a chart."""
    body = []
    for k, (title, ylabel, series) in enumerate(panels):
        body += _panel(series, 0, k * height, width, height, title, xlabel, ylabel, logy)
    return _document(width, height * len(panels), body)


def small_multiples(panels: Sequence[tuple[str, Series]], cols: int, ylabel: str,
                    xlabel: str = "round", logy: bool = True, width: int = 260,
                    height: int = 200) -> str:
    """Grid of small charts, row-major in the given order."""
    cols = max(1, int(cols))
    rows = max(1, math.ceil(len(panels) / cols))
    body = []
    for k, (title, series) in enumerate(panels):
        r, c = divmod(k, cols)
        body += _panel(series, c * width, r * height, width, height, title, xlabel, ylabel, logy,
                       legend=len(series) > 1)
    return _document(width * cols, height * rows, body)
