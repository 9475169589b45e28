"""Hand-built SVG renders: boxplots, heatmaps, bar charts, activation grids.

No plotting dependency: every figure is assembled from explicit SVG elements
with fixed-precision coordinates, so identical inputs produce identical
bytes. All output is well-formed standalone SVG.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .analysis import BoxplotStats, CorrelationMap
from .model import Cam

FONT = "font-family=\"Helvetica, Arial, sans-serif\""

# largest per-axis pixel count drawn for one activation map; bigger maps are
# strided down to fit
MAX_GRID_PIXELS = 64


def _fmt(value: float) -> str:
    text = f"{value:.2f}"
    return "0.00" if text == "-0.00" else text


def _lerp_color(stops: Sequence[tuple[float, tuple[int, int, int]]], t: float) -> str:
    t = min(1.0, max(0.0, t))
    for (t0, c0), (t1, c1) in zip(stops, stops[1:]):
        if t <= t1:
            f = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            rgb = tuple(round(a + f * (b - a)) for a, b in zip(c0, c1))
            return f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}"
    last = stops[-1][1]
    return f"#{last[0]:02x}{last[1]:02x}{last[2]:02x}"


_DIVERGING = ((0.0, (33, 102, 172)), (0.5, (247, 247, 247)), (1.0, (178, 24, 43)))
_HEAT = (
    (0.0, (0, 0, 4)),
    (0.25, (87, 16, 110)),
    (0.5, (188, 55, 84)),
    (0.75, (249, 142, 9)),
    (1.0, (252, 255, 164)),
)


def diverging_color(value: float) -> str:
    """Blue-white-red color for a correlation in [-1, 1]."""
    return _lerp_color(_DIVERGING, (value + 1.0) / 2.0)


def heat_color(value: float) -> str:
    """Dark-to-bright heat color for an activation in [0, 1]."""
    return _lerp_color(_HEAT, value)


def _svg(width: float, height: float, body: list[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">'
    )
    background = f'<rect x="0" y="0" width="{_fmt(width)}" height="{_fmt(height)}" fill="#ffffff"/>'
    caption = (
        f'<text x="{_fmt(width / 2)}" y="18" text-anchor="middle" font-size="14" {FONT}>'
        f"{escape(title)}</text>"
    )
    return "\n".join([head, background, caption, *body, "</svg>"]) + "\n"


def _ticks(low: float, high: float, count: int = 5) -> list[float]:
    if high == low:
        return [low]
    return [low + (high - low) * i / (count - 1) for i in range(count)]


def render_boxplot(stats: Mapping[str, BoxplotStats], title: str) -> str:
    """One Tukey box per entry, keyed by group label, in mapping order."""
    if not stats:
        raise ValueError("boxplot render needs at least one group")
    groups = list(stats.items())
    lows = []
    highs = []
    for _, s in groups:
        lows.append(min([s.whisker_low, *s.outliers]))
        highs.append(max([s.whisker_high, *s.outliers]))
    low, high = min(lows), max(highs)
    if high == low:
        low -= 0.5
        high += 0.5
    pad = 0.05 * (high - low)
    low -= pad
    high += pad

    box_w, gap, left, top, plot_h = 44.0, 26.0, 70.0, 40.0, 260.0
    width = left + len(groups) * (box_w + gap) + 30.0
    height = top + plot_h + 70.0

    def y(value: float) -> float:
        return top + plot_h * (1.0 - (value - low) / (high - low))

    body: list[str] = []
    body.append(
        f'<line x1="{_fmt(left - 10)}" y1="{_fmt(top)}" x2="{_fmt(left - 10)}" '
        f'y2="{_fmt(top + plot_h)}" stroke="#333333" stroke-width="1"/>'
    )
    for tick in _ticks(low, high):
        ty = y(tick)
        body.append(
            f'<line x1="{_fmt(left - 14)}" y1="{_fmt(ty)}" x2="{_fmt(left - 10)}" '
            f'y2="{_fmt(ty)}" stroke="#333333" stroke-width="1"/>'
        )
        body.append(
            f'<text x="{_fmt(left - 18)}" y="{_fmt(ty + 3)}" text-anchor="end" '
            f'font-size="10" {FONT}>{escape(f"{tick:.3g}")}</text>'
        )
    for index, (label, s) in enumerate(groups):
        cx = left + index * (box_w + gap) + box_w / 2.0
        x0 = cx - box_w / 2.0
        body.append(
            f'<line x1="{_fmt(cx)}" y1="{_fmt(y(s.whisker_low))}" x2="{_fmt(cx)}" '
            f'y2="{_fmt(y(s.q1))}" stroke="#333333" stroke-width="1"/>'
        )
        body.append(
            f'<line x1="{_fmt(cx)}" y1="{_fmt(y(s.q3))}" x2="{_fmt(cx)}" '
            f'y2="{_fmt(y(s.whisker_high))}" stroke="#333333" stroke-width="1"/>'
        )
        for value in (s.whisker_low, s.whisker_high):
            body.append(
                f'<line x1="{_fmt(cx - 10)}" y1="{_fmt(y(value))}" x2="{_fmt(cx + 10)}" '
                f'y2="{_fmt(y(value))}" stroke="#333333" stroke-width="1"/>'
            )
        body.append(
            f'<rect x="{_fmt(x0)}" y="{_fmt(y(s.q3))}" width="{_fmt(box_w)}" '
            f'height="{_fmt(max(y(s.q1) - y(s.q3), 0.5))}" fill="#9ecae1" '
            f'stroke="#333333" stroke-width="1"/>'
        )
        body.append(
            f'<line x1="{_fmt(x0)}" y1="{_fmt(y(s.median))}" x2="{_fmt(x0 + box_w)}" '
            f'y2="{_fmt(y(s.median))}" stroke="#08306b" stroke-width="2"/>'
        )
        for outlier in s.outliers:
            body.append(
                f'<circle cx="{_fmt(cx)}" cy="{_fmt(y(outlier))}" r="2.5" fill="none" '
                f'stroke="#d62728" stroke-width="1"/>'
            )
        body.append(
            f'<text x="{_fmt(cx)}" y="{_fmt(top + plot_h + 16)}" text-anchor="middle" '
            f'font-size="10" {FONT} transform={quoteattr(f"rotate(30 {cx:.2f} {top + plot_h + 16:.2f})")}>'
            f"{escape(label)}</text>"
        )
    return _svg(width, height, body, title)


def render_heatmap(cmap: CorrelationMap, title: str | None = None) -> str:
    """Annotated correlation matrix on a fixed diverging scale over [-1, 1]."""
    names = cmap.augmentations
    n = len(names)
    cell, left, top = 58.0, 130.0, 60.0
    width = left + n * cell + 20.0
    height = top + n * cell + 40.0
    body: list[str] = []
    for j, name in enumerate(names):
        x = left + j * cell + cell / 2.0
        body.append(
            f'<text x="{_fmt(x)}" y="{_fmt(top - 8)}" text-anchor="start" font-size="10" {FONT} '
            f'transform={quoteattr(f"rotate(-35 {x:.2f} {top - 8:.2f})")}>{escape(name)}</text>'
        )
    for i, name in enumerate(names):
        body.append(
            f'<text x="{_fmt(left - 6)}" y="{_fmt(top + i * cell + cell / 2.0 + 3)}" '
            f'text-anchor="end" font-size="10" {FONT}>{escape(name)}</text>'
        )
        for j in range(n):
            value = float(cmap.matrix[i, j])
            x0 = left + j * cell
            y0 = top + i * cell
            if math.isnan(value):
                fill = "#bbbbbb"
                label = "n/a"
                text_color = "#333333"
            else:
                fill = diverging_color(value)
                label = _fmt(value)
                text_color = "#111111" if abs(value) < 0.6 else "#f7f7f7"
            body.append(
                f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(cell)}" height="{_fmt(cell)}" '
                f'fill="{fill}" stroke="#ffffff" stroke-width="1"/>'
            )
            body.append(
                f'<text x="{_fmt(x0 + cell / 2.0)}" y="{_fmt(y0 + cell / 2.0 + 4)}" '
                f'text-anchor="middle" font-size="11" fill="{text_color}" {FONT}>{label}</text>'
            )
    caption = title if title is not None else f"{cmap.metric.key} ({cmap.method})"
    return _svg(width, height, body, caption)


def render_bars(values: Mapping[str, float], title: str, y_max: float = 1.0) -> str:
    """Simple labeled bar chart; values are clipped to [0, y_max] for drawing."""
    if not values:
        raise ValueError("bar render needs at least one value")
    items = list(values.items())
    bar_w, gap, left, top, plot_h = 46.0, 24.0, 60.0, 40.0, 220.0
    width = left + len(items) * (bar_w + gap) + 30.0
    height = top + plot_h + 70.0
    body: list[str] = []
    body.append(
        f'<line x1="{_fmt(left - 10)}" y1="{_fmt(top)}" x2="{_fmt(left - 10)}" '
        f'y2="{_fmt(top + plot_h)}" stroke="#333333" stroke-width="1"/>'
    )
    for tick in _ticks(0.0, y_max):
        ty = top + plot_h * (1.0 - tick / y_max)
        body.append(
            f'<text x="{_fmt(left - 18)}" y="{_fmt(ty + 3)}" text-anchor="end" font-size="10" '
            f"{FONT}>{escape(f'{tick:.2g}')}</text>"
        )
    for index, (label, value) in enumerate(items):
        clipped = min(max(value, 0.0), y_max)
        h = plot_h * clipped / y_max
        x0 = left + index * (bar_w + gap)
        y0 = top + plot_h - h
        body.append(
            f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(bar_w)}" height="{_fmt(h)}" '
            f'fill="#74a9cf" stroke="#333333" stroke-width="1"/>'
        )
        body.append(
            f'<text x="{_fmt(x0 + bar_w / 2.0)}" y="{_fmt(y0 - 5)}" text-anchor="middle" '
            f'font-size="10" {FONT}>{escape(f"{value:.3f}")}</text>'
        )
        body.append(
            f'<text x="{_fmt(x0 + bar_w / 2.0)}" y="{_fmt(top + plot_h + 16)}" '
            f'text-anchor="middle" font-size="10" {FONT} '
            f'transform={quoteattr(f"rotate(30 {x0 + bar_w / 2.0:.2f} {top + plot_h + 16:.2f})")}>'
            f"{escape(label)}</text>"
        )
    return _svg(width, height, body, title)


def render_cam_grid(
    cells: Sequence[tuple[str, Cam, str]], title: str, columns: int = 5
) -> str:
    """Grid of activation maps drawn pixel by pixel.

    Each cell is (label, map, annotation). Maps larger than
    ``MAX_GRID_PIXELS`` per axis are strided down for drawing.
    """
    if not cells:
        raise ValueError("grid render needs at least one cell")
    cell_px, pad, top = 120.0, 16.0, 36.0
    columns = max(1, min(columns, len(cells)))
    rows = math.ceil(len(cells) / columns)
    width = pad + columns * (cell_px + pad)
    height = top + rows * (cell_px + pad + 30.0)
    body: list[str] = []
    for index, (label, cam, annotation) in enumerate(cells):
        row, col = divmod(index, columns)
        x0 = pad + col * (cell_px + pad)
        y0 = top + row * (cell_px + pad + 30.0)
        grid = cam.grid()
        stride_y = max(1, math.ceil(cam.height / MAX_GRID_PIXELS))
        stride_x = max(1, math.ceil(cam.width / MAX_GRID_PIXELS))
        view = grid[::stride_y, ::stride_x]
        h, w = view.shape
        px = cell_px / max(h, w)
        for i in range(h):
            for j in range(w):
                body.append(
                    f'<rect x="{_fmt(x0 + j * px)}" y="{_fmt(y0 + i * px)}" '
                    f'width="{_fmt(px)}" height="{_fmt(px)}" '
                    f'fill="{heat_color(float(view[i, j]))}"/>'
                )
        body.append(
            f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(w * px)}" height="{_fmt(h * px)}" '
            f'fill="none" stroke="#333333" stroke-width="1"/>'
        )
        body.append(
            f'<text x="{_fmt(x0 + cell_px / 2.0)}" y="{_fmt(y0 + cell_px + 14)}" '
            f'text-anchor="middle" font-size="10" {FONT}>{escape(label)}</text>'
        )
        if annotation:
            body.append(
                f'<text x="{_fmt(x0 + cell_px / 2.0)}" y="{_fmt(y0 + cell_px + 26)}" '
                f'text-anchor="middle" font-size="9" fill="#555555" {FONT}>{escape(annotation)}</text>'
            )
    return _svg(width, height, body, title)
