"""Tiny SVG line/scatter chart writer for offline figure data.

Only what the ``plotdata`` commands need: linear or log10 y axis, a few
series, tick labels and a legend.  No external plotting dependency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    markers_only: bool = False


@dataclass
class Chart:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)
    log_y: bool = False
    width: int = 640
    height: int = 420


def _nice_ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.floor(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        if v >= lo - 1e-9 * step:
            ticks.append(round(v, 12))
        v += step
    return ticks


def _finite(vals):
    return [v for v in vals if v is not None and math.isfinite(v)]


def render_svg(chart: Chart, comment: str = "") -> str:
    """Return the SVG document text.  ``comment`` is embedded verbatim
    (with ``--`` escaped) for provenance headers."""
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = chart.width - ml - mr, chart.height - mt - mb

    def ty(v):
        return math.log10(v) if chart.log_y else v

    xs = _finite([x for s in chart.series for x in s.x])
    ys = _finite([ty(y) for s in chart.series for y in s.y if not (chart.log_y and (y is None or y <= 0))])
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    if comment:
        out.append("<!-- " + comment.replace("--", "- -") + " -->")
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{chart.width}" height="{chart.height}" '
               f'font-family="sans-serif" font-size="11">')
    out.append(f'<rect x="0" y="0" width="{chart.width}" height="{chart.height}" fill="white"/>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="20" text-anchor="middle" font-size="13">{escape(chart.title)}</text>')
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for t in _nice_ticks(x0, x1):
        out.append(f'<line x1="{px(t):.1f}" y1="{mt + ph}" x2="{px(t):.1f}" y2="{mt + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px(t):.1f}" y="{mt + ph + 16}" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(y0, y1):
        label = f"{10 ** t:g}" if chart.log_y else f"{t:g}"
        out.append(f'<line x1="{ml - 4}" y1="{py(t):.1f}" x2="{ml}" y2="{py(t):.1f}" stroke="black"/>')
        out.append(f'<line x1="{ml}" y1="{py(t):.1f}" x2="{ml + pw}" y2="{py(t):.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{ml - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{escape(label)}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{chart.height - 10}" text-anchor="middle">{escape(chart.xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{escape(chart.ylabel)}</text>')
    for k, s in enumerate(chart.series):
        color = _COLORS[k % len(_COLORS)]
        pts = [(px(x), py(ty(y))) for x, y in zip(s.x, s.y)
               if x is not None and y is not None and math.isfinite(x) and math.isfinite(y)
               and not (chart.log_y and y <= 0)]
        if not s.markers_only and len(pts) > 1:
            d = " ".join(f"{a:.1f},{b:.1f}" for a, b in pts)
            out.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for a, b in pts:
            out.append(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="3" fill="{color}"/>')
        ly = mt + 12 + 16 * k
        out.append(f'<circle cx="{ml + pw + 14}" cy="{ly - 4}" r="4" fill="{color}"/>')
        out.append(f'<text x="{ml + pw + 24}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(chart: Chart, path: str | Path, comment: str = "") -> None:
    Path(path).write_text(render_svg(chart, comment))
