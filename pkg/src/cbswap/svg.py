"""Bare-bones SVG line charts for sweep summaries."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape


def line_chart(xs, ys, path, title: str = "", xlabel: str = "", ylabel: str = "",
               lows=None, highs=None, width: int = 640, height: int = 400) -> None:
    """Write one polyline with optional error bars; NaN points are skipped."""
    pts = [(float(x), float(y)) for x, y in zip(xs, ys) if math.isfinite(float(y))]
    pad_l, pad_r, pad_t, pad_b = 70, 20, 40, 50
    all_y = [y for _, y in pts]
    if lows is not None:
        all_y += [float(v) for v in lows if math.isfinite(float(v))]
    if highs is not None:
        all_y += [float(v) for v in highs if math.isfinite(float(v))]
    x_lo, x_hi = (min(x for x, _ in pts), max(x for x, _ in pts)) if pts else (0.0, 1.0)
    y_lo, y_hi = (min(all_y + [0.0]), max(all_y)) if all_y else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    y_hi *= 1.05

    def sx(x):
        return pad_l + (x - x_lo) / (x_hi - x_lo) * (width - pad_l - pad_r)

    def sy(y):
        return height - pad_b - (y - y_lo) / (y_hi - y_lo) * (height - pad_t - pad_b)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{pad_l}" y1="{height - pad_b}" x2="{width - pad_r}" y2="{height - pad_b}" stroke="black"/>',
           f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{height - pad_b}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="15" y="{height / 2}" text-anchor="middle" '
           f'transform="rotate(-90 15 {height / 2})">{escape(ylabel)}</text>']
    for k in range(5):
        yv = y_lo + k * (y_hi - y_lo) / 4
        out.append(f'<text x="{pad_l - 5}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    for x, _ in pts:
        out.append(f'<text x="{sx(x):.1f}" y="{height - pad_b + 16}" text-anchor="middle">{x:g}</text>')
    if lows is not None and highs is not None:
        for x, lo, hi in zip(xs, lows, highs):
            if math.isfinite(float(lo)) and math.isfinite(float(hi)):
                out.append(f'<line x1="{sx(float(x)):.1f}" y1="{sy(float(lo)):.1f}" '
                           f'x2="{sx(float(x)):.1f}" y2="{sy(float(hi)):.1f}" stroke="gray"/>')
    if pts:
        poly = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in pts)
        out.append(f'<polyline points="{poly}" fill="none" stroke="steelblue" stroke-width="2"/>')
        out += [f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="steelblue"/>' for x, y in pts]
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
