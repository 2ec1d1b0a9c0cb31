"""Minimal SVG rendering for line charts and grid heatmaps.

Output is plain text with fixed float formatting so identical data give
byte-identical files.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _f(x: float) -> str:
    return f"{x:.2f}"


def line_chart(series: dict[str, tuple], title: str = "", xlabel: str = "", ylabel: str = "",
               width: int = 480, height: int = 320) -> str:
    """``series`` maps a label to ``(xs, ys)``; non-finite points are skipped."""
    pad_l, pad_r, pad_t, pad_b = 60, 120, 30, 40
    pts = [(float(x), float(y)) for xs, ys in series.values() for x, y in zip(xs, ys) if np.isfinite(y)]
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(x):
        return pad_l + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return pad_t + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{pad_l + pw / 2:.0f}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{pad_t + ph / 2:.0f}" text-anchor="middle" transform="rotate(-90 14 {pad_t + ph / 2:.0f})">{escape(ylabel)}</text>',
        f'<text x="{pad_l - 4}" y="{_f(sy(y0))}" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{pad_l - 4}" y="{_f(sy(y1) + 8)}" text-anchor="end">{y1:.3g}</text>',
        f'<text x="{pad_l}" y="{pad_t + ph + 14}" text-anchor="middle">{x0:.3g}</text>',
        f'<text x="{pad_l + pw}" y="{pad_t + ph + 14}" text-anchor="middle">{x1:.3g}</text>',
    ]
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_f(sx(float(x)))},{_f(sy(float(y)))}" for x, y in zip(xs, ys) if np.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = pad_t + 12 + 16 * i
        out.append(f'<line x1="{width - pad_r + 8}" y1="{ly}" x2="{width - pad_r + 24}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{width - pad_r + 28}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heatmaps(grids: dict[str, np.ndarray], title: str = "", cell: int = 14, vmax: float | None = None) -> str:
    """Side-by-side grid heatmaps on a shared white-to-red scale."""
    vals = [g for g in grids.values()]
    top = vmax if vmax is not None else max(float(np.max(g)) for g in vals) if vals else 1.0
    top = top if top > 0 else 1.0
    gap, head = 16, 40
    widths = [g.shape[1] * cell for g in vals]
    width = sum(widths) + gap * (len(vals) + 1)
    height = head + max((g.shape[0] * cell for g in vals), default=0) + gap
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<text x="{gap}" y="16" font-size="13">{escape(title)} (max {top:.3g})</text>',
    ]
    x = gap
    for (label, g), w in zip(grids.items(), widths):
        out.append(f'<text x="{x}" y="{head - 6}">{escape(label)}</text>')
        for r in range(g.shape[0]):
            for c in range(g.shape[1]):
                t = min(max(float(g[r, c]) / top, 0.0), 1.0)
                shade = int(round(255 * (1 - t)))
                out.append(
                    f'<rect x="{x + c * cell}" y="{head + r * cell}" width="{cell}" height="{cell}" '
                    f'fill="rgb(255,{shade},{shade})" stroke="#ddd" stroke-width="0.5"/>'
                )
        x += w + gap
    out.append("</svg>")
    return "\n".join(out) + "\n"
