"""Minimal SVG line charts (no plotting dependency)."""
from __future__ import annotations

from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

W, H, PAD = 900, 360, 50


def _scale(v, lo, hi, a, b):
    return a + (b - a) * ((v - lo) / (hi - lo) if hi > lo else 0.5)


def _polyline(x, y, xlim, ylim, color, width=1.2):
    pts = []
    for xi, yi in zip(x, y):
        if not np.isfinite(yi):
            continue
        pts.append(f"{_scale(xi, *xlim, PAD, W - PAD):.2f},{_scale(yi, *ylim, H - PAD, PAD):.2f}")
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{" ".join(pts)}"/>'


def line_chart(
    x: Sequence[float],
    series: dict,
    title: str = "",
    bands: Optional[Sequence[tuple[float, float]]] = None,
    x_labels: Optional[tuple[str, str]] = None,
) -> str:
    """Lines for each ``{name: values}`` over ``x`` with optional shaded ``(x0, x1)`` bands."""
    x = np.asarray(x, float)
    allv = np.concatenate([np.asarray(v, float) for v in series.values()])
    allv = allv[np.isfinite(allv)]
    xlim = (float(x.min()), float(x.max()))
    ylim = (float(allv.min()), float(allv.max())) if len(allv) else (0.0, 1.0)
    colors = ["#1f4e79", "#c0392b", "#27ae60", "#8e44ad", "#d35400"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<text x="{W / 2}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>']
    for x0, x1 in bands or []:
        a, b = _scale(x0, *xlim, PAD, W - PAD), _scale(x1, *xlim, PAD, W - PAD)
        parts.append(f'<rect x="{a:.2f}" y="{PAD}" width="{max(b - a, 1.0):.2f}" height="{H - 2 * PAD}" '
                     f'fill="#f4b183" fill-opacity="0.45"/>')
    parts.append(f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" fill="none" stroke="#555"/>')
    for i, (name, vals) in enumerate(series.items()):
        c = colors[i % len(colors)]
        parts.append(_polyline(x, np.asarray(vals, float), xlim, ylim, c))
        parts.append(f'<text x="{W - PAD - 5}" y="{PAD + 16 + 16 * i}" text-anchor="end" font-family="sans-serif" '
                     f'font-size="12" fill="{c}">{escape(name)}</text>')
    parts.append(f'<text x="{PAD - 6}" y="{PAD + 4}" text-anchor="end" font-family="sans-serif" font-size="10">{ylim[1]:.3g}</text>')
    parts.append(f'<text x="{PAD - 6}" y="{H - PAD}" text-anchor="end" font-family="sans-serif" font-size="10">{ylim[0]:.3g}</text>')
    if x_labels:
        parts.append(f'<text x="{PAD}" y="{H - PAD + 16}" font-family="sans-serif" font-size="10">{escape(x_labels[0])}</text>')
        parts.append(f'<text x="{W - PAD}" y="{H - PAD + 16}" text-anchor="end" font-family="sans-serif" font-size="10">{escape(x_labels[1])}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def flag_bands(flags: Sequence[int]) -> list[tuple[float, float]]:
    """Index intervals ``(start, stop)`` of consecutive ones."""
    f = np.concatenate([[0], np.asarray(flags, int), [0]])
    edges = np.flatnonzero(np.diff(f))
    return [(float(a), float(b - 1)) for a, b in zip(edges[::2], edges[1::2])]
