"""Minimal SVG renderers for confidence traces and attribution strips."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

_HEAD = '<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">'


def _polyline(xs, ys, color, width=1.0):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}"/>'


def trace_svg(raw, smoothed, peaks=(), intervals=(), title="", width=900, height=240) -> str:
    """Raw and smoothed detection scores, detected peaks and shaded ground truth."""
    raw = np.asarray(raw, dtype=np.float64)
    smoothed = np.asarray(smoothed, dtype=np.float64)
    n = max(len(raw), 2)
    left, right, top, bottom = 40, 10, 24, 20
    pw, ph = width - left - right, height - top - bottom

    def sx(i):
        return left + pw * i / (n - 1)

    def sy(v):
        return top + ph * (1.0 - min(max(v, 0.0), 1.0))

    out = [_HEAD.format(w=width, h=height),
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    for iv in intervals:
        x0, x1 = sx(iv.first), sx(iv.last)
        color = "#9ecae1" if int(iv.direction) == 0 else "#fdae6b"
        out.append(f'<rect x="{x0:.2f}" y="{top}" width="{max(x1 - x0, 1.0):.2f}" '
                   f'height="{ph}" fill="{color}" fill-opacity="0.5"/>')
    out.append(f'<line x1="{left}" y1="{sy(0):.2f}" x2="{left + pw}" y2="{sy(0):.2f}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{sy(0):.2f}" stroke="black"/>')
    for v in (0.0, 0.5, 1.0):
        out.append(f'<text x="{left - 4}" y="{sy(v) + 4:.2f}" font-size="10" '
                   f'text-anchor="end">{v:.1f}</text>')
    idx = np.arange(len(raw))
    out.append(_polyline(sx(idx), [sy(v) for v in raw], "#bbbbbb"))
    out.append(_polyline(sx(idx), [sy(v) for v in smoothed], "#d62728", 1.5))
    for p in peaks:
        out.append(f'<circle cx="{sx(p.index):.2f}" cy="{sy(p.height):.2f}" r="3" fill="black"/>')
    if title:
        out.append(f'<text x="{left}" y="14" font-size="12">{escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heat_strip_svg(frame_values, title="", cell=40, height=60) -> str:
    """One cell per frame, red for positive and blue for negative relevance."""
    vals = np.asarray(frame_values, dtype=np.float64)
    scale = float(np.abs(vals).max()) or 1.0
    width = cell * len(vals) + 20
    total_h = height + 40
    out = [_HEAD.format(w=width, h=total_h),
           f'<rect x="0" y="0" width="{width}" height="{total_h}" fill="white"/>']
    for t, v in enumerate(vals):
        a = abs(v) / scale
        color = "214,39,40" if v >= 0 else "31,119,180"
        out.append(f'<rect x="{10 + t * cell}" y="20" width="{cell - 2}" height="{height}" '
                   f'fill="rgb({color})" fill-opacity="{a:.4f}" stroke="#444"/>')
        out.append(f'<text x="{10 + t * cell + cell / 2:.1f}" y="{height + 34}" font-size="10" '
                   f'text-anchor="middle">{t}</text>')
    if title:
        out.append(f'<text x="10" y="14" font-size="12">{escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
