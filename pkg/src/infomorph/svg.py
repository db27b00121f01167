"""Minimal SVG line and bar charts, enough for learning curves and ablations."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

W, H = 640, 400
M = dict(left=60, right=20, top=30, bottom=70)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _scale(lo, hi, a, b):
    if hi == lo:
        hi = lo + 1.0
    return lambda v: a + (v - lo) * (b - a) / (hi - lo)


def _frame(title, xlabel, ylabel, ylo, yhi, sy):
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="14" y="{H / 2}" text-anchor="middle" transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>']
    x0, x1 = M["left"], W - M["right"]
    for i in range(5):
        v = ylo + (yhi - ylo) * i / 4
        y = sy(v)
        out.append(f'<line x1="{x0}" x2="{x1}" y1="{y:.1f}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{x0 - 4}" y="{y + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    out.append(f'<line x1="{x0}" x2="{x0}" y1="{M["top"]}" y2="{H - M["bottom"]}" stroke="black"/>')
    out.append(f'<line x1="{x0}" x2="{x1}" y1="{H - M["bottom"]}" y2="{H - M["bottom"]}" stroke="black"/>')
    return out


def _range(values):
    vals = [v for v in values if v is not None and v == v]
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    pad = 0.05 * (hi - lo or 1.0)
    return lo - pad, hi + pad


def line_plot(series: Mapping[str, Sequence[tuple[float, float]]], path, title="", xlabel="", ylabel="") -> str:
    """One polyline per named series of ``(x, y)`` points; missing y values break nothing, they are dropped."""
    pts = {k: [(x, y) for x, y in v if y is not None and y == y] for k, v in series.items()}
    xs = [x for v in pts.values() for x, _ in v]
    ylo, yhi = _range([y for v in pts.values() for _, y in v])
    sx = _scale(min(xs, default=0), max(xs, default=1), M["left"], W - M["right"])
    sy = _scale(ylo, yhi, H - M["bottom"], M["top"])
    out = _frame(title, xlabel, ylabel, ylo, yhi, sy)
    for i, (name, v) in enumerate(pts.items()):
        color = COLORS[i % len(COLORS)]
        if v:
            coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in v)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{W - M["right"] - 4}" y="{M["top"] + 14 * (i + 1)}" text-anchor="end" '
                   f'fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    return _write(out, path)


def bar_plot(labels: Sequence[str], values: Sequence[float], path, title="", ylabel="") -> str:
    ylo, yhi = _range(list(values) + [0.0])
    sy = _scale(ylo, yhi, H - M["bottom"], M["top"])
    out = _frame(title, "", ylabel, ylo, yhi, sy)
    n = max(len(values), 1)
    width = (W - M["left"] - M["right"]) / n
    for i, (lab, v) in enumerate(zip(labels, values)):
        x = M["left"] + i * width
        top, bottom = sorted((sy(v), sy(0.0)))
        color = COLORS[1] if v < 0 else COLORS[0]
        out.append(f'<rect x="{x + 0.1 * width:.1f}" y="{top:.1f}" width="{0.8 * width:.1f}" '
                   f'height="{bottom - top:.1f}" fill="{color}"/>')
        cx, cy = x + width / 2, H - M["bottom"] + 8
        out.append(f'<text x="{cx:.1f}" y="{cy}" text-anchor="end" transform="rotate(-60 {cx:.1f} {cy})">'
                   f'{escape(lab)}</text>')
    out.append("</svg>")
    return _write(out, path)


def _write(lines, path) -> str:
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
