"""Minimal deterministic SVG scatter plots.

No plotting library: output bytes depend only on the inputs, which keeps
rendered artifacts reproducible and diffable. Numbers are formatted with
repr-level shortest round-trip so equal inputs give identical documents.
"""

from __future__ import annotations

import math

MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 56.0, 16.0, 28.0, 44.0

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if not math.isfinite(lo) or not math.isfinite(hi):
        lo, hi = 0.0, 1.0
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * abs(step):
        ticks.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return ticks


def emit_svg_scatter(
    points,
    x_label: str,
    y_label: str,
    title: str = "",
    width: int = 640,
    height: int = 480,
) -> str:
    """Standalone SVG scatter. points: iterable of (x, y, series_name)."""
    pts = [(float(x), float(y), str(s)) for x, y, s in points]
    if pts:
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(ys), max(ys)
        if x_lo == x_hi:
            x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
        if y_lo == y_hi:
            y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
        pad_x = 0.05 * (x_hi - x_lo)
        pad_y = 0.05 * (y_hi - y_lo)
        x_lo, x_hi = x_lo - pad_x, x_hi + pad_x
        y_lo, y_hi = y_lo - pad_y, y_hi + pad_y
    else:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0

    plot_w = width - MARGIN_L - MARGIN_R
    plot_h = height - MARGIN_T - MARGIN_B

    def sx(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    series = []
    for _, _, s in pts:
        if s not in series:
            series.append(s)
    color = {s: PALETTE[i % len(PALETTE)] for i, s in enumerate(series)}

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{_fmt(MARGIN_L)}" y="{_fmt(MARGIN_T)}" width="{_fmt(plot_w)}" '
        f'height="{_fmt(plot_h)}" fill="none" stroke="#333" stroke-width="1"/>',
    ]
    if title:
        out.append(
            f'<text x="{_fmt(width / 2)}" y="18" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{title}</text>'
        )
    for t in _nice_ticks(x_lo, x_hi):
        px = sx(t)
        out.append(
            f'<line x1="{_fmt(px)}" y1="{_fmt(MARGIN_T + plot_h)}" x2="{_fmt(px)}" '
            f'y2="{_fmt(MARGIN_T + plot_h + 4)}" stroke="#333" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_fmt(px)}" y="{_fmt(MARGIN_T + plot_h + 16)}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{_fmt(t)}</text>'
        )
    for t in _nice_ticks(y_lo, y_hi):
        py = sy(t)
        out.append(
            f'<line x1="{_fmt(MARGIN_L - 4)}" y1="{_fmt(py)}" x2="{_fmt(MARGIN_L)}" '
            f'y2="{_fmt(py)}" stroke="#333" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_fmt(MARGIN_L - 7)}" y="{_fmt(py + 3)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{_fmt(t)}</text>'
        )
    out.append(
        f'<text x="{_fmt(MARGIN_L + plot_w / 2)}" y="{_fmt(height - 8.0)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{x_label}</text>'
    )
    out.append(
        f'<text x="14" y="{_fmt(MARGIN_T + plot_h / 2)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 14 {_fmt(MARGIN_T + plot_h / 2)})">{y_label}</text>'
    )
    for x, y, s in pts:
        out.append(
            f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="3" fill="{color[s]}" '
            f'fill-opacity="0.75"/>'
        )
    for i, s in enumerate(series):
        ly = MARGIN_T + 10 + 14 * i
        lx = MARGIN_L + plot_w - 110
        out.append(f'<circle cx="{_fmt(lx)}" cy="{_fmt(ly)}" r="3" fill="{color[s]}"/>')
        out.append(
            f'<text x="{_fmt(lx + 8)}" y="{_fmt(ly + 3)}" font-family="sans-serif" '
            f'font-size="10">{s}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
