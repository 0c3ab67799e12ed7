"""Dependency-free density scatter plots as standalone SVG.

Points are binned on a 50x50 grid; each non-empty bin becomes one marker at
the mean data coordinate of its points, coloured from blue (one point) to
yellow (the densest bin).
"""
from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

BINS = 50
WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 80, 30, 30, 60
BLUE = (0, 0, 255)
YELLOW = (255, 255, 0)

UNITS = {
    "min_spatial_m": "m",
    "min_temporal_s": "s",
    "min_ttc_s": "s",
    "max_nondetect_s": "s",
    "detection_freq": "fraction",
    "vel_unknown_frac": "fraction",
    "success_rate": "fraction",
    "collided": "0/1",
    "p_tl": "probability",
    "p": "probability",
    "sojourn": "s",
    "sigma_d": "fraction",
    "sigma_theta": "deg",
}


def axis_label(stat: str) -> str:
    unit = UNITS.get(stat)
    if unit is None and stat.endswith("_s"):
        unit = "s"
    elif unit is None and stat.endswith("_m"):
        unit = "m"
    return f"{stat} ({unit})" if unit else stat


def _range(vals: Sequence[float]) -> tuple[float, float]:
    lo, hi = min(vals), max(vals)
    if hi - lo <= 0.0:
        pad = 0.5 if lo == 0.0 else 0.5 * abs(lo)
        return lo - pad, hi + pad
    return lo, hi


def bin_color(count: int, max_count: int) -> str:
    f = 1.0 if max_count <= 1 else (count - 1) / (max_count - 1)
    r, g, b = (round(c0 + f * (c1 - c0)) for c0, c1 in zip(BLUE, YELLOW))
    return f"#{r:02x}{g:02x}{b:02x}"


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def density_bins(xs: Sequence[float], ys: Sequence[float], bins: int = BINS):
    """``[(mean_x, mean_y, count)]`` per non-empty bin, in (row, column) order,
    plus the data ranges used."""
    x_lo, x_hi = _range(xs)
    y_lo, y_hi = _range(ys)
    acc: dict[tuple[int, int], list[float]] = {}
    for x, y in zip(xs, ys):
        i = min(int((x - x_lo) / (x_hi - x_lo) * bins), bins - 1)
        j = min(int((y - y_lo) / (y_hi - y_lo) * bins), bins - 1)
        a = acc.setdefault((j, i), [0.0, 0.0, 0])
        a[0] += x
        a[1] += y
        a[2] += 1
    out = [(a[0] / a[2], a[1] / a[2], a[2]) for _, a in sorted(acc.items())]
    return out, (x_lo, x_hi, y_lo, y_hi)


def scatter_svg(xs: Sequence[float], ys: Sequence[float], x_stat: str, y_stat: str,
                title: str | None = None) -> str:
    pts = [(float(x), float(y)) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
    if not pts:
        raise ValueError("no finite points to plot")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    cells, (x_lo, x_hi, y_lo, y_hi) = density_bins(xs, ys)
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def px(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return MARGIN_T + ph - (y - y_lo) / (y_hi - y_lo) * ph

    max_count = max(c for _, _, c in cells)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:g}" y="18" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<g id="axes" stroke="black" fill="none">'
               f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}"/></g>')
    ticks = ['<g id="ticks" fill="black">']
    for k in range(5):
        xv = x_lo + k * (x_hi - x_lo) / 4
        yv = y_lo + k * (y_hi - y_lo) / 4
        ticks.append(f'<line x1="{px(xv):.2f}" y1="{MARGIN_T + ph}" x2="{px(xv):.2f}" y2="{MARGIN_T + ph + 5}" '
                     f'stroke="black"/><text x="{px(xv):.2f}" y="{MARGIN_T + ph + 18}" '
                     f'text-anchor="middle">{_fmt(float(f"{xv:.3g}"))}</text>')
        ticks.append(f'<line x1="{MARGIN_L - 5}" y1="{py(yv):.2f}" x2="{MARGIN_L}" y2="{py(yv):.2f}" '
                     f'stroke="black"/><text x="{MARGIN_L - 8}" y="{py(yv) + 4:.2f}" '
                     f'text-anchor="end">{_fmt(float(f"{yv:.3g}"))}</text>')
    ticks.append("</g>")
    out.extend(ticks)
    out.append(f'<text id="xlabel" x="{MARGIN_L + pw / 2:g}" y="{HEIGHT - 15}" '
               f'text-anchor="middle">{escape(axis_label(x_stat))}</text>')
    out.append(f'<text id="ylabel" transform="translate(20,{MARGIN_T + ph / 2:g}) rotate(-90)" '
               f'text-anchor="middle">{escape(axis_label(y_stat))}</text>')
    out.append(f'<g id="points" data-xmin="{_fmt(x_lo)}" data-xmax="{_fmt(x_hi)}" '
               f'data-ymin="{_fmt(y_lo)}" data-ymax="{_fmt(y_hi)}" '
               f'data-plot="{MARGIN_L} {MARGIN_T} {pw} {ph}">')
    for x, y, c in cells:
        out.append(f'<circle r="4" transform="translate({px(x):.3f},{py(y):.3f})" '
                   f'fill="{bin_color(c, max_count)}" data-count="{c}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_scatter(rows: Sequence[dict], x_stat: str, y_stat: str, path, title: str | None = None) -> None:
    """Plot two numeric columns of CSV rows (dicts) into an SVG file."""
    if not rows:
        raise ValueError("empty selection: no rows to plot")
    for stat in (x_stat, y_stat):
        if stat not in rows[0]:
            raise KeyError(f"column {stat!r} not found")
    xs, ys = [], []
    for r in rows:
        try:
            x, y = float(r[x_stat]), float(r[y_stat])
        except ValueError:
            continue
        xs.append(x)
        ys.append(y)
    svg = scatter_svg(xs, ys, x_stat, y_stat, title)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)
