"""Pure-Python implementations of the hot kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature and
the same floating-point operation order, so both backends produce identical
results. ``pemsim.kernels`` picks one at import time.
"""
from __future__ import annotations

import math

import numpy as np


def sat_overlap(poly_a, poly_b) -> bool:
    """Separating-axis test for two convex polygons.

    Touching boundaries count as overlap: a separating axis must leave a
    strictly positive gap.
    """
    for poly in (poly_a, poly_b):
        n = len(poly)
        for i in range(n):
            x0, y0 = poly[i]
            x1, y1 = poly[(i + 1) % n]
            ax = y0 - y1
            ay = x1 - x0
            min_a = math.inf
            max_a = -math.inf
            for px, py in poly_a:
                p = px * ax + py * ay
                if p < min_a:
                    min_a = p
                if p > max_a:
                    max_a = p
            min_b = math.inf
            max_b = -math.inf
            for px, py in poly_b:
                p = px * ax + py * ay
                if p < min_b:
                    min_b = p
                if p > max_b:
                    max_b = p
            if max_a < min_b or max_b < min_a:
                return False
    return True


def _point_segment_dist2(px, py, x0, y0, x1, y1) -> float:
    dx = x1 - x0
    dy = y1 - y0
    len2 = dx * dx + dy * dy
    if len2 > 0.0:
        t = ((px - x0) * dx + (py - y0) * dy) / len2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    else:
        t = 0.0
    qx = x0 + t * dx - px
    qy = y0 + t * dy - py
    return qx * qx + qy * qy


def polygon_distance(poly_a, poly_b) -> float:
    """Minimum Euclidean distance between two convex polygons (0 if they overlap)."""
    if sat_overlap(poly_a, poly_b):
        return 0.0
    best = math.inf
    for src, dst in ((poly_a, poly_b), (poly_b, poly_a)):
        n = len(dst)
        for px, py in src:
            for i in range(n):
                x0, y0 = dst[i]
                x1, y1 = dst[(i + 1) % n]
                d2 = _point_segment_dist2(px, py, x0, y0, x1, y1)
                if d2 < best:
                    best = d2
    return math.sqrt(best)


def markov_run(a: float, b: float, uniforms: np.ndarray, detected: bool) -> np.ndarray:
    """Step a two-state chain once per uniform draw.

    Returns a uint8 array with 1 where the chain is in the detected state
    *after* each step.
    """
    out = np.empty(len(uniforms), dtype=np.uint8)
    state = bool(detected)
    for i, u in enumerate(uniforms.tolist()):
        if state:
            if u < a:
                state = False
        elif u < b:
            state = True
        out[i] = state
    return out


def project(route, cum_s, x: float, y: float):
    """Project a point onto a polyline; returns (arc length, signed lateral offset).

    Lateral offset is positive to the left of the travel direction. Points
    beyond either end are projected onto the extension of the end segment.
    """
    n = len(route)
    best_d2 = math.inf
    best_s = 0.0
    best_lat = 0.0
    for i in range(n - 1):
        x0, y0 = route[i]
        x1, y1 = route[i + 1]
        dx = x1 - x0
        dy = y1 - y0
        seg = cum_s[i + 1] - cum_s[i]
        t = ((x - x0) * dx + (y - y0) * dy) / (seg * seg)
        if i > 0 and t < 0.0:
            t = 0.0
        if i < n - 2 and t > 1.0:
            t = 1.0
        qx = x0 + t * dx
        qy = y0 + t * dy
        d2 = (x - qx) * (x - qx) + (y - qy) * (y - qy)
        if d2 < best_d2:
            best_d2 = d2
            best_s = cum_s[i] + t * seg
            best_lat = (dx * (y - y0) - dy * (x - x0)) / seg
    return best_s, best_lat


def corridor_scan(route, cum_s, px, py, vx, vy, n_steps, dt,
                  half_width, s_lo, s_hi):
    """Constant-velocity sweep of one point against the route corridor.

    A predicted position counts when it lies within ``half_width`` of the
    route and its arc length is in ``[s_lo, s_hi]``.
    Returns ``(first_step, s_min)``: the first step index that hit (-1 if
    none) and the smallest arc length among hits.
    """
    first = -1
    s_min = math.inf
    for k in range(n_steps + 1):
        tk = k * dt
        s, lat = project(route, cum_s, px + vx * tk, py + vy * tk)
        if -half_width <= lat <= half_width and s_lo <= s <= s_hi:
            if first < 0:
                first = k
            if s < s_min:
                s_min = s
    return first, s_min
