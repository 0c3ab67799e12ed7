# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Mirrors ``_kernels_py`` operation for operation."""
from libc.math cimport sqrt, INFINITY

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF MAXV = 64


cdef int _load(poly, double* xs, double* ys) except -1:
    cdef int n = len(poly)
    cdef int i
    if n > MAXV:
        raise ValueError("polygon has too many vertices")
    for i in range(n):
        p = poly[i]
        xs[i] = p[0]
        ys[i] = p[1]
    return n


cdef bint _sat(double* ax_, double* ay_, int na, double* bx_, double* by_, int nb):
    cdef int k, i, n, j
    cdef double x0, y0, x1, y1, ax, ay, p, min_a, max_a, min_b, max_b
    cdef double* xs
    cdef double* ys
    for k in range(2):
        if k == 0:
            xs = ax_; ys = ay_; n = na
        else:
            xs = bx_; ys = by_; n = nb
        for i in range(n):
            x0 = xs[i]; y0 = ys[i]
            x1 = xs[(i + 1) % n]; y1 = ys[(i + 1) % n]
            ax = y0 - y1
            ay = x1 - x0
            min_a = INFINITY
            max_a = -INFINITY
            for j in range(na):
                p = ax_[j] * ax + ay_[j] * ay
                if p < min_a:
                    min_a = p
                if p > max_a:
                    max_a = p
            min_b = INFINITY
            max_b = -INFINITY
            for j in range(nb):
                p = bx_[j] * ax + by_[j] * ay
                if p < min_b:
                    min_b = p
                if p > max_b:
                    max_b = p
            if max_a < min_b or max_b < min_a:
                return False
    return True


def sat_overlap(poly_a, poly_b):
    cdef double ax[MAXV]
    cdef double ay[MAXV]
    cdef double bx[MAXV]
    cdef double by[MAXV]
    cdef int na = _load(poly_a, ax, ay)
    cdef int nb = _load(poly_b, bx, by)
    return _sat(ax, ay, na, bx, by, nb)


cdef inline double _pseg2(double px, double py, double x0, double y0,
                          double x1, double y1):
    cdef double dx = x1 - x0
    cdef double dy = y1 - y0
    cdef double len2 = dx * dx + dy * dy
    cdef double t, qx, qy
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


def polygon_distance(poly_a, poly_b):
    cdef double ax[MAXV]
    cdef double ay[MAXV]
    cdef double bx[MAXV]
    cdef double by[MAXV]
    cdef int na = _load(poly_a, ax, ay)
    cdef int nb = _load(poly_b, bx, by)
    cdef double best = INFINITY
    cdef double d2
    cdef int i, j
    if _sat(ax, ay, na, bx, by, nb):
        return 0.0
    for j in range(na):
        for i in range(nb):
            d2 = _pseg2(ax[j], ay[j], bx[i], by[i], bx[(i + 1) % nb], by[(i + 1) % nb])
            if d2 < best:
                best = d2
    for j in range(nb):
        for i in range(na):
            d2 = _pseg2(bx[j], by[j], ax[i], ay[i], ax[(i + 1) % na], ay[(i + 1) % na])
            if d2 < best:
                best = d2
    return sqrt(best)


def markov_run(double a, double b, const double[::1] uniforms, detected):
    cdef Py_ssize_t n = uniforms.shape[0]
    cdef Py_ssize_t i
    out = np.empty(n, dtype=np.uint8)
    cdef unsigned char[::1] o = out
    cdef bint state = bool(detected)
    for i in range(n):
        if state:
            if uniforms[i] < a:
                state = False
        elif uniforms[i] < b:
            state = True
        o[i] = state
    return out


cdef void _project(double* rx, double* ry, double* cs, int n, double x, double y,
                   double* s_out, double* lat_out):
    cdef double best_d2 = INFINITY
    cdef double best_s = 0.0
    cdef double best_lat = 0.0
    cdef double x0, y0, x1, y1, dx, dy, seg, t, qx, qy, d2
    cdef int i
    for i in range(n - 1):
        x0 = rx[i]; y0 = ry[i]
        x1 = rx[i + 1]; y1 = ry[i + 1]
        dx = x1 - x0
        dy = y1 - y0
        seg = cs[i + 1] - cs[i]
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
            best_s = cs[i] + t * seg
            best_lat = (dx * (y - y0) - dy * (x - x0)) / seg
    s_out[0] = best_s
    lat_out[0] = best_lat


cdef int _load_route(route, cum_s, double* rx, double* ry, double* cs) except -1:
    cdef int n = len(route)
    cdef int i
    if n > MAXV:
        raise ValueError("route has too many vertices")
    for i in range(n):
        p = route[i]
        rx[i] = p[0]
        ry[i] = p[1]
        cs[i] = cum_s[i]
    return n


def project(route, cum_s, double x, double y):
    cdef double rx[MAXV]
    cdef double ry[MAXV]
    cdef double cs[MAXV]
    cdef int n = _load_route(route, cum_s, rx, ry, cs)
    cdef double s, lat
    _project(rx, ry, cs, n, x, y, &s, &lat)
    return s, lat


def corridor_scan(route, cum_s, double px, double py, double vx, double vy,
                  int n_steps, double dt, double half_width, double s_lo, double s_hi):
    cdef double rx[MAXV]
    cdef double ry[MAXV]
    cdef double cs[MAXV]
    cdef int n = _load_route(route, cum_s, rx, ry, cs)
    cdef int first = -1
    cdef double s_min = INFINITY
    cdef double s, lat, tk
    cdef int k
    for k in range(n_steps + 1):
        tk = k * dt
        _project(rx, ry, cs, n, px + vx * tk, py + vy * tk, &s, &lat)
        if -half_width <= lat <= half_width and s_lo <= s <= s_hi:
            if first < 0:
                first = k
            if s < s_min:
                s_min = s
    return first, s_min
