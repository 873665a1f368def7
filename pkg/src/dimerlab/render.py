"""Deterministic SVG output for covers and height fields."""
from __future__ import annotations

import numpy as np

from .errors import MalformedInput

SIZE = 512
PAD = 16


def _frame(points):
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    scale = (SIZE - 2 * PAD) / span

    def tr(p):
        p = np.atleast_2d(p)
        x = PAD + (p[:, 0] - lo[0]) * scale
        y = SIZE - PAD - (p[:, 1] - lo[1]) * scale
        return np.stack([x, y], axis=1)

    return tr


def _svg(body):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
            f'viewBox="0 0 {SIZE} {SIZE}">\n<rect width="100%" height="100%" fill="white"/>\n')
    return head + "\n".join(body) + "\n</svg>\n"


def render_cover(cover, show_graph=True):
    """Dimers as thick segments over the thin edges of the graph."""
    g = cover.graph
    if g.n_vertices == 0:
        raise MalformedInput("empty graph")
    tr = _frame(g.pos)
    P = tr(g.pos)
    body = []
    if show_graph:
        for e in range(g.n_edges):
            a, b = P[g.ewhite[e]], P[g.eblack[e]]
            body.append(f'<line class="edge" x1="{a[0]:.2f}" y1="{a[1]:.2f}" x2="{b[0]:.2f}" y2="{b[1]:.2f}" '
                        'stroke="#bbbbbb" stroke-width="1"/>')
    palette = ("#c0392b", "#2471a3", "#229954", "#d68910")
    for e in np.flatnonzero(cover.mask):
        a, b = P[g.ewhite[e]], P[g.eblack[e]]
        # colour by edge direction so frozen regions show as uniform patches
        d = g.pos[g.eblack[e]] - g.pos[g.ewhite[e]]
        k = (int(d[0] > 0) << 1) | int(d[1] > 0)
        body.append(f'<line class="dimer" x1="{a[0]:.2f}" y1="{a[1]:.2f}" x2="{b[0]:.2f}" y2="{b[1]:.2f}" '
                    f'stroke="{palette[k]}" stroke-width="4" stroke-linecap="round"/>')
    return _svg(body)


def _color(t):
    t = min(max(t, 0.0), 1.0)
    r = int(round(255 * t))
    b = int(round(255 * (1 - t)))
    return f"#{r:02x}40{b:02x}"


def contour_segments(points, triangles, values, level):
    """Marching-triangles segments of the level set ``values == level``."""
    segs = []
    for tri in triangles:
        v = values[tri] - level
        pts = []
        for i, j in ((0, 1), (1, 2), (2, 0)):
            if (v[i] < 0) != (v[j] < 0):
                t = v[i] / (v[i] - v[j])
                pts.append(points[tri[i]] + t * (points[tri[j]] - points[tri[i]]))
        if len(pts) == 2:
            segs.append((pts[0], pts[1]))
    return segs


def render_field(field, levels=12):
    """Filled triangles coloured by value plus contour lines."""
    P, T, V = field.points, field.triangles, np.asarray(field.values, dtype=float)
    if len(T) == 0 or not np.all(np.isfinite(V)):
        raise MalformedInput("field has no triangles or non-finite values")
    tr = _frame(P)
    Q = tr(P)
    lo, hi = float(V.min()), float(V.max())
    span = hi - lo or 1.0
    body = []
    for tri in T:
        c = _color((V[tri].mean() - lo) / span)
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in Q[tri])
        body.append(f'<polygon points="{pts}" fill="{c}" stroke="{c}" stroke-width="0.3"/>')
    for k in range(1, levels):
        level = lo + span * k / levels
        for a, b in contour_segments(P, T, V, level):
            a, b = tr(a)[0], tr(b)[0]
            body.append(f'<line class="level" data-level="{level:.6g}" x1="{a[0]:.2f}" y1="{a[1]:.2f}" '
                        f'x2="{b[0]:.2f}" y2="{b[1]:.2f}" stroke="black" stroke-width="0.6"/>')
    return _svg(body)
