"""Maximization of the surface-tension functional over asymptotic height fields.

The field is a piecewise-linear function on a uniform triangulated grid:
every square cell is split along its (1, 1) diagonal.  With sigma
interpolated linearly from a table, the discrete objective
``sum(area * sigma(grad h))`` is concave in the nodal values, so cyclic
coordinate ascent with an exact one-dimensional search over the feasible
interval of each node increases it monotonically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .calculus import AsymptoticHeightField, BoundaryData, extendable, extension_values, lipschitz_repair
from .errors import GridMismatch, InfeasibleField, NonConvergence, NotExtendable
from .lattice import points_in_polygon

NEG = -1e300


# ---------------------------------------------------------------------------
# mesh


@dataclass
class Mesh:
    """Grid nodes inside a polygon, triangulated along the (1, 1) diagonal of each cell."""

    polygon: np.ndarray
    m: int
    origin: np.ndarray
    h: float
    grid: np.ndarray        # (m+1, m+1) node index or -1
    points: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray    # bool per node
    ij: np.ndarray          # grid coordinates per node

    @classmethod
    def build(cls, polygon, m):
        poly = np.asarray(polygon, dtype=float)
        lo, hi = poly.min(axis=0), poly.max(axis=0)
        h = float(max(hi - lo) / m)
        I, J = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
        ij = np.stack([I.ravel(), J.ravel()], axis=1)
        P = lo[None, :] + h * ij
        inside = points_in_polygon(P, poly, tol=1e-9 * max(1.0, h))
        grid = -np.ones((m + 1) * (m + 1), dtype=np.int64)
        grid[inside] = np.arange(inside.sum())
        grid = grid.reshape(m + 1, m + 1)
        tris = []
        for i in range(m):
            for j in range(m):
                a, b, c, d = grid[i, j], grid[i + 1, j], grid[i, j + 1], grid[i + 1, j + 1]
                if min(a, b, d) >= 0:
                    tris.append((a, b, d))
                if min(a, d, c) >= 0:
                    tris.append((a, d, c))
        T = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
        n = int(inside.sum())
        count = np.bincount(T.ravel(), minlength=n)
        pts = P[inside]
        on_edge = _on_polygon_boundary(pts, poly, 1e-9 * max(1.0, h))
        return cls(poly, m, lo, h, grid, pts, T, on_edge | (count < 6), ij[inside])

    @property
    def n_nodes(self):
        return len(self.points)

    @property
    def areas(self):
        P = self.points[self.triangles]
        e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
        return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def basis_gradients(self):
        """(K, 3, 2) gradients of the three hat functions on every triangle."""
        P = self.points[self.triangles]
        e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
        g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
        return np.stack([-(g1 + g2), g1, g2], axis=1)

    def colors(self):
        """A proper 3-colouring of the triangulation: (i + j) mod 3."""
        return (self.ij[:, 0] + self.ij[:, 1]) % 3

    def interpolate(self, values, points):
        """Piecewise-linear evaluation at arbitrary points inside the mesh."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        u = (points - self.origin[None, :]) / self.h
        ci = np.clip(np.floor(u[:, 0]).astype(np.int64), 0, self.m - 1)
        cj = np.clip(np.floor(u[:, 1]).astype(np.int64), 0, self.m - 1)
        fx, fy = u[:, 0] - ci, u[:, 1] - cj
        if np.any((fx < -1e-9) | (fx > 1 + 1e-9) | (fy < -1e-9) | (fy > 1 + 1e-9)):
            raise GridMismatch("points fall outside the mesh")
        a = self.grid[ci, cj]
        b = self.grid[ci + 1, cj]
        c = self.grid[ci, cj + 1]
        d = self.grid[ci + 1, cj + 1]
        lower = fx >= fy  # triangle (a, b, d), else (a, d, c)
        if np.any((a < 0) | (d < 0) | (np.where(lower, b, c) < 0)):
            raise GridMismatch("points fall in cells not covered by the mesh")
        va, vb, vc, vd = values[a], values[np.maximum(b, 0)], values[np.maximum(c, 0)], values[d]
        lo_val = va + fx * (vb - va) + fy * (vd - vb)
        up_val = va + fy * (vc - va) + fx * (vd - vc)
        return np.where(lower, lo_val, up_val)

    def field(self, values, meta=None):
        return AsymptoticHeightField(self.points, np.asarray(values, dtype=float), self.triangles, self.h,
                                     dict(meta or {}))


def _on_polygon_boundary(pts, poly, tol):
    out = np.zeros(len(pts), dtype=bool)
    for k in range(len(poly)):
        a, b = poly[k], poly[(k + 1) % len(poly)]
        ab = b - a
        t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
        d = np.linalg.norm(pts - (a + t[:, None] * ab), axis=1)
        out |= d <= tol
    return out


# ---------------------------------------------------------------------------
# sigma lookup compiled from a table


@dataclass
class SigmaLookup:
    """A SurfaceTensionTable flattened for compiled evaluation.

    ``tris`` holds (x, y, sigma) for the three corners of every triangle;
    ``cell_ptr``/``cell_ids`` list the triangles touching each grid cell.
    """

    r: int
    i0: int
    j0: int
    ncj: int
    tris: np.ndarray       # (K, 3, 3)
    cell_ptr: np.ndarray
    cell_ids: np.ndarray
    normals: np.ndarray    # (H, 2) outward normals of N
    offsets: np.ndarray    # (H,) with normals @ p <= offsets on N

    @classmethod
    def from_table(cls, table):
        idx = table.index
        i0, j0 = int(idx[:, 0].min()) - 1, int(idx[:, 1].min()) - 1
        nci = int(idx[:, 0].max()) - i0 + 2
        ncj = int(idx[:, 1].max()) - j0 + 2
        T = table.triangles
        tris = np.concatenate([table.points[T], table.sigma[T][..., None]], axis=2)
        buckets = [[] for _ in range(nci * ncj)]
        for (ci, cj), ks in table._cells.items():
            buckets[(ci - i0) * ncj + (cj - j0)].extend(ks)
        ptr = np.concatenate([[0], np.cumsum([len(b) for b in buckets])]).astype(np.int64)
        ids = np.asarray([k for b in buckets for k in b], dtype=np.int64)
        nrm, off = half_planes(table.vertices)
        return cls(table.resolution, i0, j0, ncj, tris, ptr, ids, nrm, off)

    def args(self):
        return self.r, self.i0, self.j0, self.ncj, self.tris, self.cell_ptr, self.cell_ids


def half_planes(vertices):
    """Outward normals and offsets of a convex polygon."""
    V = np.asarray(vertices, dtype=float)
    area = 0.5 * np.sum(V[:, 0] * np.roll(V[:, 1], -1) - np.roll(V[:, 0], -1) * V[:, 1])
    if area < 0:
        V = V[::-1]
    nrm, off = [], []
    for k in range(len(V)):
        a, b = V[k], V[(k + 1) % len(V)]
        n = np.array([b[1] - a[1], a[0] - b[0]])
        n /= np.linalg.norm(n)
        nrm.append(n)
        off.append(n @ a)
    return np.asarray(nrm), np.asarray(off)


@numba.njit(cache=True)
def _sigma_at(x, y, r, i0, j0, ncj, tris, ptr, ids, tol):
    ci = int(np.floor(x * r + 1e-12)) - i0
    cj = int(np.floor(y * r + 1e-12)) - j0
    nci = (ptr.shape[0] - 1) // ncj
    for di in (0, -1, 1):
        for dj in (0, -1, 1):
            a, b = ci + di, cj + dj
            if a < 0 or b < 0 or a >= nci or b >= ncj:
                continue
            cell = a * ncj + b
            for q in range(ptr[cell], ptr[cell + 1]):
                k = ids[q]
                x0, y0, s0 = tris[k, 0, 0], tris[k, 0, 1], tris[k, 0, 2]
                x1, y1, s1 = tris[k, 1, 0], tris[k, 1, 1], tris[k, 1, 2]
                x2, y2, s2 = tris[k, 2, 0], tris[k, 2, 1], tris[k, 2, 2]
                det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
                l1 = ((x - x0) * (y2 - y0) - (x2 - x0) * (y - y0)) / det
                l2 = ((x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)) / det
                l0 = 1.0 - l1 - l2
                if l0 >= -tol and l1 >= -tol and l2 >= -tol:
                    return l0 * s0 + l1 * s1 + l2 * s2
    return NEG


@numba.njit(cache=True)
def _node_terms(vals, node, tri_ptr, tri_ids, T, G):
    """Per adjacent triangle: gradient without the node and the node's hat gradient."""
    n = tri_ptr[node + 1] - tri_ptr[node]
    base = np.zeros((n, 2))
    own = np.zeros((n, 2))
    for q in range(n):
        t = tri_ids[tri_ptr[node] + q]
        for k in range(3):
            v = T[t, k]
            if v == node:
                own[q, 0] = G[t, k, 0]
                own[q, 1] = G[t, k, 1]
            else:
                base[q, 0] += G[t, k, 0] * vals[v]
                base[q, 1] += G[t, k, 1] * vals[v]
    return base, own


@numba.njit(cache=True)
def _phi(u, base, own, areas, r, i0, j0, ncj, tris, ptr, ids, tol):
    total = 0.0
    for q in range(base.shape[0]):
        s = _sigma_at(base[q, 0] + u * own[q, 0], base[q, 1] + u * own[q, 1], r, i0, j0, ncj, tris, ptr, ids, tol)
        if s == NEG:
            return NEG
        total += areas[q] * s
    return total


@numba.njit(cache=True)
def _sweep(vals, order, tri_ptr, tri_ids, T, G, A, nrm, off, r, i0, j0, ncj, tris, ptr, ids, tol, iters):
    """One pass of exact coordinate ascent; returns (total gain, max single gain)."""
    gain_total = 0.0
    gain_max = 0.0
    for node in order:
        base, own = _node_terms(vals, node, tri_ptr, tri_ids, T, G)
        n = base.shape[0]
        areas = np.empty(n)
        for q in range(n):
            areas[q] = A[tri_ids[tri_ptr[node] + q]]
        lo, hi = -1e300, 1e300
        for q in range(n):
            for p in range(nrm.shape[0]):
                a = nrm[p, 0] * own[q, 0] + nrm[p, 1] * own[q, 1]
                b = off[p] - (nrm[p, 0] * base[q, 0] + nrm[p, 1] * base[q, 1])
                if a > 1e-300:
                    hi = min(hi, b / a)
                elif a < -1e-300:
                    lo = max(lo, b / a)
        u0 = vals[node]
        f0 = _phi(u0, base, own, areas, r, i0, j0, ncj, tris, ptr, ids, tol)
        if lo > hi:
            continue
        # golden-section search for the maximum of a concave function
        gr = 0.6180339887498949
        a, b = lo, hi
        c = b - gr * (b - a)
        d = a + gr * (b - a)
        fc = _phi(c, base, own, areas, r, i0, j0, ncj, tris, ptr, ids, tol)
        fd = _phi(d, base, own, areas, r, i0, j0, ncj, tris, ptr, ids, tol)
        for _ in range(iters):
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - gr * (b - a)
                fc = _phi(c, base, own, areas, r, i0, j0, ncj, tris, ptr, ids, tol)
            else:
                a, c, fc = c, d, fd
                d = a + gr * (b - a)
                fd = _phi(d, base, own, areas, r, i0, j0, ncj, tris, ptr, ids, tol)
        best_u, best_f = (c, fc) if fc >= fd else (d, fd)
        for cand in (lo, hi):
            fcand = _phi(cand, base, own, areas, r, i0, j0, ncj, tris, ptr, ids, tol)
            if fcand > best_f:
                best_u, best_f = cand, fcand
        if best_f > f0:
            vals[node] = best_u
            g = best_f - f0
            gain_total += g
            if g > gain_max:
                gain_max = g
    return gain_total, gain_max


# ---------------------------------------------------------------------------
# problem and solver


@dataclass
class VariationalProblem:
    """Boundary data on a polygonal domain, a sigma table and the gradient polygon."""

    polygon: np.ndarray
    chi: object              # callable on (k, 2) boundary points
    table: object            # SurfaceTensionTable
    meta: dict = field(default_factory=dict)

    @property
    def N(self):
        return np.asarray(self.table.vertices, dtype=float)

    def boundary_data(self, per_edge=256):
        return BoundaryData.from_function(self.polygon, lambda p: float(self.chi(np.atleast_2d(p))[0]), per_edge)


@dataclass
class SolveResult:
    field: AsymptoticHeightField
    mesh: Mesh
    value: float
    history: list
    sweeps: int
    converged: bool


def functional_value(fld, table, tol=1e-9):
    """sum over triangles of area * sigma(gradient)."""
    G = fld.gradients()
    viol = fld.gradient_violations(table.vertices, tol)
    if len(viol):
        raise InfeasibleField(f"{len(viol)} triangle gradients lie outside the Newton polygon")
    P = fld.points[fld.triangles]
    e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    lk = SigmaLookup.from_table(table)
    sig = np.array([_sigma_at(gx, gy, *lk.args(), 1e-7) for gx, gy in G])
    if np.any(sig == NEG):
        raise InfeasibleField("gradient outside the tabulated polygon")
    return float(area @ sig)


def _adjacency(mesh):
    T = mesh.triangles
    order = np.argsort(T.ravel(), kind="stable")
    tri_ids = (order // 3).astype(np.int64)
    counts = np.bincount(T.ravel(), minlength=mesh.n_nodes)
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return ptr, tri_ids


def _initial_values(problem, mesh, bd, repaired):
    hmax = extension_values(problem.N, mesh.points, bd, "max")
    hmin = extension_values(problem.N, mesh.points, bd, "min")
    vals = 0.5 * (hmin + hmax)
    b = mesh.boundary
    # repaired data is read off the maximal extension, which is consistent by construction
    vals[b] = hmax[b] if repaired else problem.chi(mesh.points[b])
    return vals, hmin, hmax


def _refine(coarse, cvals, fine):
    return coarse.interpolate(cvals, fine.points)


def _solve_level(problem, mesh, vals, lk, tol, max_sweeps, iters):
    ptr, tri_ids = _adjacency(mesh)
    G = mesh.basis_gradients()
    A = mesh.areas
    colors = mesh.colors()
    free = np.flatnonzero(~mesh.boundary)
    order = np.concatenate([free[colors[free] == c] for c in range(3)]).astype(np.int64)
    fld = mesh.field(vals)
    value = functional_value(fld, problem.table, tol=1e-7)
    history = [value]
    calm = 0
    for sweep in range(1, max_sweeps + 1):
        gain, gmax = _sweep(vals, order, ptr, tri_ids, mesh.triangles, G, A, lk.normals, lk.offsets,
                            *lk.args(), 1e-9, iters)
        value += gain
        history.append(value)
        rel = gain / max(abs(value), 1e-12)
        calm = calm + 1 if rel < tol else 0
        if calm >= 3 and gmax < tol:
            return vals, history, sweep, True
    return vals, history, max_sweeps, False


def solve(problem, m=64, tol=1e-7, coarsest=8, max_sweeps=2000, iters=48, raise_on_cap=False,
          repair_tol=0.0):
    """Maximize the functional on an m-grid, refining from ``coarsest`` by doubling.

    Initialized from the average of the minimal and maximal extensions of
    the boundary data.  Boundary data sampled from a discrete patch carries
    O(1/n) inconsistencies; violations up to ``repair_tol`` are removed by
    replacing the data with its support-Lipschitz envelope.  Raises
    ``NotExtendable`` for larger violations and ``NonConvergence`` at the
    sweep cap when ``raise_on_cap`` is set.
    """
    bd = problem.boundary_data()
    ok, pair = extendable(problem.N, bd, tol=1e-9)
    repaired = False
    if not ok:
        fixed, change = lipschitz_repair(problem.N, bd)
        if change > repair_tol:
            raise NotExtendable(f"boundary data violates the support Lipschitz condition by {change:.3g}", pair)
        bd, repaired = fixed, True
    lk = SigmaLookup.from_table(problem.table)
    levels = []
    k = min(coarsest, m)
    while k < m:
        levels.append(k)
        k *= 2
    levels.append(m)
    vals = None
    prev = None
    history = []
    sweeps = 0
    converged = False
    for lv in levels:
        mesh = Mesh.build(problem.polygon, lv)
        init, hmin, hmax = _initial_values(problem, mesh, bd, repaired)
        vals = init
        if prev is not None:
            # the clamp fixes boundary nodes (where hmin = hmax) and keeps the
            # support-Lipschitz property of the interpolated coarse solution
            cand = np.clip(_refine(prev[0], prev[1], mesh), hmin, hmax)
            if not len(mesh.field(cand).gradient_violations(problem.N, 1e-7)):
                vals = cand
        vals, hist, sw, converged = _solve_level(problem, mesh, vals.copy(), lk, tol, max_sweeps, iters)
        history.extend(hist)
        sweeps += sw
        prev = (mesh, vals)
    fld = mesh.field(vals, {"levels": levels, "repaired": repaired})
    value = functional_value(fld, problem.table, tol=1e-7)
    if not converged and raise_on_cap:
        raise NonConvergence("sweep cap reached", fld, history[-1] - history[-2] if len(history) > 1 else None)
    return SolveResult(fld, mesh, value, history, sweeps, converged)


# ---------------------------------------------------------------------------
# boundary data from a patch and comparison with sampled heights


def _arclength(polygon, pts):
    """Arclength position of the nearest point on the polygon boundary."""
    poly = np.asarray(polygon, dtype=float)
    best_d = np.full(len(pts), np.inf)
    best_s = np.zeros(len(pts))
    start = 0.0
    for k in range(len(poly)):
        a, b = poly[k], poly[(k + 1) % len(poly)]
        ab = b - a
        L = float(np.linalg.norm(ab))
        t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
        d = np.linalg.norm(pts - (a + t[:, None] * ab), axis=1)
        better = d < best_d
        best_d[better] = d[better]
        best_s[better] = start + t[better] * L
        start += L
    return best_s, start


def boundary_function(polygon, points, values):
    """Periodic piecewise-linear interpolation of samples taken near the boundary."""
    s, perimeter = _arclength(polygon, np.asarray(points, dtype=float))
    order = np.argsort(s)
    s, v = s[order], np.asarray(values, dtype=float)[order]

    def chi(p):
        q, _ = _arclength(polygon, np.atleast_2d(np.asarray(p, dtype=float)))
        return np.interp(q, s, v, period=perimeter)

    return chi


def patch_boundary_heights(g, heights):
    """(centroids, values / n) of the boundary faces of a scaled patch."""
    n = g.scale or 1
    bf = np.asarray(g.boundary_faces)
    return g.face_centroids[bf], np.asarray(heights)[bf] / n


@dataclass
class Comparison:
    distance: float
    diffs: np.ndarray
    points: np.ndarray
    offset: float


def compare_with_sampler(result, points, heights, n, margin=0.0, align=None):
    """Sup-norm distance between the solver field and ``heights / n`` at ``points``.

    Heights are defined up to an additive constant; ``align`` is an optional
    set of point indices (usually boundary faces) whose median difference is
    removed first.  Only points at distance at least ``margin`` from the
    domain boundary enter the sup.
    """
    points = np.asarray(points, dtype=float)
    eta = np.asarray(heights, dtype=float) / n
    g = result.mesh.interpolate(result.field.values, points)
    offset = 0.0
    if align is not None:
        offset = float(np.median(g[align] - eta[align]))
    diffs = eta + offset - g
    dist = _distance_to_boundary(result.mesh.polygon, points)
    inside = points_in_polygon(points, result.mesh.polygon, tol=0.0) & (dist >= margin)
    if not np.any(inside):
        raise GridMismatch("no comparison points at the requested margin")
    return Comparison(float(np.max(np.abs(diffs[inside]))), diffs[inside], points[inside], offset)


def _distance_to_boundary(polygon, pts):
    poly = np.asarray(polygon, dtype=float)
    best = np.full(len(pts), np.inf)
    for k in range(len(poly)):
        a, b = poly[k], poly[(k + 1) % len(poly)]
        ab = b - a
        t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(pts - (a + t[:, None] * ab), axis=1))
    return best
