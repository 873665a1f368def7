"""Continuum and discrete height-function calculus.

Continuum fields are asymptotic height functions: Lipschitz functions whose
gradient lies in the Newton polygon ``N``.  The support function
``theta(x) = max_{p in N} <p, x>`` bounds their increments,
``f(x) - f(y) <= theta(x - y)``.  On a graph the analogue is the support
height function ``theta_hat(x, y)``, the largest value at face ``x`` of a
height function vanishing at face ``y``; it is a shortest-path distance in a
dual digraph.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .covers import HeightFunction, NewtonPolygon, reference_cover
from .errors import NotExtendable
from .lattice import points_in_polygon


def _vertices(N):
    if isinstance(N, NewtonPolygon):
        return N.vertex_array
    return np.asarray(N, dtype=float).reshape(-1, 2)


def support_function(N, x):
    """theta(x) = max over hull vertices p of <p, x>; vectorized over leading axes of x."""
    V = _vertices(N)
    x = np.asarray(x, dtype=float)
    return np.max(x @ V.T, axis=-1)


def _polygon_perimeter_samples(polygon, per_edge):
    poly = np.asarray(polygon, dtype=float)
    pts = []
    for k in range(len(poly)):
        a, b = poly[k], poly[(k + 1) % len(poly)]
        t = np.arange(per_edge) / per_edge
        pts.append(a[None, :] + t[:, None] * (b - a)[None, :])
    return np.vstack(pts)


@dataclass
class BoundaryData:
    """Boundary values chi sampled at points of the domain boundary."""

    points: np.ndarray
    values: np.ndarray

    @classmethod
    def from_function(cls, polygon, chi, per_edge=256):
        pts = _polygon_perimeter_samples(polygon, per_edge)
        return cls(pts, np.asarray([chi(p) for p in pts], dtype=float))


def extendable(N, boundary, tol=1e-12):
    """Whether chi(x) - chi(y) <= theta(x - y) for all boundary sample pairs.

    Returns ``(ok, pair)`` where ``pair`` is the worst violating index pair.
    """
    P, v = boundary.points, boundary.values
    worst, pair = 0.0, None
    for i in range(0, len(P), 256):
        d = P[i:i + 256, None, :] - P[None, :, :]
        th = support_function(N, d)
        excess = (v[i:i + 256, None] - v[None, :]) - th
        k = np.unravel_index(np.argmax(excess), excess.shape)
        if excess[k] > worst:
            worst, pair = float(excess[k]), (i + int(k[0]), int(k[1]))
    return worst <= tol, pair


def lipschitz_repair(N, boundary):
    """Largest support-Lipschitz data below ``boundary`` and the size of the change.

    The repaired values are the maximal extension restricted to the sample
    points; they equal the input exactly when the data is extendable.
    """
    vals = _chunked_extreme(N, boundary.points, boundary, +1)
    return BoundaryData(boundary.points, vals), float(np.max(boundary.values - vals, initial=0.0))


def _chunked_extreme(N, X, boundary, sign):
    out = np.empty(len(X))
    for i in range(0, len(X), 512):
        x = X[i:i + 512]
        if sign > 0:
            # h_max(x) = min_y chi(y) + theta(x - y)
            th = support_function(N, x[:, None, :] - boundary.points[None, :, :])
            out[i:i + 512] = np.min(boundary.values[None, :] + th, axis=1)
        else:
            # h_min(x) = max_y chi(y) - theta(y - x)
            th = support_function(N, boundary.points[None, :, :] - x[:, None, :])
            out[i:i + 512] = np.max(boundary.values[None, :] - th, axis=1)
    return out


@dataclass
class AsymptoticHeightField:
    """Values on a triangulated point set together with per-triangle gradients."""

    points: np.ndarray
    values: np.ndarray
    triangles: np.ndarray
    mesh: float
    meta: dict = field(default_factory=dict)

    def gradients(self):
        P = self.points[self.triangles]
        V = self.values[self.triangles]
        e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
        A = np.stack([e1, e2], axis=1)
        rhs = np.stack([V[:, 1] - V[:, 0], V[:, 2] - V[:, 0]], axis=1)
        return np.linalg.solve(A, rhs[..., None])[..., 0]

    def gradient_violations(self, N, tol=1e-9):
        """Indices of triangles whose gradient leaves the polygon N."""
        V = _vertices(N)
        G = self.gradients()
        bad = np.zeros(len(G), dtype=bool)
        if len(V) >= 3:
            for k in range(len(V)):
                a, b = V[k], V[(k + 1) % len(V)]
                cross = (b[0] - a[0]) * (G[:, 1] - a[1]) - (b[1] - a[1]) * (G[:, 0] - a[0])
                bad |= cross < -tol * max(1.0, np.linalg.norm(b - a))
        return np.flatnonzero(bad)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# mesh={self.mesh!r}\n")
            fh.write("x,y,value\n")
            for (x, y), v in zip(self.points, self.values):
                fh.write(f"{x:.17g},{y:.17g},{v:.17g}\n")

    @classmethod
    def from_csv(cls, path):
        """Read a field written by :meth:`to_csv`; the mesh is rebuilt by Delaunay triangulation."""
        from scipy.spatial import Delaunay

        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
        if not lines or lines[0].strip() != "x,y,value":
            raise MalformedInput(f"{path}: expected header 'x,y,value'")
        try:
            data = np.array([[float(t) for t in ln.split(",")] for ln in lines[1:]], dtype=float)
        except ValueError as exc:
            raise MalformedInput(f"{path}: {exc}") from exc
        if data.ndim != 2 or data.shape[0] < 3 or data.shape[1] != 3:
            raise MalformedInput(f"{path}: need at least three rows of x,y,value")
        pts = data[:, :2]
        return cls(pts, data[:, 2], Delaunay(pts).simplices, 0.0)


def grid_field(polygon, m):
    """Points of the m x m grid over the bounding box that fall in the polygon, triangulated."""
    poly = np.asarray(polygon, dtype=float)
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    xs = np.linspace(lo[0], hi[0], m + 1)
    ys = np.linspace(lo[1], hi[1], m + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    P = np.stack([X.ravel(), Y.ravel()], axis=1)
    inside = points_in_polygon(P, poly, tol=1e-9)
    idx = -np.ones(len(P), dtype=np.int64)
    idx[inside] = np.arange(inside.sum())
    grid = idx.reshape(m + 1, m + 1)
    tris = []
    for i in range(m):
        for j in range(m):
            a, b, c, d = grid[i, j], grid[i + 1, j], grid[i, j + 1], grid[i + 1, j + 1]
            for t in ((a, b, d), (a, d, c)):
                if min(t) >= 0:
                    tris.append(t)
    h = float(max(hi - lo) / m)
    return P[inside], np.asarray(tris, dtype=np.int64).reshape(-1, 3), h


def max_extension(polygon, N, boundary, m=64, check=True):
    """Maximal asymptotic extension of boundary data on an m x m grid."""
    if check:
        ok, pair = extendable(N, boundary, tol=1e-9)
        if not ok:
            raise NotExtendable("boundary data violates the support Lipschitz condition", pair)
    P, T, h = grid_field(polygon, m)
    return AsymptoticHeightField(P, _chunked_extreme(N, P, boundary, +1), T, h)


def min_extension(polygon, N, boundary, m=64, check=True):
    """Minimal asymptotic extension of boundary data on an m x m grid."""
    if check:
        ok, pair = extendable(N, boundary, tol=1e-9)
        if not ok:
            raise NotExtendable("boundary data violates the support Lipschitz condition", pair)
    P, T, h = grid_field(polygon, m)
    return AsymptoticHeightField(P, _chunked_extreme(N, P, boundary, -1), T, h)


def extension_values(N, points, boundary, which="max"):
    """h_max or h_min evaluated at arbitrary points."""
    return _chunked_extreme(N, np.atleast_2d(points), boundary, +1 if which == "max" else -1)


# ---------------------------------------------------------------------------
# graph side


def increment_arcs(g, ref=None):
    """Dual arcs (tail face, head face, max increment of h(head) - h(tail)).

    Crossing edge e from its left to its right face changes the height by
    D(e) - D'(e) in {-D'(e), 1 - D'(e)}; the reverse crossing by the negative.
    """
    refmask = (reference_cover(g) if ref is None else ref).mask.astype(np.int64)
    L, R = g.left.astype(np.int64), g.right.astype(np.int64)
    tails = np.concatenate([L, R])
    heads = np.concatenate([R, L])
    w = np.concatenate([1 - refmask, refmask])
    keep = tails != heads
    return tails[keep], heads[keep], w[keep]


def _dijkstra(n_nodes, tails, heads, w, init):
    """Multi-source shortest paths with initial labels ``init`` (inf = not a source)."""
    adj = [[] for _ in range(n_nodes)]
    for a, b, c in zip(tails.tolist(), heads.tolist(), w.tolist()):
        adj[a].append((b, c))
    dist = np.asarray(init, dtype=float).copy()
    heap = [(d, k) for k, d in enumerate(dist) if np.isfinite(d)]
    heapq.heapify(heap)
    done = np.zeros(n_nodes, dtype=bool)
    while heap:
        d, k = heapq.heappop(heap)
        if done[k]:
            continue
        done[k] = True
        for b, c in adj[k]:
            nd = d + c
            if nd < dist[b]:
                dist[b] = nd
                heapq.heappush(heap, (nd, b))
    return dist


def support_height_function(g, x, y, ref=None):
    """theta_hat(x, y): the largest h(x) over height functions with h(y) = 0."""
    return int(support_height_from(g, y, ref)[x])


def support_height_from(g, y, ref=None):
    """theta_hat(., y) for all faces."""
    t, h, w = increment_arcs(g, ref)
    init = np.full(g.n_faces, np.inf)
    init[y] = 0.0
    return _dijkstra(g.n_faces, t, h, w, init).astype(np.int64)


def support_height_matrix(g, ref=None):
    """All-pairs theta_hat as a matrix indexed [x, y]."""
    t, h, w = increment_arcs(g, ref)
    out = np.empty((g.n_faces, g.n_faces), dtype=np.int64)
    for y in range(g.n_faces):
        init = np.full(g.n_faces, np.inf)
        init[y] = 0.0
        out[:, y] = _dijkstra(g.n_faces, t, h, w, init)
    return out


def exhaustive_support_height(g, covers, ref=None):
    """theta_hat by brute force over enumerated covers (oracle for small patches)."""
    from .covers import height_function

    ref = reference_cover(g) if ref is None else ref
    H = np.array([height_function(d, ref).values for d in covers])
    return np.max(H[:, :, None] - H[:, None, :], axis=0)


def _as_chi(g, chi):
    if isinstance(chi, dict):
        return {int(k): float(v) for k, v in chi.items()}
    bf = g.boundary_faces
    return {int(f): float(v) for f, v in zip(bf, chi)}


def graph_max_extension(g, chi, ref=None):
    """h_max(x) = min over boundary faces y of chi(y) + theta_hat(x, y)."""
    chi = _as_chi(g, chi)
    t, h, w = increment_arcs(g, ref)
    init = np.full(g.n_faces, np.inf)
    for f, v in chi.items():
        init[f] = v
    hmax = _dijkstra(g.n_faces, t, h, w, init)
    _check_boundary(g, chi, hmax, t, h, w, "max")
    return HeightFunction(g, np.rint(hmax).astype(np.int64), g.f0, meta={"kind": "max_extension"})


def graph_min_extension(g, chi, ref=None):
    """h_min(x) = max over boundary faces y of chi(y) - theta_hat(y, x)."""
    chi = _as_chi(g, chi)
    t, h, w = increment_arcs(g, ref)
    init = np.full(g.n_faces, np.inf)
    for f, v in chi.items():
        init[f] = -v
    neg = _dijkstra(g.n_faces, h, t, w, init)  # reversed arcs
    hmin = -neg
    _check_boundary(g, chi, hmin, t, h, w, "min")
    return HeightFunction(g, np.rint(hmin).astype(np.int64), g.f0, meta={"kind": "min_extension"})


def _check_boundary(g, chi, vals, t, h, w, which):
    for f, v in chi.items():
        if abs(vals[f] - v) > 1e-9:
            # locate the violating pair through a single-source search
            init = np.full(g.n_faces, np.inf)
            init[f] = 0.0
            if which == "max":
                dist = _dijkstra(g.n_faces, h, t, w, init)  # dist[y] = theta_hat(f, y)
                other = min(chi, key=lambda y: chi[y] + dist[y])
            else:
                dist = _dijkstra(g.n_faces, t, h, w, init)  # dist[y] = theta_hat(y, f)
                other = max(chi, key=lambda y: chi[y] - dist[y])
            raise NotExtendable(f"boundary values violate chi(x) - chi(y) <= theta_hat(x, y) at faces {f}, {other}",
                                pair=(int(f), int(other)))


def extension_criterion(g, chi, ref=None):
    """Whether chi(x) - chi(y) <= theta_hat(x, y) for all boundary faces."""
    try:
        graph_max_extension(g, chi, ref)
    except NotExtendable:
        return False
    return True


def nearest_face(g, point, internal_only=True):
    cent = g.face_centroids
    cand = g.internal_faces if internal_only and len(g.internal_faces) else np.arange(g.n_faces)
    d = np.linalg.norm(cent[cand] - np.asarray(point), axis=1)
    return int(cand[np.argmin(d)])


def normalized_support(fd, n, x, y, margin=0.25):
    """theta_hat between the faces nearest to x and y on an n-scaled patch, divided by n."""
    from .lattice import planar_patch

    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo = np.minimum(x, y) - margin
    hi = np.maximum(x, y) + margin
    region = [(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])]
    g = planar_patch(fd, n, region, collar=True)
    fx, fy = nearest_face(g, x), nearest_face(g, y)
    return support_height_function(g, fx, fy) / n


# ---------------------------------------------------------------------------
# discretization of asymptotic fields


def discretize(field_fn, g, chi_n=None, ref=None):
    """A genuine height function on patch ``g`` tracking ``n * h``.

    ``field_fn`` evaluates the asymptotic field at points (in the patch's
    coordinates, where one lattice period is ``1/n``).  The construction is
    ``eta_hat(x) = min_y floor(n h(y)) + theta_hat(x, y)`` over all faces,
    clamped between the graph min/max extensions of the boundary data
    ``chi_n`` (default: ``eta_hat`` on the boundary faces).
    """
    n = g.scale or 1
    cent = g.face_centroids
    init = np.floor(n * np.asarray(field_fn(cent), dtype=float) + 1e-9)
    t, h, w = increment_arcs(g, ref)
    eta_hat = _dijkstra(g.n_faces, t, h, w, init)
    bf = g.boundary_faces
    if chi_n is None:
        chi_n = {int(f): float(eta_hat[f]) for f in bf}
    hmax = graph_max_extension(g, chi_n, ref).values
    hmin = graph_min_extension(g, chi_n, ref).values
    eta = np.minimum(hmax, np.maximum(hmin, eta_hat))
    return HeightFunction(g, np.rint(eta).astype(np.int64), g.f0, meta={"kind": "discretized", "n": n})


def density_error(field_fn, eta, faces=None):
    """sup over faces of |h(centroid) - eta / n|."""
    g = eta.graph
    n = g.scale or 1
    faces = np.arange(g.n_faces) if faces is None else np.asarray(faces)
    cent = g.face_centroids[faces]
    return float(np.max(np.abs(np.asarray(field_fn(cent)) - eta.values[faces] / n)))


def support_envelope(eta, N):
    """min_y (eta(y)/n + theta(x - y)) at every face centroid x."""
    g = eta.graph
    n = g.scale or 1
    cent = g.face_centroids
    vals = eta.values / n
    out = np.empty(len(cent))
    for i in range(0, len(cent), 256):
        d = cent[i:i + 256, None, :] - cent[None, :, :]
        out[i:i + 256] = np.min(vals[None, :] + support_function(N, d), axis=1)
    return out


# ---------------------------------------------------------------------------
# piecewise-linear approximation


@dataclass
class PLApproximation:
    field: AsymptoticHeightField
    flagged: np.ndarray
    tri_error: np.ndarray

    def fraction_within(self, bound):
        return float(np.mean(self.tri_error <= bound))


def equilateral_mesh(polygon, ell):
    """Equilateral triangles of side ell whose vertices all lie in the polygon."""
    poly = np.asarray(polygon, dtype=float)
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    hgt = ell * np.sqrt(3) / 2
    nj = int(np.ceil((hi[1] - lo[1]) / hgt)) + 1
    ni = int(np.ceil((hi[0] - lo[0]) / ell)) + 2
    index = {}
    pts = []
    for j in range(nj + 1):
        for i in range(-1, ni + 1):
            p = (lo[0] + (i + 0.5 * (j % 2)) * ell, lo[1] + j * hgt)
            if points_in_polygon(np.array([p]), poly, tol=1e-9)[0]:
                index[(i, j)] = len(pts)
                pts.append(p)
    tris = []
    for (i, j), a in index.items():
        off = j % 2
        b = index.get((i + 1, j))
        c = index.get((i + off, j + 1))
        d = index.get((i + off - 1, j + 1))
        if b is not None and c is not None:
            tris.append((a, b, c))
        if c is not None and d is not None:
            tris.append((a, c, d))
    return np.asarray(pts), np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def pl_approximation(field_fn, polygon, ell, N=None, samples=4):
    """Interpolate ``field_fn`` on the equilateral ell-mesh.

    Reports per-triangle sup errors (on a barycentric sample grid) and the
    triangles whose gradient leaves ``N``.
    """
    P, T = equilateral_mesh(polygon, ell)
    vals = np.asarray(field_fn(P), dtype=float)
    fld = AsymptoticHeightField(P, vals, T, ell)
    bary = []
    for a in range(samples + 1):
        for b in range(samples + 1 - a):
            bary.append((a / samples, b / samples, 1 - (a + b) / samples))
    bary = np.asarray(bary)
    corners = P[T]  # (K, 3, 2)
    pts = np.einsum("sk,tkd->tsd", bary, corners)
    exact = np.asarray(field_fn(pts.reshape(-1, 2)), dtype=float).reshape(len(T), len(bary))
    interp = vals[T] @ bary.T
    err = np.max(np.abs(exact - interp), axis=1)
    flagged = fld.gradient_violations(N) if N is not None else np.zeros(0, dtype=np.int64)
    return PLApproximation(fld, flagged, err)
