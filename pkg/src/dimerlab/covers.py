"""Dimer covers, height functions, slopes and absolute heights.

A cover is stored as a sorted array of edge ids.  Under the bipartite
orientation (white to black) a cover is the 1-chain with coefficient 1 on
each of its edges.  Heights live on faces: crossing edge ``e`` from its left
face to its right face adds the chain coefficient of ``e``.
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidGraph, NoCover, NotRegular, TooLarge
from .lattice import BLACK, WHITE, PlanarGraph, TorusGraph, torus_quotient

DEFAULT_GUARD = 40


# ---------------------------------------------------------------------------
# covers


class DimerCover:
    """A dimer cover of a graph with boundary, or of a torus graph."""

    def __init__(self, graph, edges, validate=True):
        self.graph = graph
        self.edges = np.asarray(sorted(int(e) for e in edges), dtype=np.int64)
        if validate:
            self._validate()

    @property
    def mask(self):
        m = np.zeros(self.graph.n_edges, dtype=bool)
        m[self.edges] = True
        return m

    @property
    def chain(self):
        """Coefficients of the cover as a 1-chain (white to black orientation)."""
        return self.mask.astype(np.int64)

    def matched_count(self):
        g = self.graph
        return np.bincount(np.concatenate([g.ewhite[self.edges], g.eblack[self.edges]]),
                           minlength=g.n_vertices)

    def _validate(self):
        cnt = self.matched_count()
        internal = ~self.graph.boundary
        if np.any(cnt[internal] != 1):
            raise InvalidGraph("edge set does not cover every internal vertex exactly once")
        if np.any(cnt > 1):
            raise InvalidGraph("a vertex is covered twice")

    @property
    def unmatched_boundary(self):
        """The set of boundary vertices left unmatched."""
        cnt = self.matched_count()
        return tuple(int(v) for v in np.flatnonzero(self.graph.boundary & (cnt == 0)))

    delta = unmatched_boundary

    def boundary_chain(self):
        """0-chain ``∂D`` (black vertices +1, white vertices -1)."""
        g = self.graph
        out = np.zeros(g.n_vertices, dtype=np.int64)
        np.add.at(out, g.eblack[self.edges], 1)
        np.add.at(out, g.ewhite[self.edges], -1)
        return out

    def delta_chain(self):
        g = self.graph
        out = np.zeros(g.n_vertices, dtype=np.int64)
        for v in self.unmatched_boundary:
            out[v] = 1 if g.colors[v] == BLACK else -1
        return out

    def weight(self, weights=None):
        w = self.graph.weights if weights is None else np.asarray(weights)
        return float(np.prod(w[self.edges]))

    def to_list(self):
        return [int(e) for e in self.edges]

    def key(self):
        return tuple(int(e) for e in self.edges)

    def __eq__(self, other):
        return isinstance(other, DimerCover) and other.graph is self.graph and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"DimerCover({self.to_list()})"


def bipartite_structure(g):
    """The 0-chain β: +1 on black vertices, -1 on white vertices."""
    return np.where(g.colors == BLACK, 1, -1).astype(np.int64)


def _internal_count(g):
    return int(np.sum(~g.boundary))


def _matching_search(g, unmatched=None, limit=None):
    """Yield covers as lists of edge ids.

    ``unmatched`` is None for free boundary conditions, otherwise the exact
    set of boundary vertices that must stay unmatched.
    """
    V = g.n_vertices
    inc = [[] for _ in range(V)]
    for e in range(g.n_edges):
        inc[int(g.ewhite[e])].append(e)
        inc[int(g.eblack[e])].append(e)
    other = np.empty((g.n_edges, 2), dtype=np.int64)
    other[:, 0], other[:, 1] = g.ewhite, g.eblack
    required = ~g.boundary.copy()
    forbidden = np.zeros(V, dtype=bool)
    if unmatched is not None:
        unmatched = set(int(v) for v in unmatched)
        for v in np.flatnonzero(g.boundary):
            if int(v) in unmatched:
                forbidden[v] = True
            else:
                required[v] = True
    used = forbidden.copy()
    chosen = []
    found = [0]

    def available(v):
        out = []
        for e in inc[v]:
            a, b = other[e]
            u = b if a == v else a
            if not used[u]:
                out.append(e)
        return out

    def recurse():
        best, best_opts = -1, None
        for v in range(V):
            if required[v] and not used[v]:
                opts = available(v)
                if not opts:
                    return
                if best_opts is None or len(opts) < len(best_opts):
                    best, best_opts = v, opts
                    if len(opts) == 1:
                        break
        if best_opts is None:
            found[0] += 1
            yield list(chosen)
            return
        for e in best_opts:
            a, b = other[e]
            used[a] = used[b] = True
            chosen.append(e)
            yield from recurse()
            chosen.pop()
            used[a] = used[b] = False
            if limit is not None and found[0] >= limit:
                return

    yield from recurse()


def enumerate_covers(g, bc=None, *, max_internal=DEFAULT_GUARD, override=False):
    """All dimer covers of ``g`` in lexicographic order of their edge-id tuples.

    ``bc`` is the set of unmatched boundary vertices to impose; ``None``
    leaves boundary vertices free.
    """
    if not override and _internal_count(g) > max_internal:
        raise TooLarge(f"{_internal_count(g)} internal vertices exceeds the enumeration guard {max_internal}")
    raw = [tuple(sorted(c)) for c in _matching_search(g, bc)]
    raw.sort()
    return [DimerCover(g, c, validate=False) for c in raw]


def count_covers(g, bc=None, **kw):
    return len(enumerate_covers(g, bc, **kw))


def first_cover(g):
    """Lexicographically first cover for small graphs, else a maximum matching."""
    if _internal_count(g) <= DEFAULT_GUARD and g.n_edges <= 120:
        covers = enumerate_covers(g)
        if not covers:
            raise NoCover("graph admits no dimer cover")
        return covers[0]
    return matching_cover(g)


def matching_cover(g):
    """Some cover found by maximum bipartite matching (boundary vertices optional)."""
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import maximum_bipartite_matching

    whites = np.flatnonzero(g.colors == WHITE)
    blacks = np.flatnonzero(g.colors == BLACK)
    wi = -np.ones(g.n_vertices, dtype=np.int64)
    bi = -np.ones(g.n_vertices, dtype=np.int64)
    wi[whites] = np.arange(len(whites))
    bi[blacks] = np.arange(len(blacks))
    # Internal vertices must be covered; boundary vertices are optional.  Give
    # every boundary vertex a private dummy partner on the other side so a
    # perfect matching of the augmented graph always corresponds to a cover.
    nbw = [v for v in whites if g.boundary[v]]
    nbb = [v for v in blacks if g.boundary[v]]
    n_rows = len(whites) + len(nbb)
    n_cols = len(blacks) + len(nbw)
    rows, cols = list(wi[g.ewhite]), list(bi[g.eblack])
    for k, v in enumerate(nbw):
        rows.append(wi[v])
        cols.append(len(blacks) + k)
    for k, v in enumerate(nbb):
        rows.append(len(whites) + k)
        cols.append(bi[v])
    if n_rows != n_cols:
        raise NoCover("graph admits no dimer cover")
    A = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_rows, n_cols))
    match = maximum_bipartite_matching(A, perm_type="column")
    if np.any(match < 0):
        raise NoCover("graph admits no dimer cover")
    lookup = {(int(wi[w]), int(bi[b])): e for e, (w, b) in enumerate(zip(g.ewhite, g.eblack))}
    edges = []
    for r in range(len(whites)):
        c = int(match[r])
        if c < len(blacks):
            edges.append(lookup[(r, c)])
    return DimerCover(g, edges)


def periodic_reference(fd):
    """Edge ids of the fundamental domain forming the first cover of G(1)."""
    t = torus_quotient(fd, 1)
    covers = enumerate_covers(t)
    if not covers:
        raise NoCover("G(1) admits no dimer cover")
    return set(int(t.fd_edge[e]) for e in covers[0].edges)


def default_reference(g):
    """Reference cover mask used by heights when none is supplied."""
    if getattr(g, "fd", None) is not None and g.fd_edge is not None:
        m0 = periodic_reference(g.fd)
        mask = np.isin(g.fd_edge, list(m0))
        cnt = np.bincount(np.concatenate([g.ewhite[mask], g.eblack[mask]]), minlength=g.n_vertices)
        if np.all(cnt[~g.boundary] == 1) and np.all(cnt <= 1):
            return mask
    return first_cover(g).mask


def reference_cover(g):
    if isinstance(g, TorusGraph):
        return enumerate_covers(g, override=True)[0] if g.n_vertices <= 2 * DEFAULT_GUARD else matching_cover(g)
    return DimerCover(g, np.flatnonzero(g.reference))


# ---------------------------------------------------------------------------
# heights


@dataclass
class HeightFunction:
    """Face values with ``values[anchor] == 0``.

    Values are integers; ``denominator`` is larger than one for absolute
    heights, whose true values are ``values / denominator``.  On a torus the
    values refer to one lift of each face and ``monodromy`` holds the change
    per period in x and y (in the same units as ``values``).
    """

    graph: object
    values: np.ndarray
    anchor: int = 0
    monodromy: tuple | None = None
    denominator: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def real(self):
        return self.values / self.denominator

    def boundary_values(self):
        bf = self.graph.boundary_faces
        return dict(zip(bf.tolist(), self.values[bf].tolist()))

    def __sub__(self, other):
        if other.graph is not self.graph or other.denominator != self.denominator:
            raise ValueError("height functions live on different graphs or scales")
        mono = None
        if self.monodromy is not None:
            mono = tuple(a - b for a, b in zip(self.monodromy, other.monodromy))
        return HeightFunction(self.graph, self.values - other.values, self.anchor, mono, self.denominator)

    def __add__(self, other):
        mono = None
        if self.monodromy is not None:
            mono = tuple(a + b for a, b in zip(self.monodromy, other.monodromy))
        return HeightFunction(self.graph, self.values + other.values, self.anchor, mono, self.denominator)

    def to_csv(self, path):
        g = self.graph
        cent = g.face_centroids if isinstance(g, PlanarGraph) else g.face_centroids()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "value"])
            for (x, y), v in zip(cent, self.real):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])


def _as_cover(g, d):
    if isinstance(d, DimerCover):
        return d
    return DimerCover(g, d)


def height_function(d, ref=None):
    """Height function of ``d`` relative to ``ref`` (default: the graph's reference cover)."""
    g = d.graph
    ref = reference_cover(g) if ref is None else _as_cover(g, ref)
    if ref.graph is not g:
        raise ValueError("covers live on different graphs")
    chain = d.chain - ref.chain
    if isinstance(g, TorusGraph):
        values, mono = g.integrate(chain)
        vals = np.rint(values).astype(np.int64)
        return HeightFunction(g, vals, 0, tuple(int(round(m)) for m in mono))
    return HeightFunction(g, g.integrate(chain), g.f0)


def slope(d, ref):
    """Intersection numbers of the cycle ``d - ref`` with the two homology cuts."""
    g = d.graph
    if not isinstance(g, TorusGraph):
        raise TypeError("slopes are defined for torus graphs")
    c = d.chain - _as_cover(g, ref).chain
    k = g.crossing_numbers
    return int(np.dot(c, k[:, 1])), int(-np.dot(c, k[:, 0]))


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points):
    """Integer convex hull in counter-clockwise order (collinear points dropped)."""
    pts = sorted(set((int(p[0]), int(p[1])) for p in points))
    if len(pts) <= 2:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


@dataclass
class NewtonPolygon:
    """Slopes of the covers of G(1) and their convex hull."""

    slopes: list
    vertices: list
    shift: tuple = (0, 0)

    @property
    def vertex_array(self):
        return np.asarray(self.vertices, dtype=float).reshape(-1, 2)

    def contains(self, p, tol=1e-12):
        v = self.vertex_array
        p = np.asarray(p, dtype=float)
        if len(v) == 1:
            return bool(np.linalg.norm(p - v[0]) <= tol)
        if len(v) == 2:
            a, b = v
            ab = b - a
            t = np.dot(p - a, ab) / np.dot(ab, ab)
            return bool(-tol <= t <= 1 + tol and np.linalg.norm(a + t * ab - p) <= tol)
        for k in range(len(v)):
            if _cross(v[k], v[(k + 1) % len(v)], p) < -tol:
                return False
        return True

    def interior_contains(self, p, tol=1e-12):
        v = self.vertex_array
        if len(v) < 3:
            return False
        return all(_cross(v[k], v[(k + 1) % len(v)], p) > tol for k in range(len(v)))

    def area(self):
        v = self.vertex_array
        if len(v) < 3:
            return 0.0
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def lattice_points(self):
        v = self.vertex_array
        lo = np.floor(v.min(axis=0)).astype(int)
        hi = np.ceil(v.max(axis=0)).astype(int)
        return [(i, j) for i in range(lo[0], hi[0] + 1) for j in range(lo[1], hi[1] + 1)
                if self.contains((i, j))]


def newton_polygon(fd):
    """Convex hull of the slopes of all covers of G(1), measured from the first cover."""
    t = torus_quotient(fd, 1)
    covers = enumerate_covers(t, override=True)
    if not covers:
        raise NoCover("G(1) admits no dimer cover")
    ref = covers[0]
    pts = [slope(c, ref) for c in covers]
    return NewtonPolygon(sorted(set(pts)), convex_hull(pts), (0, 0))


# ---------------------------------------------------------------------------
# absolute heights and the local rule


def regular_valence(g):
    """Common valence of all internal vertices, or raise NotRegular."""
    deg = g.degree if isinstance(g, PlanarGraph) else np.bincount(
        np.concatenate([g.ewhite, g.eblack]), minlength=g.n_vertices)
    vals = np.unique(deg[~g.boundary])
    if len(vals) != 1:
        raise NotRegular(f"internal vertex valences differ: {vals.tolist()}")
    return int(vals[0])


def absolute_height(d):
    """Absolute height of ``d``, returned scaled by the valence (integer values)."""
    g = d.graph
    N = regular_valence(g)
    chain = N * d.chain - 1
    if isinstance(g, TorusGraph):
        values, mono = g.integrate(chain)
        return HeightFunction(g, np.rint(values).astype(np.int64), 0,
                              tuple(int(round(m)) for m in mono), denominator=N)
    return HeightFunction(g, g.integrate(chain), g.f0, denominator=N)


def _scaled_values(f, g, N):
    if isinstance(f, HeightFunction):
        vals = np.asarray(f.values, dtype=float) * (N / f.denominator)
    else:
        vals = np.asarray([float(x) for x in f], dtype=float) * N
    r = np.rint(vals)
    if np.max(np.abs(vals - r), initial=0.0) > 1e-9:
        return None
    return r.astype(np.int64)


def check_local_rule(f, g):
    """Whether face function ``f`` obeys the local rule of absolute heights.

    Crossing an edge from its right face to its left face turns clockwise
    around the black endpoint and counter-clockwise around the white one.
    The rule asks that this crossing raises ``f`` by ``1/N`` on all edges at
    an internal vertex but one, where it drops by ``(N-1)/N``.
    """
    N = regular_valence(g)
    H = _scaled_values(f, g, N)
    if H is None or len(H) != g.n_faces:
        return False
    jump = H[g.left] - H[g.right]
    if np.any((jump != 1) & (jump != 1 - N)):
        return False
    dimer = jump == 1 - N
    cnt = np.bincount(np.concatenate([g.ewhite[dimer], g.eblack[dimer]]), minlength=g.n_vertices)
    return bool(np.all(cnt[~g.boundary] == 1) and np.all(cnt <= 1))


def cover_from_local_rule(f, g):
    """Inverse of :func:`absolute_height` on functions obeying the local rule."""
    if not check_local_rule(f, g):
        raise ValueError("function does not satisfy the local rule")
    N = regular_valence(g)
    H = _scaled_values(f, g, N)
    return DimerCover(g, np.flatnonzero(H[g.left] - H[g.right] == 1 - N))


def count_local_rule_functions(g):
    """Count face functions with value 0 at ``f0`` that obey the local rule.

    Independent of cover enumeration: a depth-first search over face values
    in which each newly reached face takes one of the two allowed jumps,
    pruned as soon as all edges at a vertex have known jumps.
    """
    N = regular_valence(g)
    F = g.n_faces
    order, parent = [], {}
    seen = {g.f0}
    queue = deque([g.f0])
    while queue:
        f = queue.popleft()
        order.append(f)
        for h, e, sign in g.dual_adjacency[f]:
            if h not in seen:
                seen.add(h)
                parent[h] = (f, e, sign)
                queue.append(h)
    rank = {f: k for k, f in enumerate(order)}
    # edge becomes decided when both its faces are assigned
    edge_ready = np.array([max(rank[int(g.left[e])], rank[int(g.right[e])]) for e in range(g.n_edges)])
    vertex_ready = np.zeros(g.n_vertices, dtype=np.int64)
    for e in range(g.n_edges):
        for v in (g.ewhite[e], g.eblack[e]):
            vertex_ready[v] = max(vertex_ready[v], edge_ready[e])
    edges_at = [[] for _ in range(F)]
    for e in range(g.n_edges):
        edges_at[edge_ready[e]].append(e)
    verts_at = [[] for _ in range(F)]
    for v in range(g.n_vertices):
        verts_at[vertex_ready[v]].append(v)
    H = np.zeros(F, dtype=np.int64)
    count = [0]

    def ok_at(k):
        for e in edges_at[k]:
            j = H[g.left[e]] - H[g.right[e]]
            if j != 1 and j != 1 - N:
                return False
        for v in verts_at[k]:
            n_dimer = sum(1 for e in g.incident[v] if H[g.left[e]] - H[g.right[e]] == 1 - N)
            if n_dimer > 1 or (n_dimer == 0 and not g.boundary[v]):
                return False
        return True

    def dfs(k):
        if k == len(order):
            count[0] += 1
            return
        f = order[k]
        p, e, sign = parent[f]
        # crossing from p to f is left->right when sign == +1
        for jump in (1, 1 - N):  # value of H[left] - H[right]
            H[f] = H[p] - sign * jump
            if ok_at(k):
                dfs(k + 1)

    if ok_at(0):
        dfs(1)
    return count[0]


@dataclass
class LipschitzReport:
    ok: bool
    unreachable: int
    worst_slack: float

    def __bool__(self):
        return self.ok


def oriented_distances(g):
    """All-pairs lengths of shortest oriented dual paths (edges crossed right to left)."""
    F = g.n_faces
    out = [[] for _ in range(F)]
    for e in range(g.n_edges):
        out[int(g.right[e])].append(int(g.left[e]))
    dist = np.full((F, F), -1, dtype=np.int64)
    for s in range(F):
        dist[s, s] = 0
        queue = deque([s])
        while queue:
            f = queue.popleft()
            for h in out[f]:
                if dist[s, h] < 0:
                    dist[s, h] = dist[s, f] + 1
                    queue.append(h)
    return dist


def modified_lipschitz_check(d, dist=None):
    """Check ``h(f1) - h(f2) <= pi(f2, f1) / N`` for every reachable face pair."""
    g = d.graph
    H = absolute_height(d).values
    dist = oriented_distances(g) if dist is None else dist
    reach = dist >= 0
    # dist[a, b] is the oriented path length from a to b; the bound is on H[b] - H[a]
    slack = np.where(reach, dist - (H[None, :] - H[:, None]), np.inf)
    worst = float(np.min(slack))
    return LipschitzReport(bool(worst >= 0), int(np.sum(~reach)), worst)


def reconstruct_delta(g, boundary_heights, ref):
    """Unmatched boundary vertices of a cover from its boundary heights relative to ``ref``."""
    ref = _as_cover(g, ref)
    refmask = ref.mask
    unmatched = []
    for v in np.flatnonzero(g.boundary):
        e = g.incident[v][0]
        jump = boundary_heights[int(g.right[e])] - boundary_heights[int(g.left[e])]
        if refmask[e] + jump == 0:
            unmatched.append(int(v))
    return tuple(unmatched)


def save_covers(covers, path):
    import json

    with open(path, "w", encoding="utf-8") as fh:
        json.dump([c.to_list() for c in covers], fh)


def load_covers(g, path):
    import json

    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return [DimerCover(g, c) for c in data]
