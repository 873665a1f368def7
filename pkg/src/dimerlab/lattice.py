"""Periodic bipartite graphs, their torus quotients and planar patches.

Faces are never supplied by the user: they are traced from the rotation
system induced by vertex coordinates.  Darts are numbered ``2*e`` (white to
black) and ``2*e + 1`` (black to white); a face walk keeps its face on the
left, so for an edge ``e`` the face of dart ``2*e`` is the left face and the
face of dart ``2*e + 1`` the right face.
"""
from __future__ import annotations

import json
from collections import deque
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import EmptyPatch, InconsistentChain, InvalidGraph

WHITE, BLACK = 0, 1
_COLOR_NAMES = {"white": WHITE, "black": BLACK}


def _color(value):
    if isinstance(value, str):
        try:
            return _COLOR_NAMES[value.lower()]
        except KeyError:
            raise InvalidGraph(f"unknown color {value!r}") from None
    return int(value)


# ---------------------------------------------------------------------------
# rotation systems


def trace_faces(n_vertices, tail, head, vec, delta=None):
    """Trace face walks of an embedded graph given its darts.

    ``vec[d]`` is the displacement of dart ``d`` in the plane (or in the
    universal cover for torus graphs).  Returns ``(face_of_dart, walks,
    frames)`` where ``frames[d]`` is the lattice offset of the tail of ``d``
    relative to the first dart of its walk (all zero when ``delta`` is None).
    """
    n_darts = len(tail)
    angle = np.arctan2(vec[:, 1], vec[:, 0])
    rot = [[] for _ in range(n_vertices)]
    for d in np.lexsort((np.arange(n_darts), angle)):
        rot[tail[d]].append(int(d))
    slot = np.empty(n_darts, dtype=np.int64)
    for v in range(n_vertices):
        for k, d in enumerate(rot[v]):
            slot[d] = k

    def nxt(d):
        r = d ^ 1
        around = rot[head[d]]
        return around[(slot[r] - 1) % len(around)]

    face_of = np.full(n_darts, -1, dtype=np.int64)
    frames = np.zeros((n_darts, 2), dtype=np.int64)
    walks = []
    for start in range(n_darts):
        if face_of[start] >= 0:
            continue
        walk = []
        d = start
        offset = np.zeros(2, dtype=np.int64)
        while face_of[d] < 0:
            face_of[d] = len(walks)
            frames[d] = offset
            walk.append(d)
            if delta is not None:
                offset = offset + delta[d]
            d = nxt(d)
        if d != start:
            raise InvalidGraph("face traversal did not close; embedding is inconsistent")
        if delta is not None and np.any(offset != 0):
            raise InvalidGraph("a face wraps around the torus; fundamental domain is not embedded")
        walks.append(walk)
    return face_of, walks, frames


def _crossings(p, q, origin, period):
    """Signed number of lines ``origin + k*period`` crossed going from p to q."""
    return np.floor((q - origin) / period).astype(np.int64) - np.floor((p - origin) / period).astype(np.int64)


def _cut_coordinate(coords):
    """A cut position (mod 1) avoiding all vertex coordinates, near 0."""
    xs = np.sort(np.mod(coords, 1.0))
    gaps = []
    for k in range(len(xs)):
        a = xs[k]
        b = xs[k + 1] if k + 1 < len(xs) else xs[0] + 1.0
        gaps.append((a, b))
    for a, b in gaps:
        if a < 1.0 <= b or (a <= 0.0 < b):
            return float(np.mod(0.5 * (a + b), 1.0) if b - a > 1e-9 else a)
    a, b = max(gaps, key=lambda g: g[1] - g[0])
    return float(np.mod(0.5 * (a + b), 1.0))


# ---------------------------------------------------------------------------
# fundamental domains


class FundamentalDomain:
    """Colored vertices in the unit cell plus edges carrying Z^2 offsets."""

    def __init__(self, vertex_ids, colors, positions, edges, name=None):
        self.vertex_ids = tuple(str(v) for v in vertex_ids)
        self.colors = np.asarray([_color(c) for c in colors], dtype=np.int64)
        self.positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        index = {v: k for k, v in enumerate(self.vertex_ids)}
        ew, eb, off, wt = [], [], [], []
        for white, black, offset, weight in edges:
            ew.append(index[str(white)])
            eb.append(index[str(black)])
            off.append(tuple(int(o) for o in offset))
            wt.append(float(weight))
        self.ewhite = np.asarray(ew, dtype=np.int64)
        self.eblack = np.asarray(eb, dtype=np.int64)
        self.offsets = np.asarray(off, dtype=np.int64).reshape(-1, 2)
        self.weights = np.asarray(wt, dtype=float)
        self.name = name
        self._validate()

    def _validate(self):
        if len(self.vertex_ids) != len(set(self.vertex_ids)):
            raise InvalidGraph("duplicate vertex ids")
        if np.any(self.positions < 0) or np.any(self.positions >= 1):
            raise InvalidGraph("vertex positions must lie in [0,1)^2")
        if np.any(self.colors[self.ewhite] != WHITE) or np.any(self.colors[self.eblack] != BLACK):
            raise InvalidGraph("every edge must join a white vertex to a black vertex")
        if np.sum(self.colors == WHITE) != np.sum(self.colors == BLACK):
            raise InvalidGraph("fundamental domain needs equal numbers of black and white vertices")
        if np.any(self.weights <= 0):
            raise InvalidGraph("edge weights must be strictly positive")
        self._check_planar()

    def _check_planar(self):
        segs = []
        for cx in (-1, 0, 1):
            for cy in (-1, 0, 1):
                cell = np.array([cx, cy])
                for e in range(len(self.ewhite)):
                    p = self.positions[self.ewhite[e]] + cell
                    q = self.positions[self.eblack[e]] + cell + self.offsets[e]
                    segs.append((p, q))
        for i in range(len(segs)):
            for j in range(i + 1, len(segs)):
                if _segments_cross(*segs[i], *segs[j]):
                    raise InvalidGraph("edges of the periodic graph cross")

    @property
    def n_vertices(self):
        return len(self.vertex_ids)

    @property
    def n_edges(self):
        return len(self.ewhite)

    def with_weights(self, weights):
        edges = [
            (self.vertex_ids[w], self.vertex_ids[b], tuple(o), x)
            for w, b, o, x in zip(self.ewhite, self.eblack, self.offsets, weights)
        ]
        return FundamentalDomain(self.vertex_ids, self.colors, self.positions, edges, name=self.name)

    def edge_vector(self, e):
        return self.positions[self.eblack[e]] + self.offsets[e] - self.positions[self.ewhite[e]]

    @cached_property
    def cut_origin(self):
        """Positions (mod 1) of the vertical and horizontal homology cuts."""
        return np.array([_cut_coordinate(self.positions[:, 0]), _cut_coordinate(self.positions[:, 1])])

    def to_dict(self):
        return {
            "name": self.name,
            "vertices": [
                {"id": v, "color": "white" if c == WHITE else "black", "pos": [float(x) for x in p]}
                for v, c, p in zip(self.vertex_ids, self.colors, self.positions)
            ],
            "edges": [
                {
                    "white": self.vertex_ids[w],
                    "black": self.vertex_ids[b],
                    "offset": [int(o[0]), int(o[1])],
                    "weight": float(x),
                }
                for w, b, o, x in zip(self.ewhite, self.eblack, self.offsets, self.weights)
            ],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            verts = data["vertices"]
            return cls(
                [v["id"] for v in verts],
                [v["color"] for v in verts],
                [v["pos"] for v in verts],
                [(e["white"], e["black"], e.get("offset", (0, 0)), e.get("weight", 1.0)) for e in data["edges"]],
                name=data.get("name"),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidGraph(f"malformed fundamental domain: {exc}") from exc

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def __repr__(self):
        return f"FundamentalDomain({self.name or '?'}, V={self.n_vertices}, E={self.n_edges})"


def _segments_cross(p1, p2, q1, q2, eps=1e-12):
    """Proper crossing test; segments sharing an endpoint do not count."""
    for a in (p1, p2):
        for b in (q1, q2):
            if np.allclose(a, b, atol=1e-12):
                return False

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    ):
        return True
    return False


def load_preset(name):
    """Load a shipped fundamental domain (``square``, ``square2x2``, ``hexagonal``)."""
    text = resources.files("dimerlab.presets").joinpath(f"{name}.json").read_text(encoding="utf-8")
    data = json.loads(text)
    if data.get("kind", "fundamental_domain") != "fundamental_domain":
        raise InvalidGraph(f"preset {name!r} is not a fundamental domain")
    return FundamentalDomain.from_dict(data)


# ---------------------------------------------------------------------------
# torus quotients


class TorusGraph:
    """The quotient G(n) of the periodic graph by n Z^2."""

    def __init__(self, fd, n):
        if n < 1:
            raise ValueError("n must be a positive integer")
        self.fd = fd
        self.n = int(n)
        V1 = fd.n_vertices
        cells = [(i, j) for i in range(n) for j in range(n)]
        self.colors = np.tile(fd.colors, n * n)
        self.cell = np.repeat(np.asarray(cells, dtype=np.int64), V1, axis=0)
        self.fd_vertex = np.tile(np.arange(V1), n * n)
        self.pos = self.cell + fd.positions[self.fd_vertex]
        ew, eb, wraps, fde = [], [], [], []
        for ci, (i, j) in enumerate(cells):
            for e in range(fd.n_edges):
                dx, dy = fd.offsets[e]
                bi, bj = i + dx, j + dy
                ew.append(ci * V1 + fd.ewhite[e])
                eb.append(((bi % n) * n + (bj % n)) * V1 + fd.eblack[e])
                wraps.append((bi // n, bj // n))
                fde.append(e)
        self.ewhite = np.asarray(ew, dtype=np.int64)
        self.eblack = np.asarray(eb, dtype=np.int64)
        self.wraps = np.asarray(wraps, dtype=np.int64).reshape(-1, 2)
        self.fd_edge = np.asarray(fde, dtype=np.int64)
        self.weights = fd.weights[self.fd_edge].copy()
        self.boundary = np.zeros(len(self.colors), dtype=bool)

    @property
    def n_vertices(self):
        return len(self.colors)

    @property
    def n_edges(self):
        return len(self.ewhite)

    @property
    def internal(self):
        return ~self.boundary

    def edge_segment(self, e):
        p = self.pos[self.ewhite[e]]
        q = self.pos[self.eblack[e]] + self.n * self.wraps[e]
        return p, q

    @cached_property
    def crossing_numbers(self):
        """Signed crossings of each edge with the cuts x = x0 and y = y0 (mod n)."""
        origin = self.fd.cut_origin
        p = self.pos[self.ewhite]
        q = self.pos[self.eblack] + self.n * self.wraps
        kx = _crossings(p[:, 0], q[:, 0], origin[0], self.n)
        ky = _crossings(p[:, 1], q[:, 1], origin[1], self.n)
        return np.stack([kx, ky], axis=1)

    @cached_property
    def _faces(self):
        E = self.n_edges
        tail = np.empty(2 * E, dtype=np.int64)
        head = np.empty(2 * E, dtype=np.int64)
        tail[0::2], head[0::2] = self.ewhite, self.eblack
        tail[1::2], head[1::2] = self.eblack, self.ewhite
        vec = np.empty((2 * E, 2))
        fwd = self.pos[self.eblack] + self.n * self.wraps - self.pos[self.ewhite]
        vec[0::2], vec[1::2] = fwd, -fwd
        delta = np.empty((2 * E, 2), dtype=np.int64)
        delta[0::2], delta[1::2] = self.wraps, -self.wraps
        face_of, walks, frames = trace_faces(self.n_vertices, tail, head, vec, delta)
        return face_of, walks, frames

    @property
    def n_faces(self):
        return len(self._faces[1])

    @property
    def left(self):
        return self._faces[0][0::2]

    @property
    def right(self):
        return self._faces[0][1::2]

    def face_centroids(self):
        face_of, walks, frames = self._faces
        E = self.n_edges
        tails = np.concatenate([self.ewhite, self.eblack])
        out = np.zeros((len(walks), 2))
        for f, walk in enumerate(walks):
            pts = []
            for d in walk:
                v = self.ewhite[d // 2] if d % 2 == 0 else self.eblack[d // 2]
                pts.append(self.pos[v] + self.n * frames[d])
            out[f] = np.mean(pts, axis=0)
        del tails, E
        return out

    def integrate(self, chain):
        """Integrate an edge chain to heights on faces plus monodromy (s, t).

        Heights live on one lift of each face; moving a face by one period
        ``n`` in x (resp. y) adds ``s`` (resp. ``t``).
        """
        chain = np.asarray(chain)
        face_of, walks, frames = self._faces
        F = len(walks)
        h = np.full(F, np.nan)
        lift = np.zeros((F, 2), dtype=np.int64)
        h[0] = 0.0
        adj = [[] for _ in range(F)]
        for e in range(self.n_edges):
            dl, dr = 2 * e, 2 * e + 1
            L, R = face_of[dl], face_of[dr]
            # frame shift mapping R's frame into L's frame across this edge
            shift = frames[dl] + self.wraps[e] - frames[dr]
            adj[L].append((R, float(chain[e]), shift))
            adj[R].append((L, -float(chain[e]), -shift))
        rows, rhs = [], []
        queue = deque([0])
        seen = np.zeros(F, dtype=bool)
        seen[0] = True
        while queue:
            f = queue.popleft()
            for g, dh, shift in adj[f]:
                target_lift = lift[f] + shift
                value = h[f] + dh
                if not seen[g]:
                    seen[g] = True
                    h[g] = value
                    lift[g] = target_lift
                    queue.append(g)
                else:
                    m = target_lift - lift[g]
                    rows.append(m)
                    rhs.append(value - h[g])
        if rows:
            A = np.asarray(rows, dtype=float)
            b = np.asarray(rhs, dtype=float)
            sol, *_ = np.linalg.lstsq(A, b, rcond=None)
            if np.max(np.abs(A @ sol - b), initial=0.0) > 1e-9:
                raise InconsistentChain("edge chain is not closed on the torus")
        else:
            sol = np.zeros(2)
        return h, sol

    def __repr__(self):
        return f"TorusGraph(n={self.n}, V={self.n_vertices}, E={self.n_edges})"


def torus_quotient(fd, n):
    """Materialize G(n) with periodic weights and fixed homology cuts."""
    return TorusGraph(fd, n)


# ---------------------------------------------------------------------------
# planar graphs with boundary


class PlanarGraph:
    """A finite planar bipartite graph whose valence-one vertices may be boundary vertices.

    ``boundary[v]`` marks valence-one boundary vertices.  Faces split the
    complement of the graph; any face walk passing a boundary vertex is cut
    there, producing boundary faces.  A component without boundary vertices
    contributes its unbounded face as a single boundary face.
    """

    def __init__(self, colors, pos, ewhite, eblack, weights=None, boundary=None, *, scale=None,
                 fd=None, fd_edge=None, reference=None, labels=None):
        self.colors = np.asarray(colors, dtype=np.int64)
        self.pos = np.asarray(pos, dtype=float).reshape(-1, 2)
        self.ewhite = np.asarray(ewhite, dtype=np.int64)
        self.eblack = np.asarray(eblack, dtype=np.int64)
        E = len(self.ewhite)
        self.weights = np.ones(E) if weights is None else np.asarray(weights, dtype=float).copy()
        V = len(self.colors)
        self.boundary = np.zeros(V, dtype=bool) if boundary is None else np.asarray(boundary, dtype=bool)
        self.scale = scale
        self.fd = fd
        self.fd_edge = None if fd_edge is None else np.asarray(fd_edge, dtype=np.int64)
        self._reference = None if reference is None else np.asarray(reference, dtype=bool)
        self.labels = labels
        self._validate()

    def _validate(self):
        if np.any(self.colors[self.ewhite] != WHITE) or np.any(self.colors[self.eblack] != BLACK):
            raise InvalidGraph("every edge must join a white vertex to a black vertex")
        if np.any(self.weights <= 0):
            raise InvalidGraph("edge weights must be strictly positive")
        deg = self.degree
        if np.any(deg[self.boundary] != 1):
            raise InvalidGraph("boundary vertices must have valence exactly one")

    # basic accessors -------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.colors)

    @property
    def n_edges(self):
        return len(self.ewhite)

    @property
    def internal(self):
        return ~self.boundary

    @cached_property
    def degree(self):
        return np.bincount(np.concatenate([self.ewhite, self.eblack]), minlength=self.n_vertices)

    @cached_property
    def incident(self):
        inc = [[] for _ in range(self.n_vertices)]
        for e in range(self.n_edges):
            inc[self.ewhite[e]].append(e)
            inc[self.eblack[e]].append(e)
        return inc

    def edge_vector(self, e):
        return self.pos[self.eblack[e]] - self.pos[self.ewhite[e]]

    def with_weights(self, weights):
        g = self.copy()
        g.weights = np.asarray(weights, dtype=float).copy()
        g._validate()
        return g

    def copy(self):
        return PlanarGraph(self.colors, self.pos, self.ewhite, self.eblack, self.weights, self.boundary,
                           scale=self.scale, fd=self.fd, fd_edge=self.fd_edge,
                           reference=self._reference, labels=self.labels)

    # faces -------------------------------------------------------------------

    @cached_property
    def _faces(self):
        E = self.n_edges
        tail = np.empty(2 * E, dtype=np.int64)
        head = np.empty(2 * E, dtype=np.int64)
        tail[0::2], head[0::2] = self.ewhite, self.eblack
        tail[1::2], head[1::2] = self.eblack, self.ewhite
        vec = self.pos[head] - self.pos[tail]
        _, walks, _ = trace_faces(self.n_vertices, tail, head, vec)
        pieces, is_bnd = [], []
        for walk in walks:
            visits = [k for k, d in enumerate(walk) if self.boundary[head[d]]]
            if visits:
                k0 = visits[0]
                rolled = walk[k0 + 1:] + walk[: k0 + 1]
                current = []
                for d in rolled:
                    current.append(d)
                    if self.boundary[head[d]]:
                        pieces.append(current)
                        is_bnd.append(True)
                        current = []
                continue
            area = 0.0
            for d in walk:
                p, q = self.pos[tail[d]], self.pos[head[d]]
                area += p[0] * q[1] - p[1] * q[0]
            pieces.append(walk)
            is_bnd.append(area <= 1e-12)
        face_of = np.empty(2 * E, dtype=np.int64)
        for f, piece in enumerate(pieces):
            face_of[piece] = f
        return face_of, pieces, np.asarray(is_bnd, dtype=bool), tail, head

    @property
    def n_faces(self):
        return len(self._faces[1])

    @property
    def face_walks(self):
        return self._faces[1]

    @property
    def boundary_faces(self):
        return np.flatnonzero(self._faces[2])

    @property
    def internal_faces(self):
        return np.flatnonzero(~self._faces[2])

    @property
    def is_boundary_face(self):
        return self._faces[2]

    @property
    def f0(self):
        """Reference face: the first boundary face."""
        bf = self.boundary_faces
        return int(bf[0]) if len(bf) else 0

    @property
    def left(self):
        return self._faces[0][0::2]

    @property
    def right(self):
        return self._faces[0][1::2]

    def face_vertices(self, f):
        tail = self._faces[3]
        return [int(tail[d]) for d in self.face_walks[f]]

    def face_edges(self, f):
        return [d // 2 for d in self.face_walks[f]]

    @cached_property
    def face_centroids(self):
        tail, head = self._faces[3], self._faces[4]
        out = np.zeros((self.n_faces, 2))
        for f, walk in enumerate(self.face_walks):
            pts = [self.pos[tail[d]] for d in walk] + [self.pos[head[walk[-1]]]]
            out[f] = np.mean(pts, axis=0)
        return out

    def face_polygon(self, f):
        tail, head = self._faces[3], self._faces[4]
        walk = self.face_walks[f]
        pts = [self.pos[tail[d]] for d in walk]
        if self.is_boundary_face[f] and self.boundary[head[walk[-1]]]:
            pts.append(self.pos[head[walk[-1]]])
        return np.asarray(pts)

    def face_area(self, f):
        pts = self.face_polygon(f)
        x, y = pts[:, 0], pts[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @cached_property
    def dual_adjacency(self):
        """List per face of (neighbor face, edge, sign) with sign +1 when crossing left to right."""
        adj = [[] for _ in range(self.n_faces)]
        for e in range(self.n_edges):
            L, R = int(self.left[e]), int(self.right[e])
            adj[L].append((R, e, 1))
            adj[R].append((L, e, -1))
        return adj

    def dual_distances(self, sources):
        dist = np.full(self.n_faces, -1, dtype=np.int64)
        queue = deque()
        for s in sources:
            dist[s] = 0
            queue.append(s)
        while queue:
            f = queue.popleft()
            for g, _, _ in self.dual_adjacency[f]:
                if dist[g] < 0:
                    dist[g] = dist[f] + 1
                    queue.append(g)
        return dist

    def integrate(self, chain, anchor=None):
        """Heights on faces whose jump from left to right face of ``e`` is ``chain[e]``."""
        chain = np.asarray(chain)
        anchor = self.f0 if anchor is None else anchor
        dtype = np.int64 if np.issubdtype(chain.dtype, np.integer) else float
        h = np.zeros(self.n_faces, dtype=dtype)
        seen = np.zeros(self.n_faces, dtype=bool)
        seen[anchor] = True
        queue = deque([anchor])
        while queue:
            f = queue.popleft()
            for g, e, sign in self.dual_adjacency[f]:
                value = h[f] + sign * chain[e]
                if not seen[g]:
                    seen[g] = True
                    h[g] = value
                    queue.append(g)
                elif abs(h[g] - value) > 1e-9:
                    raise InconsistentChain(f"chain is not closed around face {g}")
        if not np.all(seen):
            # disconnected components are anchored independently
            for f in np.flatnonzero(~seen):
                if not seen[f]:
                    comp_anchor = self._component_anchor(f, seen)
                    sub = self._integrate_from(chain, comp_anchor, seen, h)
                    del sub
        return h

    def _component_anchor(self, f, seen):
        comp = []
        queue = deque([f])
        mark = {f}
        while queue:
            x = queue.popleft()
            comp.append(x)
            for g, _, _ in self.dual_adjacency[x]:
                if g not in mark and not seen[g]:
                    mark.add(g)
                    queue.append(g)
        bnd = [x for x in comp if self.is_boundary_face[x]]
        return min(bnd) if bnd else min(comp)

    def _integrate_from(self, chain, anchor, seen, h):
        h[anchor] = 0
        seen[anchor] = True
        queue = deque([anchor])
        while queue:
            f = queue.popleft()
            for g, e, sign in self.dual_adjacency[f]:
                value = h[f] + sign * chain[e]
                if not seen[g]:
                    seen[g] = True
                    h[g] = value
                    queue.append(g)
                elif abs(h[g] - value) > 1e-9:
                    raise InconsistentChain(f"chain is not closed around face {g}")
        return h

    # references and derived graphs ------------------------------------------

    @property
    def reference(self):
        """Reference cover as a boolean edge mask.

        Patches cut from a periodic graph use the periodic lift of the first
        cover of G(1); other graphs use their first enumerated cover.
        """
        if self._reference is None:
            from .covers import default_reference

            self._reference = default_reference(self)
        return self._reference

    def strip_boundary(self):
        """Drop boundary vertices and their edges."""
        keep_v = np.flatnonzero(~self.boundary)
        remap = -np.ones(self.n_vertices, dtype=np.int64)
        remap[keep_v] = np.arange(len(keep_v))
        keep_e = np.flatnonzero(~(self.boundary[self.ewhite] | self.boundary[self.eblack]))
        return PlanarGraph(
            self.colors[keep_v], self.pos[keep_v], remap[self.ewhite[keep_e]], remap[self.eblack[keep_e]],
            self.weights[keep_e], None, scale=self.scale, fd=self.fd,
            fd_edge=None if self.fd_edge is None else self.fd_edge[keep_e],
            labels=None if self.labels is None else [self.labels[v] for v in keep_v],
        )

    def induced(self, vertices):
        """Subgraph induced on ``vertices``; boundary flags kept where still valence one."""
        vertices = np.asarray(sorted(set(int(v) for v in vertices)), dtype=np.int64)
        remap = -np.ones(self.n_vertices, dtype=np.int64)
        remap[vertices] = np.arange(len(vertices))
        keep_e = np.flatnonzero((remap[self.ewhite] >= 0) & (remap[self.eblack] >= 0))
        g = PlanarGraph(
            self.colors[vertices], self.pos[vertices], remap[self.ewhite[keep_e]], remap[self.eblack[keep_e]],
            self.weights[keep_e], self.boundary[vertices], scale=self.scale, fd=self.fd,
            fd_edge=None if self.fd_edge is None else self.fd_edge[keep_e],
            reference=None if self._reference is None else self._reference[keep_e],
        )
        return g, keep_e

    def components(self):
        """Vertex sets of connected components, ordered by smallest vertex."""
        parent = list(range(self.n_vertices))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for w, b in zip(self.ewhite, self.eblack):
            rw, rb = find(int(w)), find(int(b))
            if rw != rb:
                parent[max(rw, rb)] = min(rw, rb)
        groups = {}
        for v in range(self.n_vertices):
            groups.setdefault(find(v), []).append(v)
        return [groups[k] for k in sorted(groups)]

    # serialization -----------------------------------------------------------

    def to_dict(self):
        ids = self.labels or [str(v) for v in range(self.n_vertices)]
        out = {
            "kind": "graph",
            "vertices": [
                {"id": ids[v], "color": "white" if self.colors[v] == WHITE else "black",
                 "pos": [float(self.pos[v, 0]), float(self.pos[v, 1])], "boundary": bool(self.boundary[v])}
                for v in range(self.n_vertices)
            ],
            "edges": [
                {"id": str(e), "white": ids[self.ewhite[e]], "black": ids[self.eblack[e]],
                 "weight": float(self.weights[e])}
                for e in range(self.n_edges)
            ],
        }
        if self.scale is not None:
            out["scale"] = self.scale
        return out

    @classmethod
    def from_dict(cls, data):
        try:
            verts = data["vertices"]
            ids = [str(v["id"]) for v in verts]
            index = {v: k for k, v in enumerate(ids)}
            colors = [_color(v["color"]) for v in verts]
            pos = [v["pos"] for v in verts]
            boundary = [bool(v.get("boundary", False)) for v in verts]
            ew = [index[str(e["white"])] for e in data["edges"]]
            eb = [index[str(e["black"])] for e in data["edges"]]
            wt = [float(e.get("weight", 1.0)) for e in data["edges"]]
        except (KeyError, TypeError) as exc:
            raise InvalidGraph(f"malformed graph file: {exc}") from exc
        return cls(colors, pos, ew, eb, wt, boundary, scale=data.get("scale"), labels=ids)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def __repr__(self):
        return (f"PlanarGraph(V={self.n_vertices}, E={self.n_edges}, "
                f"boundary={int(self.boundary.sum())})")


GraphWithBoundary = PlanarGraph


def points_in_polygon(points, polygon, tol=1e-12):
    """Closed point-in-polygon test (points on the boundary count as inside)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    poly = np.asarray(polygon, dtype=float)
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    on_edge = np.zeros(len(points), dtype=bool)
    m = len(poly)
    for k in range(m):
        (x1, y1), (x2, y2) = poly[k], poly[(k + 1) % m]
        cond = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= cond & (x < xint)
        dx, dy = x2 - x1, y2 - y1
        seg2 = dx * dx + dy * dy
        t = np.clip(((x - x1) * dx + (y - y1) * dy) / seg2, 0.0, 1.0)
        dist2 = (x - x1 - t * dx) ** 2 + (y - y1 - t * dy) ** 2
        on_edge |= dist2 <= tol * tol
    return inside | on_edge


def planar_patch(fd, n, region, collar=True):
    """Cut the n-rescaled periodic graph down to a closed polygonal region.

    Vertices whose rescaled position lies in the region are kept.  With
    ``collar`` each edge leaving the kept set is retained, its outer endpoint
    replaced by a fresh valence-one boundary vertex placed at the edge
    midpoint.
    """
    poly = np.asarray(region, dtype=float)
    lo = np.floor(poly.min(axis=0) * n).astype(int) - 2
    hi = np.ceil(poly.max(axis=0) * n).astype(int) + 2
    cells = np.array([(i, j) for i in range(lo[0], hi[0] + 1) for j in range(lo[1], hi[1] + 1)])
    V1 = fd.n_vertices
    cand_cell = np.repeat(cells, V1, axis=0)
    cand_v = np.tile(np.arange(V1), len(cells))
    cand_pos = (cand_cell + fd.positions[cand_v]) / n
    keep = points_in_polygon(cand_pos, poly)
    if not np.any(keep):
        raise EmptyPatch("no vertex of the rescaled graph lies in the region")
    index = {}
    colors, pos, labels = [], [], []
    for c, v, p in zip(cand_cell[keep], cand_v[keep], cand_pos[keep]):
        index[(int(c[0]), int(c[1]), int(v))] = len(colors)
        colors.append(fd.colors[v])
        pos.append(p)
        labels.append(f"{fd.vertex_ids[v]}@{int(c[0])},{int(c[1])}")
    n_internal = len(colors)
    boundary = [False] * n_internal
    ew, eb, fde = [], [], []
    for (i, j, v), vi in sorted(index.items(), key=lambda kv: kv[1]):
        if fd.colors[v] != WHITE:
            continue
        for e in np.flatnonzero(fd.ewhite == v):
            dx, dy = fd.offsets[e]
            key = (i + int(dx), j + int(dy), int(fd.eblack[e]))
            if key in index:
                ew.append(vi)
                eb.append(index[key])
                fde.append(int(e))
            elif collar:
                outer = (np.array(key[:2]) + fd.positions[key[2]]) / n
                pos.append(0.5 * (pos[vi] + outer))
                colors.append(BLACK)
                boundary.append(True)
                labels.append(f"~{fd.vertex_ids[key[2]]}@{key[0]},{key[1]}#{vi}")
                ew.append(vi)
                eb.append(len(colors) - 1)
                fde.append(int(e))
    for (i, j, v), vi in sorted(index.items(), key=lambda kv: kv[1]):
        if fd.colors[v] != BLACK or not collar:
            continue
        for e in np.flatnonzero(fd.eblack == v):
            dx, dy = fd.offsets[e]
            key = (i - int(dx), j - int(dy), int(fd.ewhite[e]))
            if key not in index:
                outer = (np.array(key[:2]) + fd.positions[key[2]]) / n
                pos.append(0.5 * (pos[vi] + outer))
                colors.append(WHITE)
                boundary.append(True)
                labels.append(f"~{fd.vertex_ids[key[2]]}@{key[0]},{key[1]}#{vi}")
                ew.append(len(colors) - 1)
                eb.append(vi)
                fde.append(int(e))
    if n_internal == 0:
        raise EmptyPatch("no internal vertex survives")
    g = PlanarGraph(colors, pos, ew, eb, fd.weights[np.asarray(fde, dtype=np.int64)], boundary,
                    scale=n, fd=fd, fd_edge=fde, labels=labels)
    g.region = poly
    return g


def aztec_diamond(order, collar=False):
    """Aztec diamond of the given order on the square lattice.

    In the coordinates of the ``square`` preset the diamond is the square
    ``[-1/2, 1/2]^2`` rescaled by ``order``.
    """
    fd = load_preset("square")
    region = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
    g = planar_patch(fd, order, region, collar=True)
    if collar:
        return g
    inner = g.strip_boundary()
    inner.region = g.region
    return inner


def grid_graph(rows, cols, collar=False, weights=None):
    """Axis-aligned ``rows x cols`` grid of the square lattice (unit spacing)."""
    colors, pos, index = [], [], {}
    for r in range(rows):
        for c in range(cols):
            index[(r, c)] = len(colors)
            colors.append(WHITE if (r + c) % 2 == 0 else BLACK)
            pos.append((c, r))
    boundary = [False] * len(colors)
    ew, eb = [], []

    def add(a, b):
        if colors[a] == WHITE:
            ew.append(a)
            eb.append(b)
        else:
            ew.append(b)
            eb.append(a)

    for r in range(rows):
        for c in range(cols):
            v = index[(r, c)]
            if c + 1 < cols:
                add(v, index[(r, c + 1)])
            if r + 1 < rows:
                add(v, index[(r + 1, c)])
    if collar:
        for r in range(rows):
            for c in range(cols):
                v = index[(r, c)]
                for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                    if (r + dr, c + dc) not in index:
                        colors.append(1 - colors[v])
                        pos.append((c + 0.5 * dc, r + 0.5 * dr))
                        boundary.append(True)
                        add(v, len(colors) - 1)
    E = len(ew)
    w = np.ones(E) if weights is None else np.asarray(weights, dtype=float)
    return PlanarGraph(colors, pos, ew, eb, w, boundary)


def cycle_graph(weights=(1.0, 1.0, 1.0, 1.0)):
    """The 4-cycle with weights listed in cyclic edge order."""
    colors = [WHITE, BLACK, WHITE, BLACK]
    pos = [(0, 0), (1, 0), (1, 1), (0, 1)]
    # cyclic edges: 0-1, 1-2, 2-3, 3-0
    ew = [0, 2, 2, 0]
    eb = [1, 1, 3, 3]
    return PlanarGraph(colors, pos, ew, eb, weights)


def hausdorff_to_region(g, region, samples=200):
    """Hausdorff distance between the internal vertices of a patch and a polygon."""
    poly = np.asarray(region, dtype=float)
    pts = g.pos[~g.boundary]
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    xs = np.linspace(lo[0], hi[0], samples)
    ys = np.linspace(lo[1], hi[1], samples)
    grid = np.array([(x, y) for x in xs for y in ys])
    grid = grid[points_in_polygon(grid, poly)]
    edge_pts = []
    for k in range(len(poly)):
        a, b = poly[k], poly[(k + 1) % len(poly)]
        for t in np.linspace(0, 1, samples):
            edge_pts.append(a + t * (b - a))
    region_pts = np.vstack([grid, np.asarray(edge_pts)])
    from scipy.spatial import cKDTree

    d_region, _ = cKDTree(pts).query(region_pts)
    inside = points_in_polygon(pts, poly)
    d_pts = 0.0 if np.all(inside) else float(np.max(_dist_to_polygon(pts[~inside], poly)))
    return max(float(np.max(d_region)), d_pts)


def _dist_to_polygon(points, poly):
    best = np.full(len(points), np.inf)
    for k in range(len(poly)):
        a, b = poly[k], poly[(k + 1) % len(poly)]
        ab = b - a
        t = np.clip(((points - a) @ ab) / (ab @ ab), 0, 1)
        proj = a + t[:, None] * ab
        best = np.minimum(best, np.linalg.norm(points - proj, axis=1))
    return best
