"""Boltzmann measures on dimer covers and the cutting rule.

Everything here is exact enumeration; large graphs belong to
:mod:`dimerlab.kasteleyn`.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .covers import DimerCover, enumerate_covers, height_function, reference_cover
from .errors import BoundaryEdge, MalformedInput, NoCover, NotGeneralPosition
from .lattice import BLACK, WHITE, PlanarGraph


def _weights(g, w):
    if w is None:
        return np.asarray(g.weights, dtype=float)
    if isinstance(w, dict):
        out = np.asarray(g.weights, dtype=float).copy()
        for k, v in w.items():
            out[int(k)] = float(v)
        w = out
    w = np.asarray(w, dtype=float)
    if w.shape != (g.n_edges,):
        raise MalformedInput(f"expected {g.n_edges} weights, got shape {w.shape}")
    if np.any(w <= 0):
        raise MalformedInput("weights must be strictly positive")
    return w


def load_weights(g, path):
    """Read a JSON map edge-id -> weight; unspecified edges keep their weight."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise MalformedInput("weight file must be a JSON object")
    return _weights(g, data)


# ---------------------------------------------------------------------------
# boundary conditions


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary height function, compared up to an additive constant."""

    values: tuple  # (face, value) pairs sorted by face

    @classmethod
    def from_mapping(cls, mapping):
        return cls(tuple(sorted((int(f), int(v)) for f, v in mapping.items())))

    def normalized(self):
        if not self.values:
            return self
        base = self.values[0][1]
        return BoundaryCondition(tuple((f, v - base) for f, v in self.values))

    def as_dict(self):
        return dict(self.values)

    @classmethod
    def load(cls, path):
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_mapping(data)


def boundary_condition(d, ref=None):
    """Boundary condition of cover ``d`` (anchored at the first boundary face)."""
    h = height_function(d, ref)
    bf = d.graph.boundary_faces
    return BoundaryCondition(tuple(zip(bf.tolist(), h.values[bf].tolist()))).normalized()


def _matches(d, bc, ref):
    return boundary_condition(d, ref) == bc.normalized()


# ---------------------------------------------------------------------------
# partition functions and probabilities


def _covers(g, bc=None, covers=None, ref=None):
    covers = enumerate_covers(g) if covers is None else covers
    if bc is None:
        return covers
    ref = reference_cover(g) if ref is None else ref
    return [d for d in covers if _matches(d, bc, ref)]


def partition_function(g, w=None, bc=None, *, exact=False, log=False, covers=None):
    """Sum of cover weights, optionally restricted to a boundary condition.

    ``exact=True`` returns a :class:`fractions.Fraction` computed from the
    decimal representation of each weight; ``log=True`` returns ``log Z``
    computed with a log-sum-exp.  An empty sum gives 0 (or ``-inf``).
    """
    w = _weights(g, w)
    sel = _covers(g, bc, covers)
    if exact:
        fw = [Fraction(str(x)) for x in w]
        total = Fraction(0)
        for d in sel:
            p = Fraction(1)
            for e in d.edges:
                p *= fw[e]
            total += p
        return total
    if not sel:
        return -np.inf if log else 0.0
    logs = np.array([np.sum(np.log(w[d.edges])) for d in sel])
    lz = float(logsumexp(logs))
    return lz if log else float(np.exp(lz))


def boundary_partition_functions(g, w=None, covers=None):
    """Map each boundary condition occurring in ``g`` to its partition function."""
    w = _weights(g, w)
    covers = enumerate_covers(g) if covers is None else covers
    ref = reference_cover(g)
    out = defaultdict(float)
    for d in covers:
        out[boundary_condition(d, ref)] += float(np.prod(w[d.edges]))
    return dict(out)


def boltzmann_probability(d, w=None, bc=None):
    g = d.graph
    w = _weights(g, w)
    Z = partition_function(g, w, bc)
    if Z == 0:
        raise NoCover("no cover carries positive weight")
    return float(np.prod(w[d.edges])) / Z


def mean_height(g, w=None, bc=None, ref=None):
    """Expected height function under the Boltzmann measure."""
    w = _weights(g, w)
    ref = reference_cover(g) if ref is None else ref
    sel = _covers(g, bc, ref=ref)
    if not sel:
        raise NoCover("no cover satisfies the boundary condition")
    logs = np.array([np.sum(np.log(w[d.edges])) for d in sel])
    p = np.exp(logs - logsumexp(logs))
    H = np.array([height_function(d, ref).values for d in sel], dtype=float)
    return p @ H


# ---------------------------------------------------------------------------
# cutting


@dataclass
class CutResult:
    graph: PlanarGraph
    cut_edges: tuple
    partner: dict  # original edge id -> id of its second half

    @property
    def weights(self):
        return self.graph.weights

    def phi(self, d):
        """Image of a cover of the uncut graph."""
        extra = [self.partner[a] for a in self.cut_edges if a in set(d.edges.tolist())]
        return DimerCover(self.graph, list(d.edges) + extra)

    def __iter__(self):
        return iter((self.graph, self.graph.weights, self.phi))


def cut_edges(g, edges, w=None):
    """Cut a family of internal edges; the result does not depend on their order.

    Edge ``a`` keeps its id and becomes the half ``a'`` at the white end with
    weight ``w(a)``; its partner ``a''`` at the black end gets weight 1.
    """
    w = _weights(g, w)
    edges = sorted(set(int(a) for a in edges))
    for a in edges:
        if g.boundary[g.ewhite[a]] or g.boundary[g.eblack[a]]:
            raise BoundaryEdge(f"edge {a} touches the boundary")
    colors = list(g.colors)
    pos = [tuple(p) for p in g.pos]
    boundary = list(g.boundary)
    ew, eb = list(g.ewhite), list(g.eblack)
    weights = list(w)
    fd_edge = None if g.fd_edge is None else list(g.fd_edge)
    ref = None if g._reference is None else list(g._reference)
    partner = {}
    for a in edges:
        wv, bv = ew[a], eb[a]
        p, q = np.asarray(pos[wv]), np.asarray(pos[bv])
        colors.append(BLACK)
        pos.append(tuple(p + (q - p) / 3.0))
        boundary.append(True)
        v1 = len(colors) - 1
        colors.append(WHITE)
        pos.append(tuple(p + 2.0 * (q - p) / 3.0))
        boundary.append(True)
        v2 = len(colors) - 1
        eb[a] = v1
        ew.append(v2)
        eb.append(bv)
        weights.append(1.0)
        partner[a] = len(ew) - 1
        if fd_edge is not None:
            fd_edge.append(fd_edge[a])
        if ref is not None:
            ref.append(ref[a])
    out = PlanarGraph(colors, pos, ew, eb, weights, boundary, scale=g.scale, fd=g.fd,
                      fd_edge=fd_edge, reference=ref)
    return CutResult(out, tuple(edges), partner)


def cut_edge(g, a, w=None):
    """Cut one internal edge; returns ``(g', w', phi)``."""
    return tuple(cut_edges(g, [a], w))


@dataclass
class CurveCut:
    cut: CutResult
    crossings: list  # edge ids in order along the curve
    faces: list  # faces of the original graph met by the curve, in order
    components: list  # (graph, edge ids in the cut graph, face-origin array)
    pairing: dict  # original face -> list of (component, face) halves


def _segment_hits(a, b, p, q, tol):
    """Parameter along ab where it meets pq, classifying degenerate contacts."""
    d = b - a
    u = q - p
    den = d[0] * u[1] - d[1] * u[0]
    ap = p - a
    if abs(den) <= tol * np.linalg.norm(d) * np.linalg.norm(u):
        # parallel: touching counts as a non-transversal contact
        cross = ap[0] * d[1] - ap[1] * d[0]
        if abs(cross) <= tol * np.linalg.norm(d):
            t0 = np.dot(p - a, d) / np.dot(d, d)
            t1 = np.dot(q - a, d) / np.dot(d, d)
            if max(t0, t1) >= -tol and min(t0, t1) <= 1 + tol:
                return "parallel", None
        return None, None
    t = (ap[0] * u[1] - ap[1] * u[0]) / den
    s = (ap[0] * d[1] - ap[1] * d[0]) / den
    if -tol <= t <= 1 + tol and -tol <= s <= 1 + tol:
        if s <= tol or s >= 1 - tol:
            return "vertex", t
        return "cross", t
    return None, None


def curve_crossings(g, curve, tol=1e-9):
    """Edges crossed by a polyline in order, validating general position."""
    curve = np.asarray(curve, dtype=float)
    if len(curve) < 2:
        raise MalformedInput("a curve needs at least two points")
    for a in curve:
        if np.min(np.linalg.norm(g.pos - a, axis=1)) <= tol:
            raise NotGeneralPosition("disjoint from vertices", f"curve point {a.tolist()} is a vertex")
    hits = []
    for k in range(len(curve) - 1):
        a, b = curve[k], curve[k + 1]
        seg_hits = []
        for e in range(g.n_edges):
            p, q = g.pos[g.ewhite[e]], g.pos[g.eblack[e]]
            kind, t = _segment_hits(a, b, p, q, tol)
            if kind == "vertex":
                raise NotGeneralPosition("disjoint from vertices", f"curve passes through an endpoint of edge {e}")
            if kind == "parallel":
                raise NotGeneralPosition("transversal", f"curve runs along edge {e}")
            if kind == "cross":
                if (t <= tol and k > 0) or (t >= 1 - tol and k < len(curve) - 2):
                    raise NotGeneralPosition("transversal", f"curve bends on edge {e}")
                seg_hits.append((t, e))
        seg_hits.sort()
        for t, e in seg_hits:
            hits.append((e, b - a))
    edges = [e for e, _ in hits]
    if len(set(edges)) != len(edges):
        raise NotGeneralPosition("connected face intersections", "an edge is crossed twice")
    faces = []
    for e, direction in hits:
        u = g.pos[g.eblack[e]] - g.pos[g.ewhite[e]]
        l_to_r = (u[0] * direction[1] - u[1] * direction[0]) < 0
        before, after = (g.left[e], g.right[e]) if l_to_r else (g.right[e], g.left[e])
        if faces and faces[-1] != int(before):
            raise NotGeneralPosition("connected face intersections",
                                     f"curve leaves face {faces[-1]} without crossing an edge")
        if not faces:
            faces.append(int(before))
        faces.append(int(after))
    seen = {}
    for k, f in enumerate(faces):
        seen.setdefault(f, []).append(k)
    for f, ks in seen.items():
        closing = ks == [0, len(faces) - 1] and g.is_boundary_face[f] and g.face_area(f) < 0
        if len(ks) > 1 and not closing:
            raise NotGeneralPosition("connected face intersections", f"curve meets face {f} more than once")
    return edges, faces


def _face_origin(cut, g):
    """For each face of the cut graph, the face of ``g`` it comes from."""
    gc = cut.graph
    tail_edge_map = {}
    for a, b in cut.partner.items():
        tail_edge_map[b] = a
    origin = np.empty(gc.n_faces, dtype=np.int64)
    for f, walk in enumerate(gc.face_walks):
        d = walk[0]
        e = d // 2
        forward = d % 2 == 0
        if e < g.n_edges:
            orig = e
        else:
            orig = tail_edge_map[e]
        origin[f] = g.left[orig] if forward else g.right[orig]
    return origin


def cut_along_curve(g, curve, w=None, tol=1e-9):
    """Cut every edge crossed by a polyline in general position.

    Returns a :class:`CurveCut` with the connected components of the cut
    graph and, for every face of ``g`` met by the curve, the list of its
    halves as ``(component, face)`` pairs.
    """
    edges, faces = curve_crossings(g, curve, tol)
    cut = cut_edges(g, edges, w)
    gc = cut.graph
    origin = _face_origin(cut, g)
    comps = []
    comp_of_face = {}
    for ci, verts in enumerate(gc.components()):
        sub, keep_e = gc.induced(verts)
        # induced graphs keep edge order, so face walks map darts 1:1
        sub_origin = np.empty(sub.n_faces, dtype=np.int64)
        for f, walk in enumerate(sub.face_walks):
            d = walk[0]
            gc_dart = 2 * int(keep_e[d // 2]) + d % 2
            gc_face = _face_of_dart(gc, gc_dart)
            sub_origin[f] = origin[gc_face]
            comp_of_face[(ci, f)] = gc_face
        comps.append((sub, keep_e, sub_origin))
    met = set(faces)
    pairing = {f: [] for f in sorted(met)}
    for ci, (sub, _, sub_origin) in enumerate(comps):
        for f in range(sub.n_faces):
            if sub_origin[f] in met and sub.is_boundary_face[f]:
                touches_cut = any(
                    (int(keep) in cut.partner or int(keep) in cut.partner.values())
                    for keep in (comps[ci][1][d // 2] for d in sub.face_walks[f])
                )
                if touches_cut:
                    pairing[int(sub_origin[f])].append((ci, f))
    return CurveCut(cut, edges, faces, comps, pairing)


def _face_of_dart(g, d):
    e = d // 2
    return int(g.left[e]) if d % 2 == 0 else int(g.right[e])


def _restricted_reference(cc, ci, g_ref):
    """Reference cover of component ``ci`` obtained by cutting the reference of ``g``."""
    image = cc.cut.phi(g_ref)
    mask = image.mask
    sub, keep_e, _ = cc.components[ci]
    return DimerCover(sub, np.flatnonzero(mask[keep_e]))


def cutting_rule_sides(g, curve, bc, w=None):
    """Both sides of the cutting rule for a boundary condition ``bc`` on ``g``.

    The left side enumerates covers of ``g``.  The right side enumerates
    covers of each component separately, groups them by boundary height
    function and sums products over compatible pairs.
    """
    w = _weights(g, w)
    g = g.with_weights(w) if not np.array_equal(w, g.weights) else g
    ref = reference_cover(g)
    lhs = partition_function(g, w, bc)
    cc = cut_along_curve(g, curve, w)
    chi = bc.normalized().as_dict()
    g_bnd = set(g.boundary_faces.tolist())
    tables = []
    for ci, (sub, keep_e, origin) in enumerate(cc.components):
        sub_ref = _restricted_reference(cc, ci, ref)
        bf = sub.boundary_faces
        anchors = [f for f in bf if origin[f] in g_bnd]
        if not anchors:
            raise ValueError(f"component {ci} touches no boundary face of the original graph")
        anchor = anchors[0]
        const = chi[int(origin[anchor])]
        free = [int(f) for f in bf if origin[f] not in g_bnd]
        fixed = [int(f) for f in bf if origin[f] in g_bnd]
        table = defaultdict(float)
        for d in enumerate_covers(sub):
            vals = sub.integrate(d.chain - sub_ref.chain, anchor=anchor) + const
            if any(vals[f] != chi[int(origin[f])] for f in fixed):
                continue
            key = tuple((int(origin[f]), int(vals[f])) for f in free)
            table[key] += float(np.prod(sub.weights[d.edges]))
        tables.append(table)
    rhs = 0.0

    def combine(k, assigned, prod):
        nonlocal rhs
        if k == len(tables):
            rhs += prod
            return
        for key, z in tables[k].items():
            ok = True
            new = dict(assigned)
            for f, v in key:
                if new.setdefault(f, v) != v:
                    ok = False
                    break
            if ok:
                combine(k + 1, new, prod * z)

    combine(0, {}, 1.0)
    return lhs, rhs, cc
