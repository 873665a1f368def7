"""Markov chain sampling of dimer covers with a fixed boundary condition.

Moves are face rotations: an internal face whose boundary edges alternate
in and out of the cover is flipped with Metropolis probability
``min(1, w(D')/w(D))``.  A flip changes the height of that face alone, by
one unit, so heights are updated incrementally and time-averaged with
per-face clocks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .covers import DimerCover, height_function, reconstruct_delta, reference_cover
from .errors import NoCover, NotExtendable
from .gibbs import BoundaryCondition, _weights, boundary_condition
from .lattice import BLACK, WHITE


# ---------------------------------------------------------------------------
# face tables


@dataclass
class FaceTable:
    """Internal faces with simple boundary walks, padded edge lists and height signs."""

    faces: np.ndarray     # face ids
    edges: np.ndarray     # (K, maxlen) edge ids in walk order
    length: np.ndarray    # walk length per face
    sign: np.ndarray      # dh(face) = sign * dD(first edge)


def face_table(g):
    faces, rows, lens, signs = [], [], [], []
    for f in g.internal_faces:
        walk = [d // 2 for d in g.face_walks[f]]
        if len(walk) % 2 or len(set(walk)) != len(walk):
            continue
        e0 = walk[0]
        # h(R) - h(L) = D - D' so the right face moves with D, the left against it
        signs.append(1 if int(g.right[e0]) == f else -1)
        faces.append(int(f))
        rows.append(walk)
        lens.append(len(walk))
    width = max(lens, default=0)
    E = -np.ones((len(rows), width), dtype=np.int64)
    for k, r in enumerate(rows):
        E[k, :len(r)] = r
    return FaceTable(np.asarray(faces, dtype=np.int64), E, np.asarray(lens, dtype=np.int64),
                     np.asarray(signs, dtype=np.int64))


@numba.njit(cache=True)
def _try_flip(mask, fe, L, logw):
    first = mask[fe[0]]
    dlog = 0.0
    for j in range(L):
        e = fe[j]
        expect = first if j % 2 == 0 else 1 - first
        if mask[e] != expect:
            return False, 0.0, first
        dlog += logw[e] if mask[e] == 0 else -logw[e]
    return True, dlog, first


@numba.njit(cache=True)
def _run_chain(mask, h, fe, flen, fsign, fid, logw, picks, us, t0, acc, last):
    accepted = 0
    for k in range(picks.shape[0]):
        i = picks[k]
        ok, dlog, first = _try_flip(mask, fe[i], flen[i], logw)
        if not ok:
            continue
        if dlog < 0.0 and us[k] >= np.exp(dlog):
            continue
        for j in range(flen[i]):
            mask[fe[i, j]] ^= 1
        f = fid[i]
        t = t0 + k
        acc[f] += h[f] * (t - last[f])
        last[f] = t
        h[f] += -fsign[i] if first == 1 else fsign[i]
        accepted += 1
    return accepted


@numba.njit(cache=True)
def _flush(h, acc, last, t):
    for f in range(h.shape[0]):
        acc[f] += h[f] * (t - last[f])
        last[f] = t


# ---------------------------------------------------------------------------
# chain state


def cover_with_unmatched(g, unmatched):
    """A cover leaving exactly ``unmatched`` boundary vertices free."""
    unmatched = set(int(v) for v in unmatched)
    need = np.array([(not g.boundary[v]) or (v not in unmatched) for v in range(g.n_vertices)])
    whites = np.flatnonzero((g.colors == WHITE) & need)
    blacks = np.flatnonzero((g.colors == BLACK) & need)
    if len(whites) != len(blacks):
        raise NoCover("boundary condition leaves unequal colour classes")
    wi = -np.ones(g.n_vertices, dtype=np.int64)
    bi = -np.ones(g.n_vertices, dtype=np.int64)
    wi[whites] = np.arange(len(whites))
    bi[blacks] = np.arange(len(blacks))
    ok = (wi[g.ewhite] >= 0) & (bi[g.eblack] >= 0)
    es = np.flatnonzero(ok)
    A = csr_matrix((np.ones(len(es)), (wi[g.ewhite[es]], bi[g.eblack[es]])), shape=(len(whites), len(blacks)))
    match = maximum_bipartite_matching(A, perm_type="column")
    if np.any(match < 0):
        raise NoCover("no cover with this boundary condition")
    lookup = {(int(wi[g.ewhite[e]]), int(bi[g.eblack[e]])): int(e) for e in es}
    return DimerCover(g, [lookup[(r, int(c))] for r, c in enumerate(match)])


def initial_cover(g, bc, ref=None):
    """A cover realizing the boundary height function ``bc`` (up to a constant)."""
    ref = reference_cover(g) if ref is None else ref
    bc = bc if isinstance(bc, BoundaryCondition) else BoundaryCondition.from_mapping(bc)
    chi = bc.as_dict()
    heights = np.zeros(g.n_faces, dtype=np.int64)
    for f, v in chi.items():
        heights[f] = v
    delta = reconstruct_delta(g, heights, ref)
    try:
        d = cover_with_unmatched(g, delta)
    except NoCover as exc:
        raise NotExtendable(f"boundary condition is not realizable: {exc}", None) from exc
    if boundary_condition(d, ref).normalized() != bc.normalized():
        raise NotExtendable("boundary heights are not realized by any cover", None)
    return d


@dataclass
class ChainState:
    cover: DimerCover
    heights: np.ndarray
    bc: BoundaryCondition
    seed: int
    step: int = 0
    table: FaceTable | None = field(default=None, repr=False)
    logw: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def start(cls, g, w=None, bc=None, seed=0, ref=None, cover=None):
        ref = reference_cover(g) if ref is None else ref
        if cover is None:
            if bc is None:
                raise ValueError("either a cover or a boundary condition is required")
            cover = initial_cover(g, bc, ref)
        h = height_function(cover, ref)
        bc = boundary_condition(cover, ref) if bc is None else bc
        logw = np.log(_weights(g, w))
        return cls(cover, h.values.astype(np.int64), bc, int(seed), 0, face_table(g), logw)

    @property
    def mask(self):
        return self.cover.mask


def glauber_step(state, rng):
    """One proposal: a uniform random rotatable-candidate face, Metropolis accept."""
    t = state.table
    mask = state.cover.mask.astype(np.int64)
    state.step += 1
    if len(t.faces) == 0:
        return state
    i = int(rng.integers(len(t.faces)))
    u = float(rng.random())
    ok, dlog, first = _try_flip(mask, t.edges[i], int(t.length[i]), state.logw)
    if ok and (dlog >= 0 or u < np.exp(dlog)):
        edges = t.edges[i, :t.length[i]]
        mask[edges] ^= 1
        f = t.faces[i]
        state.heights[f] += -t.sign[i] if first == 1 else t.sign[i]
        state.cover = DimerCover(state.cover.graph, np.flatnonzero(mask), validate=False)
    return state


def make_rng(seed):
    """Counter-based generator (Philox) with a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def run_chain(state, steps, chunk=1 << 20, rng=None, batches=None):
    """Advance ``state`` by ``steps`` proposals.

    Returns the per-batch time-averaged heights (one row per batch) when
    ``batches`` is given, else the overall time average.
    """
    rng = make_rng(state.seed) if rng is None else rng
    t = state.table
    mask = state.cover.mask.astype(np.uint8)
    h = state.heights.astype(np.float64)
    nb = 1 if batches is None else int(batches)
    sizes = np.full(nb, steps // nb, dtype=np.int64)
    sizes[: steps % nb] += 1
    out = np.zeros((nb, len(h)))
    accepted = 0
    for b in range(nb):
        acc = np.zeros(len(h))
        last = np.zeros(len(h))
        done = 0
        while done < sizes[b]:
            k = int(min(chunk, sizes[b] - done))
            if len(t.faces):
                picks = rng.integers(0, len(t.faces), size=k)
                us = rng.random(k)
                accepted += _run_chain(mask, h, t.edges, t.length, t.sign, t.faces, state.logw,
                                       picks, us, float(done), acc, last)
            done += k
        _flush(h, acc, last, float(sizes[b]))
        out[b] = acc / max(sizes[b], 1)
    state.step += int(steps)
    state.heights = np.rint(h).astype(np.int64)
    state.cover = DimerCover(state.cover.graph, np.flatnonzero(mask), validate=False)
    state.accepted = accepted
    return out if batches is not None else out[0]


# ---------------------------------------------------------------------------
# estimators


@dataclass
class MeanHeightEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    steps: int
    burn_in: int
    seed: int
    method: str = "glauber"


def estimate_mean_height(g, w=None, bc=None, steps=1_000_000, burn_in=100_000, seed=0,
                         batches=32, ref=None, cover=None):
    """Time-averaged heights with batch-means standard errors."""
    state = ChainState.start(g, w, bc, seed, ref, cover)
    rng = make_rng(seed)
    if burn_in:
        run_chain(state, burn_in, rng=rng)
    B = run_chain(state, steps, rng=rng, batches=batches)
    mean = B.mean(axis=0)
    se = B.std(axis=0, ddof=1) / np.sqrt(batches) if batches > 1 else np.zeros_like(mean)
    return MeanHeightEstimate(mean, se, steps, burn_in, seed)


def flip_reachable(g, start, limit=100_000):
    """All covers reachable from ``start`` by face rotations (breadth first)."""
    t = face_table(g)
    seen = {start.key()}
    frontier = [start.mask.astype(np.int64)]
    while frontier and len(seen) <= limit:
        nxt = []
        for m in frontier:
            for i in range(len(t.faces)):
                ok, _, _ = _try_flip(m, t.edges[i], int(t.length[i]), np.zeros(len(m)))
                if ok:
                    m2 = m.copy()
                    m2[t.edges[i, :t.length[i]]] ^= 1
                    key = tuple(np.flatnonzero(m2).tolist())
                    if key not in seen:
                        seen.add(key)
                        nxt.append(m2)
        frontier = nxt
    return seen


# ---------------------------------------------------------------------------
# lemma checks by exact enumeration


def exact_height_distribution(g, w=None, bc=None, ref=None, covers=None):
    """Heights of every cover (rows) with Boltzmann probabilities."""
    from .gibbs import _covers

    w = _weights(g, w)
    ref = reference_cover(g) if ref is None else ref
    cs = _covers(g, bc, covers, ref)
    if not cs:
        raise NotExtendable("no cover realizes the boundary condition", None)
    H = np.array([height_function(d, ref).values for d in cs], dtype=float)
    logw = np.array([np.sum(np.log(w[d.mask])) for d in cs])
    p = np.exp(logw - logw.max())
    return H, p / p.sum()


@dataclass
class ConcentrationResult:
    face: int
    a: float
    m: int
    tail: float
    bound: float
    slack: float

    @property
    def ok(self):
        return self.tail <= self.bound + self.slack


def distance_to_boundary(g):
    """Dual graph distance from every face to the nearest boundary face."""
    from collections import deque

    dist = np.full(g.n_faces, -1, dtype=np.int64)
    q = deque()
    for f in g.boundary_faces:
        dist[f] = 0
        q.append(int(f))
    while q:
        f = q.popleft()
        for h, _, _ in g.dual_adjacency[f]:
            if dist[h] < 0:
                dist[h] = dist[f] + 1
                q.append(h)
    return dist


def concentration_check(g, w=None, bc=None, face=None, a=2.0, trials=None, seed=0, ref=None, covers=None):
    """Tail probability of ``|h(v) - mean| > a sqrt(m)`` against ``2 exp(-a^2/2)``.

    With ``trials`` None the tail is exact (enumeration); otherwise it is
    estimated from ``trials`` exact draws and the slack is three binomial
    standard errors.
    """
    H, p = exact_height_distribution(g, w, bc, ref, covers)
    dist = distance_to_boundary(g)
    faces = g.internal_faces if face is None else [face]
    bound = 2.0 * np.exp(-a * a / 2.0)
    rng = make_rng(seed)
    results = []
    for v in faces:
        m = int(dist[v])
        hv = H[:, v]
        mean = float(p @ hv)
        event = np.abs(hv - mean) > a * np.sqrt(m)
        if trials is None:
            tail, slack = float(p @ event), 0.0
        else:
            draws = rng.choice(len(p), size=int(trials), p=p)
            tail = float(np.mean(event[draws]))
            slack = 3.0 * np.sqrt(max(bound * (1 - bound), 1e-300) / trials)
        results.append(ConcentrationResult(int(v), float(a), m, tail, bound, slack))
    return results


def comparable(f, g):
    """Whether two boundary conditions (mapping face -> value) satisfy f <= g everywhere."""
    return all(f[k] <= g[k] for k in f)


@dataclass
class BoundaryClasses:
    """Covers grouped by normalized boundary height function, with heights precomputed."""

    graph: object
    keys: list
    boundary: np.ndarray   # (K, nb) boundary values per class
    members: list          # cover indices per class
    heights: np.ndarray    # (n_covers, F)
    masks: np.ndarray      # (n_covers, E)

    @classmethod
    def build(cls, g, covers=None, ref=None):
        from .covers import enumerate_covers

        ref = reference_cover(g) if ref is None else ref
        cs = enumerate_covers(g) if covers is None else covers
        groups = {}
        for k, d in enumerate(cs):
            groups.setdefault(boundary_condition(d, ref).normalized(), []).append(k)
        keys = list(groups)
        B = np.array([[v for _, v in key.values] for key in keys], dtype=float)
        H = np.array([height_function(d, ref).values for d in cs], dtype=float)
        M = np.array([d.mask for d in cs], dtype=bool)
        return cls(g, keys, B, [np.asarray(groups[k]) for k in keys], H, M)

    def mean_heights(self, w=None):
        """Exact hbar per class, shifted so its boundary values equal the class key."""
        w = _weights(self.graph, w)
        logw = self.masks.astype(float) @ np.log(w)
        f0 = self.keys[0].values[0][0]
        out = np.empty((len(self.keys), self.heights.shape[1]))
        for i, idx in enumerate(self.members):
            q = np.exp(logw[idx] - logw[idx].max())
            hbar = (q / q.sum()) @ self.heights[idx]
            out[i] = hbar - hbar[f0] + self.boundary[i, 0]
        return out


def coupling_monotonicity_check(g, w=None, ref=None, tol=1e-12, covers=None, classes=None):
    """Worst violation of ``hbar_f <= hbar_g`` over comparable boundary pairs.

    Every ordered pair of realizable boundary classes is made comparable by
    the largest constant shift of ``f`` keeping ``f <= g`` on the boundary;
    smaller shifts follow trivially.  Returns ``(ok, worst, n_pairs)``.
    """
    classes = BoundaryClasses.build(g, covers, ref) if classes is None else classes
    M = classes.mean_heights(w)
    B = classes.boundary
    worst = -np.inf
    for i in range(len(B)):
        shift = np.min(B - B[i][None, :], axis=1)
        diff = M[i][None, :] + shift[:, None] - M
        worst = max(worst, float(diff.max()))
    return worst <= tol, worst, len(B) ** 2
