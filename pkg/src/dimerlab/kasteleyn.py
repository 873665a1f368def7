"""Determinant counting of dimer covers and the torus characteristic polynomial.

Planar graphs get a sign gauge by peeling the dual spanning tree formed by
the edges outside a spanning tree.  Torus graphs get one by solving the
face parity equations over GF(2).  In both cases a face whose boundary walk
has length ``l`` carries an odd number of minus signs iff ``l/2`` is even.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from .covers import enumerate_covers, periodic_reference, slope
from .errors import InvalidGraph, NoCover, NonConvergence, TooLarge
from .lattice import BLACK, WHITE, PlanarGraph, TorusGraph, torus_quotient

DENSE_LIMIT = 600


# ---------------------------------------------------------------------------
# planar sign gauge


def _face_parity_targets(walks):
    return [(len(w) // 2 + 1) % 2 for w in walks]


def planar_signs(g):
    """Kasteleyn signs (+1/-1 per edge) for a plane graph without boundary vertices.

    Every connected component is treated separately; its unbounded face is
    the root of the dual tree and carries no constraint.
    """
    if np.any(g.boundary):
        raise InvalidGraph("remove or force boundary vertices before computing signs")
    E = g.n_edges
    sign = np.ones(E, dtype=np.int64)
    in_tree = np.zeros(E, dtype=bool)
    seen = np.zeros(g.n_vertices, dtype=bool)
    for s in range(g.n_vertices):
        if seen[s]:
            continue
        seen[s] = True
        queue = deque([s])
        while queue:
            v = queue.popleft()
            for e in g.incident[v]:
                u = g.eblack[e] if g.ewhite[e] == v else g.ewhite[e]
                if not seen[u]:
                    seen[u] = True
                    in_tree[e] = True
                    queue.append(u)
    walks = g.face_walks
    target = _face_parity_targets(walks)
    F = g.n_faces
    parent_edge = -np.ones(F, dtype=np.int64)
    visited = np.zeros(F, dtype=bool)
    order = []
    for root in g.boundary_faces:
        if visited[root]:
            continue
        visited[root] = True
        queue = deque([int(root)])
        while queue:
            f = queue.popleft()
            order.append(f)
            for h, e, _ in g.dual_adjacency[f]:
                if in_tree[e] or visited[h]:
                    continue
                visited[h] = True
                parent_edge[h] = e
                queue.append(h)
    if not np.all(visited):
        raise InvalidGraph("dual tree does not reach every face; embedding is not planar")
    for f in reversed(order):
        pe = parent_edge[f]
        if pe < 0:
            continue
        once = _once_edges(walks[f])
        parity = sum(1 for e in once if e != pe and sign[e] < 0) % 2
        sign[pe] = -1 if parity != target[f] else 1
    return sign


def _once_edges(walk):
    counts = {}
    for d in walk:
        counts[d // 2] = counts.get(d // 2, 0) + 1
    return [e for e, c in counts.items() if c == 1]


def check_signs(g, sign, faces=None):
    """Whether every bounded face satisfies the sign parity condition."""
    walks = g.face_walks
    target = _face_parity_targets(walks)
    faces = g.internal_faces if faces is None else faces
    for f in faces:
        once = _once_edges(walks[f])
        if sum(1 for e in once if sign[e] < 0) % 2 != target[f]:
            return False
    return True


# ---------------------------------------------------------------------------
# planar counting


def _log_abs_det(rows, cols, vals, m):
    if m == 0:
        return 0.0
    if m <= DENSE_LIMIT:
        K = np.zeros((m, m))
        np.add.at(K, (rows, cols), vals)
        s, ld = np.linalg.slogdet(K)
        return -np.inf if s == 0 else float(ld)
    K = csc_matrix((vals, (rows, cols)), shape=(m, m))
    try:
        lu = splu(K, permc_spec="COLAMD")
    except RuntimeError:
        return -np.inf
    d = lu.U.diagonal()
    if np.any(d == 0):
        return -np.inf
    return float(np.sum(np.log(np.abs(d))))


def _reduce_boundary(g, w, unmatched):
    """Delete unmatched boundary vertices and force the pendant edges of matched ones."""
    unmatched = set(int(v) for v in unmatched)
    remove = np.zeros(g.n_vertices, dtype=bool)
    log_forced = 0.0
    for v in np.flatnonzero(g.boundary):
        remove[v] = True
        if int(v) in unmatched:
            continue
        e = g.incident[v][0]
        u = g.eblack[e] if g.ewhite[e] == v else g.ewhite[e]
        if remove[u] and not g.boundary[u]:
            return None, -np.inf
        if g.boundary[u]:
            # isolated edge between two boundary vertices
            if int(u) in unmatched:
                return None, -np.inf
            if v < u:
                log_forced += np.log(w[e])
            continue
        remove[u] = True
        log_forced += np.log(w[e])
    # a vertex claimed twice by forced edges makes the count zero
    claims = np.zeros(g.n_vertices, dtype=np.int64)
    for v in np.flatnonzero(g.boundary):
        if int(v) in unmatched:
            continue
        e = g.incident[v][0]
        u = g.eblack[e] if g.ewhite[e] == v else g.ewhite[e]
        if not g.boundary[u]:
            claims[u] += 1
    if np.any(claims > 1):
        return None, -np.inf
    keep = np.flatnonzero(~remove)
    remap = -np.ones(g.n_vertices, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    ke = np.flatnonzero(~(remove[g.ewhite] | remove[g.eblack]))
    h = PlanarGraph(g.colors[keep], g.pos[keep], remap[g.ewhite[ke]], remap[g.eblack[ke]], w[ke])
    return h, log_forced


def log_kasteleyn_count(g, w=None, unmatched=None):
    """``log Z`` by Kasteleyn determinants.

    With boundary vertices, ``unmatched`` fixes the boundary condition; when
    it is None every boundary vertex must be matched if the graph has any.
    """
    w = np.asarray(g.weights if w is None else w, dtype=float)
    if np.any(g.boundary):
        h, log_forced = _reduce_boundary(g, w, unmatched or ())
        if h is None:
            return -np.inf
    else:
        h, log_forced = g.with_weights(w) if w is not g.weights else g, 0.0
    total = log_forced
    for verts in h.components():
        sub, _ = h.induced(verts)
        whites = np.flatnonzero(sub.colors == WHITE)
        blacks = np.flatnonzero(sub.colors == BLACK)
        if len(whites) != len(blacks):
            return -np.inf
        if len(whites) == 0:
            continue
        sign = planar_signs(sub)
        wi = -np.ones(sub.n_vertices, dtype=np.int64)
        bi = -np.ones(sub.n_vertices, dtype=np.int64)
        wi[whites] = np.arange(len(whites))
        bi[blacks] = np.arange(len(blacks))
        total += _log_abs_det(wi[sub.ewhite], bi[sub.eblack], sign * sub.weights, len(whites))
        if total == -np.inf:
            return total
    return float(total)


def kasteleyn_count(g, w=None, unmatched=None):
    """Weighted number of dimer covers via Kasteleyn determinants."""
    lz = log_kasteleyn_count(g, w, unmatched)
    return 0.0 if lz == -np.inf else float(np.exp(lz))


def log_kasteleyn_count_free(g, w=None, max_boundary=16):
    """``log Z`` with free boundary conditions (sum over unmatched boundary sets)."""
    from scipy.special import logsumexp

    bnd = np.flatnonzero(g.boundary)
    if len(bnd) > max_boundary:
        raise TooLarge(f"{len(bnd)} boundary vertices exceeds {max_boundary}")
    terms = []
    for mask in range(1 << len(bnd)):
        un = [int(bnd[k]) for k in range(len(bnd)) if mask >> k & 1]
        terms.append(log_kasteleyn_count(g, w, un))
    terms = np.asarray(terms)
    return float(logsumexp(terms)) if np.any(np.isfinite(terms)) else -np.inf


def edge_probabilities(g, w=None, tol=1e-8):
    """Probability that each edge is a dimer, ``K(w,b) K^{-1}(b,w)``.

    Boundary vertices are treated as unmatched, so their pendant edges get
    probability zero and the interior is sampled as a closed graph.
    """
    w = np.asarray(g.weights if w is None else w, dtype=float)
    out = np.zeros(g.n_edges)
    inner = np.flatnonzero(~g.boundary)
    h, keep_e = g.induced(inner)
    hw = w[keep_e]
    for verts in h.components():
        sub, sub_e = h.induced(verts)
        whites = np.flatnonzero(sub.colors == WHITE)
        blacks = np.flatnonzero(sub.colors == BLACK)
        if len(whites) != len(blacks):
            raise NoCover("component has unequal colour classes")
        if len(whites) == 0:
            continue
        sign = planar_signs(sub)
        wi = -np.ones(sub.n_vertices, dtype=np.int64)
        bi = -np.ones(sub.n_vertices, dtype=np.int64)
        wi[whites] = np.arange(len(whites))
        bi[blacks] = np.arange(len(blacks))
        r, c = wi[sub.ewhite], bi[sub.eblack]
        vals = sign * hw[sub_e]
        K = np.zeros((len(whites), len(blacks)))
        np.add.at(K, (r, c), vals)
        try:
            Kinv = np.linalg.inv(K)
        except np.linalg.LinAlgError as exc:
            raise NoCover("Kasteleyn matrix is singular") from exc
        out[keep_e[sub_e]] = vals * Kinv[c, r]
    # each interior vertex is covered exactly once; the matrix is badly
    # conditioned near frozen regions, so report lost accuracy explicitly
    inc = np.zeros(g.n_vertices)
    np.add.at(inc, g.ewhite, out)
    np.add.at(inc, g.eblack, out)
    defect = float(np.max(np.abs(inc[inner] - 1.0), initial=0.0))
    if defect > tol:
        raise NonConvergence(f"edge probabilities lost accuracy (vertex defect {defect:.2e})", out, defect)
    return out


# ---------------------------------------------------------------------------
# torus sign gauge and twisted determinants


def _solve_gf2(rows, n_vars):
    """Solve a GF(2) system given as (bitmask, rhs) pairs; free variables set to 0."""
    pivots = {}
    for mask, rhs in rows:
        for p, (pm, pr) in pivots.items():
            if mask >> p & 1:
                mask ^= pm
                rhs ^= pr
        if mask == 0:
            if rhs:
                raise InvalidGraph("face parity equations are inconsistent")
            continue
        p = mask.bit_length() - 1
        for q in list(pivots):
            qm, qr = pivots[q]
            if qm >> p & 1:
                pivots[q] = (qm ^ mask, qr ^ rhs)
        pivots[p] = (mask, rhs)
    x = [0] * n_vars
    for p, (mask, rhs) in pivots.items():
        x[p] = rhs  # other bits of a reduced row are free variables, set to 0
    return np.asarray(x, dtype=np.int64)


def torus_signs(t):
    """Sign gauge for a torus graph satisfying the face parity condition on every face."""
    _, walks, _ = t._faces
    target = _face_parity_targets(walks)
    rows = []
    for f, walk in enumerate(walks):
        mask = 0
        for e in _once_edges(walk):
            mask ^= 1 << e
        rows.append((mask, target[f]))
    x = _solve_gf2(rows, t.n_edges)
    return np.where(x == 1, -1, 1).astype(np.int64)


@dataclass
class TwistedMatrix:
    """Entries of K(z, w) as (row, col, coefficient, z-exponent, w-exponent)."""

    rows: np.ndarray
    cols: np.ndarray
    coef: np.ndarray
    zexp: np.ndarray
    wexp: np.ndarray
    size: int
    shift: tuple = (0, 0)
    meta: dict = field(default_factory=dict)

    def evaluate(self, z, w):
        K = np.zeros((self.size, self.size), dtype=complex)
        vals = self.coef * np.power(complex(z), self.zexp) * np.power(complex(w), self.wexp)
        np.add.at(K, (self.rows, self.cols), vals)
        return K

    def det(self, z, w):
        K = self.evaluate(z, w)
        s, ld = np.linalg.slogdet(K)
        return complex(s) * np.exp(ld) if s != 0 else 0.0


def twisted_matrix(t, weights=None):
    """Kasteleyn matrix of a torus graph with magnetic twist z^{k_y} w^{-k_x}."""
    w = t.weights if weights is None else np.asarray(weights, dtype=float)
    sign = torus_signs(t)
    whites = np.flatnonzero(t.colors == WHITE)
    blacks = np.flatnonzero(t.colors == BLACK)
    if len(whites) != len(blacks):
        raise NoCover("unequal numbers of black and white vertices")
    wi = -np.ones(t.n_vertices, dtype=np.int64)
    bi = -np.ones(t.n_vertices, dtype=np.int64)
    wi[whites] = np.arange(len(whites))
    bi[blacks] = np.arange(len(blacks))
    k = t.crossing_numbers
    return TwistedMatrix(wi[t.ewhite], bi[t.eblack], sign * w, k[:, 1], -k[:, 0], len(whites))


def _reference_exponent(t):
    """Exponent of the monomial contributed by the periodic lift of the first G(1) cover."""
    m0 = periodic_reference(t.fd)
    mask = np.isin(t.fd_edge, list(m0))
    k = t.crossing_numbers
    return int(np.sum(k[mask, 1])), int(-np.sum(k[mask, 0]))


def _exponent_box(t):
    """A box guaranteed to contain all exponents of det K(z, w) after normalization."""
    from .covers import newton_polygon

    N = newton_polygon(t.fd).vertex_array
    lo = np.floor(N.min(axis=0) * t.n).astype(int)
    hi = np.ceil(N.max(axis=0) * t.n).astype(int)
    return lo, hi


def laurent_coefficients(tm, lo, hi, shift):
    """Coefficients of ``z^-a w^-b det K(z,w)`` on the exponent box [lo, hi] by DFT.

    Returns a complex array indexed ``[i - lo[0], j - lo[1]]``.
    """
    Mz = int(hi[0] - lo[0] + 1)
    Mw = int(hi[1] - lo[1] + 1)
    vals = np.empty((Mz, Mw), dtype=complex)
    for a in range(Mz):
        z = np.exp(2j * np.pi * a / Mz)
        for b in range(Mw):
            w = np.exp(2j * np.pi * b / Mw)
            vals[a, b] = tm.det(z, w) * z ** (-shift[0]) * w ** (-shift[1])
    # vals[a,b] = sum_{i,j} c_ij z_a^i w_b^j ; with i = lo + p
    coef = np.fft.fft2(vals) / (Mz * Mw)
    # fft2 computes sum_a vals[a] exp(-2pi i a k / M) = M * c_{i} with i = k (mod M)
    out = np.empty_like(coef)
    for p in range(Mz):
        for q in range(Mw):
            out[p, q] = coef[(lo[0] + p) % Mz, (lo[1] + q) % Mw]
    return out


def torus_slope_partition(fd, n, weights=None):
    """Fixed-slope partition functions ``Z_{s,t}(G(n))``.

    Slopes are measured from the periodic lift of the first cover of G(1),
    so they range over ``n`` times the Newton polygon.  Returns a dict
    mapping integer slopes to nonnegative floats.
    """
    t = torus_quotient(fd, n)
    w = t.weights if weights is None else np.asarray(weights, dtype=float)[t.fd_edge]
    tm = twisted_matrix(t, w)
    shift = _reference_exponent(t)
    lo, hi = _exponent_box(t)
    coef = laurent_coefficients(tm, lo, hi, shift)
    mags = np.abs(coef)
    tol = 1e-9 * mags.max()
    out = {}
    for p in range(coef.shape[0]):
        for q in range(coef.shape[1]):
            if mags[p, q] > tol:
                out[(int(lo[0] + p), int(lo[1] + q))] = float(mags[p, q])
    return out


def log_torus_partition(fd, n):
    """``log Z(G(n))`` as the log of the sum of fixed-slope partition functions."""
    counts = torus_slope_partition(fd, n)
    vals = np.array(list(counts.values()))
    m = vals.max()
    return float(np.log(m) + np.log(np.sum(vals / m)))


def enumerate_slope_counts(fd, n):
    """Fixed-slope cover counts on G(n) by exhaustive enumeration (small n only)."""
    t = torus_quotient(fd, n)
    covers = enumerate_covers(t, override=True)
    m0 = periodic_reference(fd)
    from .covers import DimerCover

    ref = DimerCover(t, np.flatnonzero(np.isin(t.fd_edge, list(m0))))
    out = {}
    for d in covers:
        key = slope(d, ref)
        out[key] = out.get(key, 0.0) + d.weight()
    return out


# ---------------------------------------------------------------------------
# characteristic polynomial


class LaurentPolynomial2:
    """Finitely supported map (i, j) -> coefficient, read as sum c_ij z^i w^j."""

    def __init__(self, coeffs):
        self.coeffs = {(int(i), int(j)): float(c) for (i, j), c in coeffs.items() if c != 0}

    def __call__(self, z, w):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        out = np.zeros(np.broadcast(z, w).shape, dtype=complex)
        for (i, j), c in self.coeffs.items():
            out = out + c * z ** i * w ** j
        return out

    def support(self):
        return sorted(self.coeffs)

    def newton_vertices(self):
        from .covers import convex_hull

        return convex_hull(self.support())

    def dense(self):
        """Coefficient array with offsets ``(imin, jmin)``."""
        sup = np.array(self.support())
        lo = sup.min(axis=0)
        hi = sup.max(axis=0)
        A = np.zeros((hi[0] - lo[0] + 1, hi[1] - lo[1] + 1))
        for (i, j), c in self.coeffs.items():
            A[i - lo[0], j - lo[1]] = c
        return A, (int(lo[0]), int(lo[1]))

    def swapped(self):
        return LaurentPolynomial2({(j, i): c for (i, j), c in self.coeffs.items()})

    def scaled(self, a):
        return LaurentPolynomial2({k: a * c for k, c in self.coeffs.items()})

    def __eq__(self, other):
        return isinstance(other, LaurentPolynomial2) and self.coeffs == other.coeffs

    def __repr__(self):
        terms = [f"{c:+g}*z^{i}*w^{j}" for (i, j), c in sorted(self.coeffs.items())]
        return "LaurentPolynomial2(" + " ".join(terms) + ")"


def characteristic_polynomial(fd, weights=None):
    """P(z, w) = det K(z, w) for the fundamental domain, in the fixed gauge.

    The monomial factor is chosen so exponents equal slopes measured from
    the first cover of G(1); the signs of ``z``, ``w`` and of P itself are
    chosen to make as many coefficients positive as possible.
    """
    if weights is not None:
        fd = fd.with_weights(weights)
    t = torus_quotient(fd, 1)
    if not enumerate_covers(t, override=True):
        raise NoCover("G(1) admits no dimer cover")
    tm = twisted_matrix(t)
    shift = _reference_exponent(t)
    lo, hi = _exponent_box(t)
    raw = laurent_coefficients(tm, lo, hi, shift)
    scale = np.abs(raw).max()
    coeffs = {}
    for p in range(raw.shape[0]):
        for q in range(raw.shape[1]):
            c = raw[p, q]
            if abs(c) > 1e-12 * scale:
                coeffs[(int(lo[0] + p), int(lo[1] + q))] = c.real
    best = None
    for sz in (1, -1):
        for sw in (1, -1):
            for s in (1, -1):
                cand = {(i, j): s * sz ** (i % 2) * sw ** (j % 2) * c for (i, j), c in coeffs.items()}
                score = sum(1 for c in cand.values() if c > 0)
                if best is None or score > best[0]:
                    best = (score, cand)
    poly = LaurentPolynomial2(best[1])
    # snap coefficients that are integers up to round-off
    snapped = {}
    for k, c in poly.coeffs.items():
        r = round(c)
        snapped[k] = float(r) if abs(c - r) <= 1e-9 * max(1.0, abs(c)) else c
    return LaurentPolynomial2(snapped)
