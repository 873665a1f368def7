"""Free energy, Ronkin function and surface tension of a characteristic polynomial.

The Ronkin function is an average of ``log|P|`` over a torus of radii
``(e^Bx, e^By)``.  The inner average over ``w`` is done exactly with Jensen's
formula from the roots of ``P(z, .)``; the remaining integral over the
argument of ``z`` has kinks wherever a root crosses the circle, so those
points are located first and each smooth piece is integrated by
Gauss-Legendre quadrature with an error estimate from node doubling.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .covers import convex_hull
from .errors import OutsidePolygon, QuadratureFailure

TWO_PI = 2.0 * np.pi
B_CAP = 30.0


class _JensenIntegrator:
    """Integrates over arg z with the w-average done by Jensen's formula."""

    def __init__(self, poly, samples=512, nodes=24, tol=1e-11):
        A, (imin, jmin) = poly.dense()
        self.A = A
        self.imin, self.jmin = imin, jmin
        self.iexp = imin + np.arange(A.shape[0])
        self.jrel = np.arange(A.shape[1])
        self.degree = A.shape[1] - 1
        self.samples = samples
        self.nodes = nodes
        self.tol = tol
        self.gl = {m: np.polynomial.legendre.leggauss(m) for m in (nodes, 2 * nodes)}
        nz = np.argwhere(A != 0)
        self._support = np.stack([self.iexp[nz[:, 0]], jmin + nz[:, 1]], axis=1)

    # coefficients b_j(theta) of the scaled polynomial sum_j b_j u^j, |u| = 1
    def _coeffs(self, theta, Bx, By, M):
        z = np.exp(1j * np.outer(theta, self.iexp))  # (T, I)
        scale = np.exp(self.iexp * Bx)  # (I,)
        a = (z * scale) @ self.A  # (T, J)
        return a * np.exp((self.jmin + self.jrel) * By - M)

    def _log_shift(self, Bx, By):
        return float(np.max(self._support @ np.array([Bx, By])))

    def _roots_info(self, b):
        """Return (jensen value, sorted log|root| array, number of roots inside)."""
        d = self.degree
        T = b.shape[0]
        tiny = 1e-300
        if d == 0:
            return np.log(np.abs(b[:, 0]) + tiny), np.zeros((T, 0)), np.zeros(T)
        if d == 1:
            b0, b1 = b[:, 0], b[:, 1]
            val = np.log(np.maximum(np.abs(b0), np.abs(b1)) + tiny)
            lr = np.log(np.abs(b0) + tiny) - np.log(np.abs(b1) + tiny)
            return val, lr[:, None], (lr < 0).astype(float)
        if d == 2:
            b0, b1, b2 = b[:, 0], b[:, 1], b[:, 2]
            disc = np.sqrt(b1 * b1 - 4 * b2 * b0 + 0j)
            qp = -(b1 + disc) / 2
            qm = -(b1 - disc) / 2
            q = np.where(np.abs(qp) >= np.abs(qm), qp, qm)
            aq = np.abs(q)
            safe = np.where(aq > 0, aq, 1.0)
            small = np.where(aq > 0, np.abs(b0) / safe, 0.0)
            val = np.log(np.maximum(np.abs(b2), aq) + tiny) + np.log(np.maximum(1.0, small))
            big_lr = np.log(aq + tiny) - np.log(np.abs(b2) + tiny)
            small_lr = np.log(small + tiny)
            lr = np.stack([small_lr, big_lr], axis=1)
            return val, lr, (lr < 0).sum(axis=1).astype(float)
        # general degree: companion matrices
        vals = np.empty(T)
        lr = np.empty((T, d))
        for k in range(T):
            coeffs = b[k, ::-1]
            nzl = np.flatnonzero(np.abs(coeffs) > 0)
            lead = coeffs[nzl[0]]
            roots = np.roots(coeffs[nzl[0]:])
            logs = np.log(np.abs(roots) + tiny)
            logs = np.concatenate([np.full(d - len(roots), np.inf), logs])
            lr[k] = np.sort(logs)
            vals[k] = np.log(abs(lead)) + np.sum(np.maximum(0.0, logs[np.isfinite(logs)]))
        return vals, lr, (lr < 0).sum(axis=1).astype(float)

    def _eval(self, theta, Bx, By, M):
        return self._roots_info(self._coeffs(np.atleast_1d(theta), Bx, By, M))

    def _breakpoints(self, Bx, By, M):
        T = self.samples
        theta = np.linspace(0.0, TWO_PI, T, endpoint=False)
        _, lr, _ = self._eval(theta, Bx, By, M)
        if lr.shape[1] == 0:
            return np.array([0.0, TWO_PI])
        pts = []
        # sign changes of each sorted log-modulus: bisection, vectorized
        nxt = np.roll(lr, -1, axis=0)
        lo_idx, k_idx = np.nonzero(np.sign(lr) * np.sign(nxt) < 0)
        if len(lo_idx):
            rows = np.arange(len(lo_idx))
            a = theta[lo_idx].copy()
            b = a + TWO_PI / T
            fa = lr[lo_idx, k_idx]
            fb = nxt[lo_idx, k_idx]
            side = np.zeros(len(a))
            for _ in range(40):
                # Illinois variant of regula falsi, vectorized over brackets
                m = (a * fb - b * fa) / (fb - fa)
                fm = self._eval(m % TWO_PI, Bx, By, M)[1][rows, k_idx]
                same = np.sign(fm) == np.sign(fa)
                a = np.where(same, m, a)
                b = np.where(same, b, m)
                fb = np.where(same, np.where(side == 1, fb / 2, fb), fm)
                fa = np.where(same, fm, np.where(side == -1, fa / 2, fa))
                side = np.where(same, 1, -1)
                if np.max(np.abs(fm)) < 1e-15 or np.max(b - a) < 1e-14:
                    break
            pts.extend(((a * fb - b * fa) / (fb - fa)) % TWO_PI)
        # near-tangential touches: local minima of |log|r|| close to zero
        absr = np.abs(lr)
        prv = np.roll(absr, 1, axis=0)
        nxt = np.roll(absr, -1, axis=0)
        mi, mk = np.nonzero((absr <= prv) & (absr <= nxt) & (absr < 0.05))
        if len(mi):
            h = TWO_PI / T
            center = theta[mi]
            grid = np.linspace(-1.0, 1.0, 17)
            for _ in range(7):
                cand = center[:, None] + h * grid[None, :]
                vals = np.abs(self._eval(cand.ravel() % TWO_PI, Bx, By, M)[1][:, :])
                vals = vals.reshape(len(center), len(grid), -1)[np.arange(len(center)), :, mk]
                center = cand[np.arange(len(center)), np.argmin(vals, axis=1)]
                h = h / 8
            pts.extend(center % TWO_PI)
        pts = np.unique(np.round(np.asarray(pts, dtype=float), 14))
        return np.unique(np.concatenate([[0.0], pts, [TWO_PI]]))

    def _gl(self, a, b, m, Bx, By, M):
        x, w = self.gl[m]
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        th = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        val, _, cnt = self._eval(th, Bx, By, M)
        val = val.reshape(len(a), m)
        return half * (val @ w)

    def integrate(self, Bx, By):
        """Return ``(R, dR/dBy, error estimate)``."""
        M = self._log_shift(Bx, By)
        bp = self._breakpoints(Bx, By, M)
        a, b = bp[:-1], bp[1:]
        keep = b - a > 1e-15
        a, b = a[keep], b[keep]
        total, err = 0.0, 0.0
        for _ in range(30):
            coarse = self._gl(a, b, self.nodes, Bx, By, M)
            fine = self._gl(a, b, 2 * self.nodes, Bx, By, M)
            diff = np.abs(fine - coarse)
            ok = diff <= self.tol * (b - a) / TWO_PI + 1e-15
            total += float(np.sum(fine[ok]))
            err += float(np.sum(diff[ok]))
            if np.all(ok):
                break
            a_bad, b_bad = a[~ok], b[~ok]
            m = 0.5 * (a_bad + b_bad)
            a = np.concatenate([a_bad, m])
            b = np.concatenate([m, b_bad])
        else:
            raise QuadratureFailure(f"quadrature did not converge at B=({Bx}, {By})")
        mids = 0.5 * (bp[:-1] + bp[1:])
        _, _, cnt = self._eval(mids, Bx, By, M)
        grad_y = self.jmin + float(np.sum(cnt * (bp[1:] - bp[:-1]))) / TWO_PI
        return M + total / TWO_PI, grad_y, err / TWO_PI


class Ronkin:
    """Ronkin function of a Laurent polynomial with value, gradient and error estimate."""

    def __init__(self, poly, samples=512, nodes=24, tol=1e-11):
        self.poly = poly
        self._w = _JensenIntegrator(poly, samples, nodes, tol)
        self._z = _JensenIntegrator(poly.swapped(), samples, nodes, tol)
        self.vertices = poly.newton_vertices()

    def value(self, Bx, By, with_error=False):
        v, _, e = self._w.integrate(float(Bx), float(By))
        return (v, e) if with_error else v

    def gradient(self, Bx, By):
        _, gy, _ = self._w.integrate(float(Bx), float(By))
        _, gx, _ = self._z.integrate(float(By), float(Bx))
        return np.array([gx, gy])

    def value_and_gradient(self, Bx, By):
        v, gy, _ = self._w.integrate(float(Bx), float(By))
        _, gx, _ = self._z.integrate(float(By), float(Bx))
        return v, np.array([gx, gy])

    __call__ = value


def ronkin(P, Bx, By):
    """Average of log|P| over the torus |z| = e^Bx, |w| = e^By."""
    return Ronkin(P).value(Bx, By)


def free_energy(P, with_error=False):
    """Average of log|P| over the unit torus; returns ``(F, error)`` if requested."""
    return Ronkin(P).value(0.0, 0.0, with_error=with_error)


# ---------------------------------------------------------------------------
# surface tension


def _polygon_contains(vertices, p, tol=1e-12):
    v = np.asarray(vertices, dtype=float)
    p = np.asarray(p, dtype=float)
    if len(v) == 1:
        return bool(np.linalg.norm(v[0] - p) <= tol)
    if len(v) == 2:
        a, b = v
        ab = b - a
        t = np.dot(p - a, ab) / np.dot(ab, ab)
        return bool(-tol <= t <= 1 + tol and np.linalg.norm(a + t * ab - p) <= tol)
    for k in range(len(v)):
        a, b = v[k], v[(k + 1) % len(v)]
        if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) < -tol:
            return False
    return True


def _boundary_edge(vertices, p, tol=1e-12):
    """The polygon edge (v1, v2) containing ``p``, or None for interior points."""
    v = np.asarray(vertices, dtype=float)
    p = np.asarray(p, dtype=float)
    if len(v) == 1:
        return (v[0], v[0])
    for k in range(len(v) if len(v) > 2 else 1):
        a, b = v[k], v[(k + 1) % len(v)]
        ab = b - a
        t = np.dot(p - a, ab) / np.dot(ab, ab)
        if -tol <= t <= 1 + tol and np.linalg.norm(a + t * ab - p) <= tol * max(1.0, np.linalg.norm(ab)):
            return (a, b)
    return None


def _edge_sigma(P, edge, p, full):
    """Exact sigma on the boundary of the Newton polygon.

    Far out along the outward normal of an edge the Ronkin function only
    sees the monomials on that edge, a one-variable polynomial in the
    primitive edge direction, whose Ronkin function follows from Jensen's
    formula.  Minimizing the resulting convex piecewise-linear function
    gives sigma in closed form.
    """
    v1, v2 = (np.rint(np.asarray(x)).astype(int) for x in edge)
    p = np.asarray(p, dtype=float)
    if np.array_equal(v1, v2):
        c = P.coeffs.get((int(v1[0]), int(v1[1])), 0.0)
        val = float(np.log(abs(c)))
        return SigmaResult(val, np.full(2, np.nan), "frozen-limit") if full else val
    d = v2 - v1
    L = int(np.gcd(abs(d[0]), abs(d[1])))
    step = d // L
    coeffs = np.array([P.coeffs.get((int(v1[0] + k * step[0]), int(v1[1] + k * step[1])), 0.0)
                       for k in range(L + 1)])
    tau = float(np.dot(p - v1, step) / np.dot(step, step))
    nz = np.flatnonzero(coeffs)
    lead = coeffs[nz[-1]]
    roots = np.roots(coeffs[nz[0]:nz[-1] + 1][::-1]) if nz[-1] > nz[0] else np.array([])
    ell = np.sort(np.concatenate([np.full(nz[0], -np.inf), np.log(np.abs(roots))]))

    def r(x):
        return np.log(abs(lead)) + np.sum(np.maximum(x, ell))

    m = min(max(int(np.ceil(tau - 1e-12)), 0), L)
    if m == 0:
        val = float(np.log(abs(coeffs[0])))
    else:
        x = ell[m - 1]
        val = float(r(x) - tau * x) if np.isfinite(x) else float(np.log(abs(lead)) + np.sum(ell[m:]))
    return SigmaResult(val, np.full(2, np.nan), "frozen-limit") if full else val


@dataclass
class SigmaResult:
    sigma: float
    B: np.ndarray
    flag: str


def _minimize_legendre(R, s, t, x0):
    st = np.array([s, t], dtype=float)

    def fun(B):
        v, g = R.value_and_gradient(B[0], B[1])
        return v - st @ B, g - st

    res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=[(-B_CAP, B_CAP)] * 2,
                   options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 500, "maxcor": 20})
    return res


def surface_tension(P, s, t, *, ronkin_fn=None, x0=None, full=False):
    """sigma(s, t) = min over B of R(B) - s*Bx - t*By.

    With this sign sigma is concave, vanishes at the corners of the Newton
    polygon when the corner coefficients have modulus one, and is positive
    inside.  Points whose optimum sits on the cap ``|B| = 30`` are flagged
    ``frozen-limit``.
    """
    R = Ronkin(P) if ronkin_fn is None else ronkin_fn
    if not _polygon_contains(R.vertices, (s, t), tol=1e-12):
        raise OutsidePolygon(f"slope ({s}, {t}) lies outside the Newton polygon")
    edge = _boundary_edge(R.vertices, (s, t))
    if edge is not None:
        return _edge_sigma(P if ronkin_fn is None else R.poly, edge, (s, t), full)
    x0 = np.zeros(2) if x0 is None else np.asarray(x0, dtype=float)
    res = _minimize_legendre(R, s, t, x0)
    B = res.x
    if not res.success and np.linalg.norm(res.jac) > 1e-6 and np.max(np.abs(B)) < B_CAP - 1e-6:
        # restart once from the origin before giving up on the tight tolerance
        res2 = _minimize_legendre(R, s, t, np.zeros(2))
        if res2.fun < res.fun:
            res, B = res2, res2.x
    flag = "frozen-limit" if np.max(np.abs(B)) >= B_CAP - 1e-6 else "interior"
    out = SigmaResult(float(res.fun), B, flag)
    return out if full else out.sigma


# ---------------------------------------------------------------------------
# tabulation


@dataclass
class SurfaceTensionTable:
    """sigma on the lattice points (i/r, j/r) of the Newton polygon, interpolated linearly."""

    resolution: int
    vertices: list
    index: np.ndarray  # (K, 2) integer grid coordinates
    sigma: np.ndarray
    flags: list
    B: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._build()

    @property
    def points(self):
        return self.index / self.resolution

    def _build(self):
        self._lookup = {(int(i), int(j)): k for k, (i, j) in enumerate(self.index)}
        self.triangles = _concave_triangulation(self.index, self.sigma)
        # every triangle is registered in all grid cells its bounding box touches
        self._cells = {}
        for k, tri in enumerate(self.triangles):
            lo = self.index[tri].min(axis=0)
            hi = self.index[tri].max(axis=0)
            for ci in range(int(lo[0]), max(int(hi[0]), int(lo[0]) + 1)):
                for cj in range(int(lo[1]), max(int(hi[1]), int(lo[1]) + 1)):
                    self._cells.setdefault((ci, cj), []).append(k)

    def contains(self, p, tol=1e-9):
        return _polygon_contains(self.vertices, p, tol)

    def __call__(self, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        flat_s, flat_t = s.ravel(), t.ravel()
        out = np.empty(flat_s.shape)
        for k, (x, y) in enumerate(zip(flat_s, flat_t)):
            out[k] = self._interp_one(x, y)
        return out.reshape(s.shape) if s.shape else float(out[0])

    def _interp_one(self, x, y, tol=1e-9):
        r = self.resolution
        ci, cj = int(np.floor(x * r + 1e-12)), int(np.floor(y * r + 1e-12))
        for di in (0, -1, 1):
            for dj in (0, -1, 1):
                for k in self._cells.get((ci + di, cj + dj), ()):
                    tri = self.triangles[k]
                    P = self.points[tri]
                    T = np.array([P[1] - P[0], P[2] - P[0]]).T
                    lam = np.linalg.solve(T, np.array([x, y]) - P[0])
                    bary = np.array([1 - lam.sum(), lam[0], lam[1]])
                    if np.all(bary >= -tol):
                        return float(bary @ self.sigma[tri])
        raise OutsidePolygon(f"slope ({x}, {y}) lies outside the tabulated polygon")

    def concavity_violations(self, tol=1e-5):
        """Grid midpoint checks along the triangulation directions.

        Returns a list of (point, direction, defect) with
        ``sigma(p) < (sigma(p-h) + sigma(p+h)) / 2 - tol``.
        """
        bad = []
        for (i, j), k in self._lookup.items():
            for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
                a = self._lookup.get((i - di, j - dj))
                b = self._lookup.get((i + di, j + dj))
                if a is None or b is None:
                    continue
                defect = 0.5 * (self.sigma[a] + self.sigma[b]) - self.sigma[k]
                if defect > tol:
                    bad.append(((i / self.resolution, j / self.resolution), (di, dj), float(defect)))
        return bad

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "t", "sigma", "flag"])
            for (s, t), v, f in zip(self.points, self.sigma, self.flags):
                w.writerow([f"{s:.17g}", f"{t:.17g}", f"{v:.17g}", f])

    @classmethod
    def from_csv(cls, path, resolution=None, vertices=None):
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                rows.append((float(row["s"]), float(row["t"]), float(row["sigma"]), row.get("flag", "interior")))
        pts = np.array([(r[0], r[1]) for r in rows])
        if resolution is None:
            steps = np.diff(np.unique(pts[:, 0]))
            resolution = int(round(1.0 / steps.min())) if len(steps) else 1
        idx = np.rint(pts * resolution).astype(np.int64)
        if vertices is None:
            vertices = convex_hull(idx.tolist())
            vertices = [(a / resolution, b / resolution) for a, b in vertices]
        return cls(resolution, vertices, idx, np.array([r[2] for r in rows]), [r[3] for r in rows])


def _grid_triangulation(lookup):
    tris = []
    for (i, j), a in lookup.items():
        b = lookup.get((i + 1, j))
        c = lookup.get((i, j + 1))
        d = lookup.get((i + 1, j + 1))
        if d is not None and b is not None:
            tris.append((a, b, d))
        if d is not None and c is not None:
            tris.append((a, d, c))
        if d is None and b is not None and c is not None:
            tris.append((a, b, c))
    for (i, j), d in lookup.items():
        if (i - 1, j - 1) in lookup:
            continue
        b = lookup.get((i, j - 1))
        c = lookup.get((i - 1, j))
        if b is not None and c is not None:
            tris.append((b, d, c))
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def _concave_triangulation(index, sigma):
    """Triangles of the upper concave envelope of the lifted points (i, j, sigma).

    Interpolating on these triangles gives the smallest concave function
    above the data, which equals the data wherever the data is discretely
    concave.  A fixed grid triangulation can fold convexly across edges even
    for concave data.  Falls back to the grid triangulation when the lifted
    points are coplanar.
    """
    from scipy.spatial import ConvexHull, QhullError

    idx = np.asarray(index, dtype=float)
    sig = np.asarray(sigma, dtype=float)
    span = float(np.ptp(sig)) if len(sig) else 0.0
    if len(idx) < 4 or span < 1e-14:
        return _grid_triangulation({(int(i), int(j)): k for k, (i, j) in enumerate(index)})
    pts = np.column_stack([idx, sig / span * max(1.0, float(np.ptp(idx)))])
    try:
        hull = ConvexHull(pts, qhull_options="Qt")
    except QhullError:
        return _grid_triangulation({(int(i), int(j)): k for k, (i, j) in enumerate(index)})
    up = hull.equations[:, 2] > 1e-12
    tris = hull.simplices[up]
    P = idx[tris]
    area = (P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1]) - (P[:, 2, 0] - P[:, 0, 0]) * (P[:, 1, 1] - P[:, 0, 1])
    return tris[np.abs(area) > 1e-12].astype(np.int64)


def _grid_order(index):
    """Serpentine ordering so consecutive points are neighbors (good warm starts)."""
    order = []
    for row, i in enumerate(np.unique(index[:, 0])):
        sel = np.flatnonzero(index[:, 0] == i)
        sel = sel[np.argsort(index[sel, 1])]
        order.extend(sel if row % 2 == 0 else sel[::-1])
    return np.asarray(order, dtype=np.int64)


def tabulate_sigma(P, resolution, *, progress=None):
    """Tabulate sigma on all points (i/r, j/r) of the Newton polygon of ``P``."""
    if resolution < 1:
        raise ValueError("resolution must be positive")
    R = Ronkin(P)
    verts = np.asarray(R.vertices, dtype=float)
    r = int(resolution)
    lo = np.floor(verts.min(axis=0) * r).astype(int)
    hi = np.ceil(verts.max(axis=0) * r).astype(int)
    idx = [(i, j) for i in range(lo[0], hi[0] + 1) for j in range(lo[1], hi[1] + 1)
           if _polygon_contains(verts, (i / r, j / r), tol=1e-12)]
    idx = np.asarray(idx, dtype=np.int64)
    sigma = np.empty(len(idx))
    Bs = np.zeros((len(idx), 2))
    flags = [""] * len(idx)
    x0 = np.zeros(2)
    for count, k in enumerate(_grid_order(idx)):
        s, t = idx[k] / r
        res = surface_tension(P, s, t, ronkin_fn=R, x0=x0, full=True)
        sigma[k], Bs[k], flags[k] = res.sigma, res.B, res.flag
        x0 = res.B if np.all(np.isfinite(res.B)) and res.flag == "interior" else x0
        if progress is not None:
            progress(count + 1, len(idx))
    return SurfaceTensionTable(r, [tuple(v) for v in verts.tolist()], idx, sigma, flags, Bs)
