"""Executable checks of the main identities and estimates.

Each check returns a :class:`CheckResult`; the command line ``verify``
subcommand and the acceptance tests both run them, with sizes chosen by the
caller.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .covers import (absolute_height, check_local_rule, count_local_rule_functions, enumerate_covers,
                     modified_lipschitz_check, oriented_distances)
from .gibbs import boundary_condition, cutting_rule_sides, partition_function
from .kasteleyn import (characteristic_polynomial, enumerate_slope_counts, kasteleyn_count,
                        log_torus_partition, torus_slope_partition)
from .lattice import aztec_diamond, grid_graph, load_preset, planar_patch


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict)

    def line(self):
        return f"{self.name:<28} {'PASS' if self.ok else 'FAIL'}  {self.detail}  ({self.seconds:.1f}s)"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# counting


def random_patches(seed, count, max_vertices=36):
    """Random small patches of the shipped lattices, with random weights and boundary choices.

    Yields ``(graph, weights, unmatched)``; ``unmatched`` is None for graphs
    without boundary vertices and otherwise the free boundary set of a
    randomly chosen cover (or a random subset, which may admit no cover).
    """
    rng = np.random.default_rng(seed)
    fds = [load_preset("square"), load_preset("hexagonal"), load_preset("square2x2")]
    made = 0
    attempts = 0
    while made < count and attempts < 50 * count:
        attempts += 1
        fd = fds[int(rng.integers(len(fds)))]
        collar = bool(rng.random() < 0.4)
        if rng.random() < 0.5:
            x0, y0 = rng.uniform(-1, 1, 2)
            a, b = rng.uniform(0.8, 3.2, 2)
            region = [(x0, y0), (x0 + a, y0), (x0 + a, y0 + b), (x0, y0 + b)]
        else:
            pts = rng.uniform(-1.6, 1.6, size=(6, 2))
            ang = np.arctan2(pts[:, 1] - pts[:, 1].mean(), pts[:, 0] - pts[:, 0].mean())
            region = [tuple(p) for p in pts[np.argsort(ang)]]
        try:
            g = planar_patch(fd, 1, region, collar=collar)
        except Exception:
            continue
        if g.n_vertices < 2 or g.n_vertices > max_vertices or g.n_edges == 0:
            continue
        if not np.any(g.boundary) and rng.random() < 0.7 and not enumerate_covers(g):
            # favour patches that admit covers so the comparison is informative
            continue
        w = rng.uniform(0.2, 3.0, g.n_edges)
        unmatched = None
        if np.any(g.boundary):
            bnd = np.flatnonzero(g.boundary)
            covers = enumerate_covers(g)
            if covers and rng.random() < 0.8:
                unmatched = tuple(covers[int(rng.integers(len(covers)))].unmatched_boundary)
            else:
                unmatched = tuple(int(v) for v in bnd if rng.random() < 0.5)
        made += 1
        yield g, w, unmatched


@_timed
def check_counting(seeds=(0, 1, 2, 3, 4), per_seed=10, rtol=1e-9, max_vertices=36):
    """Kasteleyn determinants against exhaustive enumeration on random patches."""
    worst, n, nonzero = 0.0, 0, 0
    for seed in seeds:
        for g, w, unmatched in random_patches(seed, per_seed, max_vertices):
            kz = kasteleyn_count(g, w, unmatched)
            if unmatched is None:
                ez = partition_function(g, w)
            else:
                from .covers import enumerate_covers as enum

                ez = float(sum(np.prod(w[d.mask]) for d in enum(g, bc=set(unmatched))))
            err = abs(kz - ez) / max(abs(ez), 1e-300) if ez != 0 else abs(kz)
            worst = max(worst, err)
            n += 1
            nonzero += ez > 0
    ok = worst <= rtol and n >= 50
    return CheckResult("counting oracle", ok, f"{n} patches ({nonzero} with covers), max rel err {worst:.2e}",
                       data={"patches": n, "worst": worst})


# ---------------------------------------------------------------------------
# characteristic polynomial


def _gauge_equal(P, Q, tol):
    """Whether P = +-z^a w^b Q(+-z, +-w) for some gauge, comparing coefficients."""
    cp, cq = P.coeffs, Q.coeffs
    if len(cp) != len(cq):
        return False, np.inf
    best = np.inf
    kp = sorted(cp)
    kq = sorted(cq)
    shift = (kp[0][0] - kq[0][0], kp[0][1] - kq[0][1])
    for sz in (1, -1):
        for sw in (1, -1):
            for sg in (1, -1):
                err = 0.0
                for (i, j), c in cq.items():
                    key = (i + shift[0], j + shift[1])
                    if key not in cp:
                        err = np.inf
                        break
                    err = max(err, abs(cp[key] - sg * c * sz ** (i % 2) * sw ** (j % 2)))
                best = min(best, err)
    return best <= tol, best


@_timed
def check_characteristic_polynomial(tol=1e-12):
    """Square lattice (four-vertex domain): P = (1+z)^2/z + (1+w)^2/w up to gauge."""
    from .kasteleyn import LaurentPolynomial2

    P = characteristic_polynomial(load_preset("square2x2"))
    target = LaurentPolynomial2({(0, 0): 4.0, (1, 0): 1.0, (-1, 0): 1.0, (0, 1): 1.0, (0, -1): 1.0})
    ok, err = _gauge_equal(P, target, tol)
    return CheckResult("characteristic polynomial", ok, f"P = {P!r}, max coefficient error {err:.1e}")


# ---------------------------------------------------------------------------
# free energy and surface tension


@_timed
def check_free_energy(ns=range(2, 9), tol=1e-3):
    """Torus determinants n^-2 log Z(G(n)) extrapolated in 1/n^2 against the Ronkin integral."""
    from .surface import free_energy

    fd = load_preset("square")
    ns = np.asarray(list(ns), dtype=float)
    L = np.array([log_torus_partition(fd, int(n)) / n ** 2 for n in ns])
    A = np.column_stack([np.ones(len(ns)), 1.0 / ns ** 2])
    (a, b), *_ = np.linalg.lstsq(A, L, rcond=None)
    F = free_energy(characteristic_polynomial(fd))
    err = abs(F - a)
    return CheckResult("free energy", err <= tol, f"F = {F:.10f}, extrapolated {a:.10f}, |diff| = {err:.2e}",
                       data={"F": F, "extrapolated": a, "values": L.tolist()})


DUALITY_SLOPES = ((-0.5, -0.5), (-1 / 3, -1 / 3), (-1 / 3, -2 / 3), (-0.5, -1 / 3), (-0.25, -0.5))


@_timed
def check_duality(slopes=DUALITY_SLOPES, n_max=6, tol=5e-2, cross_check_n=2):
    """Legendre-transform sigma against fixed-slope torus partition functions.

    For each slope the largest n <= n_max with n*(s,t) integral is used.
    Fixed-slope values come from Fourier coefficients of the twisted
    determinant; at n = ``cross_check_n`` they are checked against explicit
    enumeration of torus covers.
    """
    from .surface import surface_tension

    fd = load_preset("square")
    P = characteristic_polynomial(fd)
    enum = enumerate_slope_counts(fd, cross_check_n)
    det = torus_slope_partition(fd, cross_check_n)
    mismatch = max(abs(enum.get(k, 0.0) - det.get(k, 0.0)) for k in set(enum) | set(det))
    rows, worst = [], 0.0
    for s, t in slopes:
        n = max(k for k in range(1, n_max + 1)
                if abs(k * s - round(k * s)) < 1e-9 and abs(k * t - round(k * t)) < 1e-9)
        Z = torus_slope_partition(fd, n)
        key = (int(round(n * s)), int(round(n * t)))
        direct = np.log(Z[key]) / n ** 2
        sig = surface_tension(P, s, t)
        worst = max(worst, abs(direct - sig))
        rows.append((s, t, n, sig, direct))
    ok = worst <= tol and mismatch < 1e-6
    detail = f"max |sigma - n^-2 log Z_st| = {worst:.3e} over {len(rows)} slopes; enumeration cross-check diff {mismatch:.1e}"
    return CheckResult("surface tension duality", ok, detail, data={"rows": rows})


@_timed
def check_concavity(table=None, resolution=64, pairs=100, tol=1e-5, seed=0):
    """Midpoint concavity of a sigma table and midpoint convexity of the Ronkin function."""
    from .surface import Ronkin, tabulate_sigma

    P = characteristic_polynomial(load_preset("square"))
    if table is None:
        table = tabulate_sigma(P, resolution)
    viol = table.concavity_violations(tol)
    R = Ronkin(P)
    rng = np.random.default_rng(seed)
    bad = 0
    worst = -np.inf
    for _ in range(pairs):
        a, b = rng.uniform(-3, 3, 2), rng.uniform(-3, 3, 2)
        m = 0.5 * (a + b)
        defect = R.value(*m) - 0.5 * (R.value(*a) + R.value(*b))
        worst = max(worst, defect)
        bad += defect > tol
    ok = not viol and bad == 0
    return CheckResult("concavity", ok,
                       f"sigma table r={table.resolution}: {len(viol)} violations; Ronkin: {bad}/{pairs} "
                       f"violations (max defect {worst:.1e})", data={"table": table})


# ---------------------------------------------------------------------------
# cutting rule


def cutting_cases(seed=0):
    """Patch / curve / weight combinations for the cutting rule."""
    rng = np.random.default_rng(seed)
    cases = []
    shapes = [(3, 3), (3, 4), (4, 3), (4, 4)]
    for rows, cols in shapes:
        curves = {
            "vertical": [(cols / 2 - 0.5 + 0.02, -2.0), (cols / 2 - 0.5 + 0.02, rows + 1.0)],
            "horizontal": [(-2.0, rows / 2 - 0.5 + 0.03), (cols + 1.0, rows / 2 - 0.5 + 0.03)],
            "L": [(0.5 + 0.01, -2.0), (0.5 + 0.01, rows - 1.5 + 0.02), (cols + 1.0, rows - 1.5 + 0.02)],
        }
        for name, curve in curves.items():
            if rows * cols > 12 and name == "horizontal":
                continue
            cases.append((f"grid{rows}x{cols}-{name}", grid_graph(rows, cols, collar=True), curve,
                          int(rng.integers(1 << 30))))
    return cases


@_timed
def check_cutting(seed=0, rtol=1e-12, cases=None, max_cases=None):
    """Z(G, chi) against the sum over boundary conditions along a cutting curve."""
    cases = cutting_cases(seed) if cases is None else cases
    if max_cases is not None:
        cases = cases[:max_cases]
    worst, done = 0.0, 0
    for name, g, curve, wseed in cases:
        rng = np.random.default_rng(wseed)
        w = rng.uniform(0.3, 3.0, g.n_edges)
        covers = enumerate_covers(g)
        d = covers[int(rng.integers(len(covers)))]
        bc = boundary_condition(d)
        lhs, rhs, _ = cutting_rule_sides(g, curve, bc, w)
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
        done += 1
    return CheckResult("cutting rule", worst <= rtol and done >= min(10, len(cases)),
                       f"{done} combinations, max rel err {worst:.2e}")


# ---------------------------------------------------------------------------
# probabilistic lemmas


@_timed
def check_concentration(order=3, avals=(1.0, 2.0, 3.0)):
    """Exact tails of |h(v) - hbar(v)| against 2 exp(-a^2/2) at every internal face."""
    from .montecarlo import concentration_check, distance_to_boundary, exact_height_distribution

    g = aztec_diamond(order)
    covers = enumerate_covers(g)
    viol, total, worst_ratio = 0, 0, 0.0
    for a in avals:
        for r in concentration_check(g, a=a, covers=covers):
            total += 1
            viol += not r.ok
            worst_ratio = max(worst_ratio, r.tail / r.bound)
    H, p = exact_height_distribution(g, covers=covers)
    m = distance_to_boundary(g)
    inner = g.internal_faces
    dev = np.abs(H[:, inner] - (p @ H)[inner]) / np.sqrt(m[inner])
    return CheckResult("concentration", viol == 0,
                       f"{total} (face, a) cases on {len(covers)} covers, {viol} violations, "
                       f"max tail/bound {worst_ratio:.3f}, max |h - hbar|/sqrt(m) {dev.max():.3f}")


@_timed
def check_coupling(order=2, systems=20, seed=0):
    """hbar_f <= hbar_g for all comparable boundary pairs under random weights."""
    from .montecarlo import BoundaryClasses, coupling_monotonicity_check

    g = aztec_diamond(order, collar=True)
    classes = BoundaryClasses.build(g)
    rng = np.random.default_rng(seed)
    viol, worst = 0, -np.inf
    pairs = 0
    for _ in range(systems):
        w = rng.uniform(0.2, 5.0, g.n_edges)
        ok, wv, pairs = coupling_monotonicity_check(g, w, classes=classes)
        viol += not ok
        worst = max(worst, wv)
    return CheckResult("coupling monotonicity", viol == 0,
                       f"{systems} weight systems x {pairs} pairs, {viol} violating systems, "
                       f"max (hbar_f - hbar_g) {worst:.1e}")


# ---------------------------------------------------------------------------
# discretization rate


def smooth_field(p):
    """A fixed asymptotic field on the unit square with gradient inside [-1, 0]^2."""
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    return -0.5 * x - 0.5 * y + 0.1 * np.sin(np.pi * x) * np.sin(np.pi * y)


@_timed
def check_density(ns=(8, 16, 32), spread=0.25):
    """n * sup |h - eta_n / n| stays within +-25% of its mean across n."""
    from .calculus import density_error, discretize

    fd = load_preset("square")
    region = [(0, 0), (1, 0), (1, 1), (0, 1)]
    C = []
    for n in ns:
        g = planar_patch(fd, n, region)
        eta = discretize(smooth_field, g)
        C.append(n * density_error(smooth_field, eta))
    C = np.asarray(C)
    dev = np.max(np.abs(C / C.mean() - 1.0))
    return CheckResult("discretization rate", dev <= spread,
                       "C_n = " + ", ".join(f"{c:.3f}" for c in C) + f"; max deviation {dev:.1%}",
                       data={"C": C.tolist()})


# ---------------------------------------------------------------------------
# variational principle


def aztec_boundary(n_ref=128):
    """Continuum boundary data of the Aztec diamond on [-1/2, 1/2]^2 from a fine patch."""
    from .covers import height_function, reference_cover
    from .montecarlo import cover_with_unmatched
    from .varsolve import boundary_function, patch_boundary_heights

    region = np.array([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])
    g = aztec_diamond(n_ref, collar=True)
    d = cover_with_unmatched(g, np.flatnonzero(g.boundary))
    h = height_function(d, reference_cover(g))
    return region, boundary_function(region, *patch_boundary_heights(g, h.values))


@_timed
def check_variational(table=None, ns=(16, 32, 64), mesh=64, sweeps_per_site=2.0, seed=0, bound=0.05,
                      margin=0.1, resolution=32):
    """Solver limit shape against sampled mean heights and n^-2 log Z on Aztec diamonds."""
    from .kasteleyn import log_kasteleyn_count
    from .montecarlo import cover_with_unmatched, estimate_mean_height
    from .surface import tabulate_sigma
    from .varsolve import VariationalProblem, compare_with_sampler, solve

    if table is None:
        table = tabulate_sigma(characteristic_polynomial(load_preset("square")), resolution)
    region, chi = aztec_boundary()
    res = solve(VariationalProblem(region, chi, table), m=mesh, repair_tol=0.05)
    dists, gaps = [], []
    for n in ns:
        g = aztec_diamond(n, collar=True)
        d = cover_with_unmatched(g, np.flatnonzero(g.boundary))
        steps = int(sweeps_per_site * len(g.internal_faces) * n * n)
        est = estimate_mean_height(g, cover=d, steps=steps, burn_in=steps // 2, seed=seed + n)
        cmp = compare_with_sampler(res, np.clip(g.face_centroids, -0.5, 0.5), est.mean, n, margin=margin,
                                   align=np.asarray(g.boundary_faces))
        dists.append(cmp.distance)
        lz = log_kasteleyn_count(aztec_diamond(n))
        gaps.append(abs(lz / n ** 2 - res.value))
    mono_d = all(a > b for a, b in zip(dists, dists[1:]))
    mono_g = all(a > b for a, b in zip(gaps, gaps[1:]))
    ok = mono_d and mono_g and dists[-1] <= bound
    detail = ("sup dist " + ", ".join(f"{x:.4f}" for x in dists) + "; |n^-2 log Z - F(g)| "
              + ", ".join(f"{x:.4f}" for x in gaps) + f"; F(g) = {res.value:.5f}")
    return CheckResult("variational principle", ok, detail,
                       data={"dists": dists, "gaps": gaps, "value": res.value, "result": res})


# ---------------------------------------------------------------------------
# absolute heights


@_timed
def check_absolute_heights(rows=4, cols=4):
    """Local-rule functions biject with covers; every cover is modified-Lipschitz."""
    g = grid_graph(rows, cols, collar=True)
    covers = enumerate_covers(g)
    n_rule = count_local_rule_functions(g)
    dist = oriented_distances(g)
    lip_fail = sum(not modified_lipschitz_check(d, dist).ok for d in covers)
    rule_fail = sum(not check_local_rule(absolute_height(d), g) for d in covers)
    ok = n_rule == len(covers) and lip_fail == 0 and rule_fail == 0
    return CheckResult("absolute heights", ok,
                       f"{len(covers)} covers, {n_rule} local-rule functions, {rule_fail} rule failures, "
                       f"{lip_fail} Lipschitz failures")


FAST = ("counting", "charpoly", "cutting", "concentration", "coupling", "absolute_heights")
FULL = FAST + ("free_energy", "duality", "concavity", "density", "variational")

CHECKS = {
    "counting": check_counting,
    "charpoly": check_characteristic_polynomial,
    "free_energy": check_free_energy,
    "duality": check_duality,
    "concavity": check_concavity,
    "cutting": check_cutting,
    "concentration": check_concentration,
    "coupling": check_coupling,
    "density": check_density,
    "variational": check_variational,
    "absolute_heights": check_absolute_heights,
}

FAST_ARGS = {
    "counting": {"seeds": (0, 1, 2, 3, 4), "per_seed": 10},
    "coupling": {"systems": 3},
    "cutting": {"max_cases": 10},
}
