import numpy as np
import pytest

from dimerlab.calculus import extension_values
from dimerlab.errors import GridMismatch, InfeasibleField, NotExtendable
from dimerlab.kasteleyn import characteristic_polynomial
from dimerlab.lattice import load_preset
from dimerlab.surface import tabulate_sigma
from dimerlab.varsolve import (Mesh, VariationalProblem, boundary_function, compare_with_sampler,
                               functional_value, solve)

UNIT = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], dtype=float)


@pytest.fixture(scope="module")
def table():
    return tabulate_sigma(characteristic_polynomial(load_preset("square")), 4)


def linear(s, t, c=0.0):
    return lambda p: s * np.atleast_2d(p)[:, 0] + t * np.atleast_2d(p)[:, 1] + c


def test_mesh_structure():
    mesh = Mesh.build(UNIT, 8)
    assert mesh.n_nodes == 81
    assert len(mesh.triangles) == 128
    assert mesh.areas.sum() == pytest.approx(1.0)
    assert mesh.boundary.sum() == 32
    # a proper colouring: no triangle repeats a colour
    c = mesh.colors()[mesh.triangles]
    assert np.all((c[:, 0] != c[:, 1]) & (c[:, 1] != c[:, 2]) & (c[:, 0] != c[:, 2]))


def test_mesh_interpolation_is_exact_for_linear_values():
    mesh = Mesh.build(UNIT, 8)
    f = linear(0.3, -0.7, 0.1)
    pts = np.random.default_rng(0).uniform(0, 1, (50, 2))
    assert np.allclose(mesh.interpolate(f(mesh.points), pts), f(pts))
    with pytest.raises(GridMismatch):
        mesh.interpolate(f(mesh.points), [[1.5, 0.5]])


def test_linear_boundary_data_gives_the_plane(table):
    res = solve(VariationalProblem(UNIT, linear(-0.5, -0.25), table), m=16)
    assert res.converged
    assert np.allclose(res.field.values, linear(-0.5, -0.25)(res.field.points), atol=1e-6)
    assert res.value == pytest.approx(table(-0.5, -0.25), abs=1e-9)


def test_tilted_data_solution_properties(table):
    # curved boundary data with gradients inside [-1, 0]^2
    chi = lambda p: -0.5 * np.atleast_2d(p)[:, 0] ** 2 - 0.5 * np.atleast_2d(p)[:, 1]
    prob = VariationalProblem(UNIT, chi, table)
    res = solve(prob, m=16, coarsest=16)
    # monotone ascent across sweeps (single level, so the history is one run)
    assert np.all(np.diff(res.history) >= -1e-12)
    assert res.value == pytest.approx(res.history[-1], abs=1e-9)
    # feasibility and the sandwich
    assert len(res.field.gradient_violations(prob.N, 1e-7)) == 0
    bd = prob.boundary_data()
    hi = extension_values(prob.N, res.field.points, bd, "max")
    lo = extension_values(prob.N, res.field.points, bd, "min")
    assert np.all(lo - 1e-9 <= res.field.values) and np.all(res.field.values <= hi + 1e-9)
    # boundary fidelity
    b = res.mesh.boundary
    assert np.max(np.abs(res.field.values[b] - chi(res.field.points[b]))) <= res.mesh.h
    # local maximality under random feasible perturbations
    rng = np.random.default_rng(0)
    free = np.flatnonzero(~b)
    tried = 0
    for _ in range(100):
        v = res.field.values.copy()
        v[rng.choice(free, 3, replace=False)] += rng.normal(0, 0.01, 3)
        try:
            val = functional_value(res.mesh.field(v), table)
        except InfeasibleField:
            continue
        tried += 1
        assert val <= res.value + 1e-9
    assert tried > 0


def test_inconsistent_boundary_data_is_rejected(table):
    # slope +1 along x is outside the Newton polygon [-1, 0]^2
    with pytest.raises(NotExtendable):
        solve(VariationalProblem(UNIT, linear(1.0, 0.0), table), m=8)


def test_boundary_function_interpolates_periodically():
    pts = np.array([(0.5, 0.0), (1.0, 0.5), (0.5, 1.0), (0.0, 0.5)])
    chi = boundary_function(UNIT, pts, [0.0, 1.0, 2.0, 1.0])
    assert chi(np.array([[1.0, 0.0]]))[0] == pytest.approx(0.5)
    assert chi(np.array([[0.0, 0.0]]))[0] == pytest.approx(0.5)


def test_compare_with_sampler_on_identical_field(table):
    res = solve(VariationalProblem(UNIT, linear(-0.5, -0.25), table), m=8)
    n = 10
    pts = np.random.default_rng(1).uniform(0, 1, (40, 2))
    heights = n * linear(-0.5, -0.25, 3.0)(pts)
    cmp = compare_with_sampler(res, pts, heights, n, align=np.arange(40))
    assert cmp.distance == pytest.approx(0.0, abs=1e-6)
    assert cmp.offset == pytest.approx(-3.0)
