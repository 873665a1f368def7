import numpy as np
import pytest

from dimerlab.calculus import (AsymptoticHeightField, BoundaryData, density_error, discretize,
                               exhaustive_support_height, extendable, extension_criterion,
                               graph_max_extension, graph_min_extension, lipschitz_repair, max_extension,
                               min_extension, normalized_support, pl_approximation, support_function,
                               support_height_matrix)
from dimerlab.covers import enumerate_covers, height_function, newton_polygon
from dimerlab.errors import NotExtendable
from dimerlab.gibbs import boundary_condition
from dimerlab.lattice import aztec_diamond, grid_graph, load_preset
from dimerlab.verification import smooth_field

UNIT = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], dtype=float)


@pytest.fixture(scope="module")
def square_N():
    return newton_polygon(load_preset("square"))


def test_support_function_of_square(square_N):
    # hull [-1, 0]^2: theta(x) = max(0, -x1) + max(0, -x2)
    for x in [(1, 1), (-1, 0), (-0.5, -0.25), (0.3, -0.7)]:
        assert support_function(square_N, x) == pytest.approx(max(0, -x[0]) + max(0, -x[1]))


def test_support_height_equals_enumeration():
    g = grid_graph(3, 3, collar=True)
    covers = enumerate_covers(g)
    assert np.array_equal(support_height_matrix(g), exhaustive_support_height(g, covers))


def test_normalized_support_approaches_theta(square_N):
    fd = load_preset("square")
    for x, y in [((0.5, 0.5), (0.0, 0.0)), ((0.0, 0.0), (0.5, 0.5)), ((0.0, 0.0), (0.5, -0.25))]:
        x, y = np.array(x), np.array(y)
        assert normalized_support(fd, 16, x, y) == pytest.approx(support_function(square_N, x - y), abs=0.15)


def test_graph_extensions_sandwich_every_cover():
    g = aztec_diamond(2, collar=True)
    covers = enumerate_covers(g)
    d = covers[0]
    chi = boundary_condition(d).as_dict()
    chi = {int(k): v for k, v in chi.items()}
    hmax, hmin = graph_max_extension(g, chi), graph_min_extension(g, chi)
    assert np.all(hmin.values <= hmax.values)
    for c in covers:
        if boundary_condition(c) == boundary_condition(d):
            h = height_function(c).values
            assert np.all(hmin.values <= h) and np.all(h <= hmax.values)
    f = next(iter(chi))
    chi[f] += 3
    assert not extension_criterion(g, chi)
    with pytest.raises(NotExtendable):
        graph_max_extension(g, chi)


def test_continuum_extensions_of_linear_data(square_N):
    chi = lambda p: -0.5 * p[0] - 0.25 * p[1]
    bd = BoundaryData.from_function(UNIT, chi, per_edge=32)
    assert extendable(square_N, bd)[0]
    hi = max_extension(UNIT, square_N, bd, m=16)
    lo = min_extension(UNIT, square_N, bd, m=16)
    assert np.all(lo.values <= hi.values + 1e-12)
    assert len(hi.gradient_violations(square_N, 1e-9)) == 0


def test_lipschitz_repair_leaves_extendable_data_alone(square_N):
    bd = BoundaryData.from_function(UNIT, lambda p: -0.5 * p[0], per_edge=16)
    fixed, change = lipschitz_repair(square_N, bd)
    assert change == pytest.approx(0.0, abs=1e-12)
    bad = BoundaryData(bd.points, bd.values + np.where(np.arange(len(bd.values)) == 5, 2.0, 0.0))
    assert not extendable(square_N, bad)[0]
    fixed, change = lipschitz_repair(square_N, bad)
    # the spike is cut down to what its neighbours allow, one sample spacing away
    assert 1.9 < change <= 2.0
    assert extendable(square_N, fixed, tol=1e-9)[0]


def test_discretize_error_scales_like_one_over_n():
    from dimerlab.lattice import planar_patch

    fd = load_preset("square")
    C = []
    for n in (8, 16):
        eta = discretize(smooth_field, planar_patch(fd, n, UNIT))
        C.append(n * density_error(smooth_field, eta))
    assert max(C) / min(C) < 1.5


def test_field_csv_round_trip(tmp_path):
    pts = np.array([(0, 0), (1, 0), (0, 1), (1, 1)], dtype=float)
    fld = AsymptoticHeightField(pts, -0.5 * pts[:, 0], np.array([[0, 1, 2], [1, 3, 2]]), 1.0)
    path = tmp_path / "g.csv"
    fld.to_csv(path)
    again = AsymptoticHeightField.from_csv(path)
    assert np.allclose(again.points, pts)
    assert np.allclose(again.values, fld.values)


def test_pl_approximation_of_smooth_field(square_N):
    res = pl_approximation(smooth_field, UNIT, 0.125, square_N)
    assert res.fraction_within(0.05) >= 0.9
