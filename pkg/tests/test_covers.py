import numpy as np
import pytest

from dimerlab.covers import (DimerCover, absolute_height, check_local_rule, count_covers,
                             count_local_rule_functions, enumerate_covers, height_function, load_covers,
                             matching_cover, modified_lipschitz_check, newton_polygon, save_covers, slope)
from dimerlab.errors import InvalidGraph, TooLarge
from dimerlab.lattice import aztec_diamond, cycle_graph, grid_graph, load_preset, torus_quotient


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_aztec_cover_counts(order):
    # 2^(n(n+1)/2)
    assert count_covers(aztec_diamond(order)) == 2 ** (order * (order + 1) // 2)


def test_enumeration_guard():
    with pytest.raises(TooLarge):
        enumerate_covers(aztec_diamond(5))


def test_cover_validation():
    g = cycle_graph()
    with pytest.raises(InvalidGraph):
        DimerCover(g, [0, 1])


def test_four_cycle_heights_differ_by_one_on_inner_face():
    g = cycle_graph()
    covers = enumerate_covers(g)
    assert len(covers) == 2
    h = [height_function(c, covers[0]).values for c in covers]
    assert h[0].tolist() == [0, 0]
    assert abs(h[1][0] - h[1][1]) == 1


def test_matching_cover_is_a_cover():
    g = aztec_diamond(8)
    d = matching_cover(g)
    assert np.all(d.matched_count() == 1)


@pytest.mark.parametrize("name, vertices, area", [
    ("square", [(-1, -1), (0, -1), (0, 0), (-1, 0)], 1.0),
    ("hexagonal", [(-1, 0), (0, 0), (0, 1)], 0.5),
    ("square2x2", [(-1, 0), (0, -1), (1, 0), (0, 1)], 2.0),
])
def test_newton_polygons(name, vertices, area):
    N = newton_polygon(load_preset(name))
    assert N.vertices == vertices
    assert N.area() == area


def test_torus_slopes_fill_scaled_polygon():
    t = torus_quotient(load_preset("square"), 2)
    covers = enumerate_covers(t)
    slopes = {slope(c, covers[0]) for c in covers}
    # every lattice point of 2 N is a slope
    assert slopes == {(i, j) for i in (-2, -1, 0) for j in (-2, -1, 0)}


def test_local_rule_bijection_and_lipschitz():
    g = grid_graph(3, 3, collar=True)
    covers = enumerate_covers(g)
    assert count_local_rule_functions(g) == len(covers) == 448
    for d in covers[::37]:
        assert check_local_rule(absolute_height(d), g)
        assert modified_lipschitz_check(d).ok


def test_cover_file_round_trip(tmp_path):
    g = aztec_diamond(2)
    covers = enumerate_covers(g)
    path = tmp_path / "covers.json"
    save_covers(covers, path)
    again = load_covers(g, path)
    assert [c.key() for c in again] == [c.key() for c in covers]
