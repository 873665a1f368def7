import numpy as np
import pytest

from dimerlab.errors import EmptyPatch, InvalidGraph
from dimerlab.lattice import (FundamentalDomain, PlanarGraph, aztec_diamond, cycle_graph, grid_graph,
                              hausdorff_to_region, load_preset, planar_patch, torus_quotient)

UNIT = [(0, 0), (1, 0), (1, 1), (0, 1)]


def test_presets_load():
    assert load_preset("square").n_vertices == 2
    assert load_preset("square").n_edges == 4
    assert load_preset("hexagonal").n_edges == 3
    assert load_preset("square2x2").n_vertices == 4


@pytest.mark.parametrize("n", [1, 2, 3])
def test_torus_quotient_euler_characteristic(n):
    t = torus_quotient(load_preset("square"), n)
    assert t.n_vertices == 2 * n * n
    assert t.n_edges == 4 * n * n
    assert t.n_vertices - t.n_edges + t.n_faces == 0


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_aztec_diamond_sizes(order):
    g = aztec_diamond(order)
    assert g.n_vertices == 2 * order * (order + 1)
    # planar Euler formula including the outer face
    assert g.n_vertices - g.n_edges + g.n_faces == 2


def test_cycle_graph_faces():
    g = cycle_graph()
    assert g.n_faces == 2
    assert list(g.internal_faces) == [0]


def test_grid_with_collar():
    g = grid_graph(3, 3, collar=True)
    assert g.boundary.sum() == 12
    assert len(g.internal_faces) == 4


def test_patch_hausdorff_shrinks_like_one_over_n():
    fd = load_preset("square")
    d = [hausdorff_to_region(planar_patch(fd, n, UNIT), UNIT) for n in (4, 8, 16)]
    assert d[0] > d[1] > d[2]
    assert d[2] <= 1.0 / 16


def test_empty_patch_raises():
    with pytest.raises(EmptyPatch):
        planar_patch(load_preset("square"), 1, [(0.1, 0.1), (0.2, 0.1), (0.2, 0.2)])


def test_graph_round_trip():
    g = grid_graph(3, 3, collar=True)
    h = PlanarGraph.from_dict(g.to_dict())
    assert h.n_faces == g.n_faces
    assert np.allclose(h.pos, g.pos)
    assert np.array_equal(h.boundary, g.boundary)


def _fd_dict():
    return load_preset("square").to_dict()


def test_fundamental_domain_rejects_bad_input():
    bad = _fd_dict()
    bad["edges"][0]["weight"] = 0.0
    with pytest.raises(InvalidGraph):
        FundamentalDomain.from_dict(bad)
    bad = _fd_dict()
    bad["vertices"][1]["color"] = bad["vertices"][0]["color"]
    with pytest.raises(InvalidGraph):
        FundamentalDomain.from_dict(bad)
    with pytest.raises(InvalidGraph):
        FundamentalDomain.from_dict({"vertices": []})
