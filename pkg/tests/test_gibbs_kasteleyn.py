import numpy as np
import pytest

from dimerlab.covers import enumerate_covers, height_function
from dimerlab.errors import BoundaryEdge
from dimerlab.gibbs import (BoundaryCondition, boltzmann_probability, boundary_condition,
                            boundary_partition_functions, cut_edge, cutting_rule_sides, mean_height,
                            partition_function)
from dimerlab.kasteleyn import (LaurentPolynomial2, characteristic_polynomial, edge_probabilities,
                                enumerate_slope_counts, kasteleyn_count, log_kasteleyn_count_free,
                                log_torus_partition, torus_slope_partition)
from dimerlab.lattice import aztec_diamond, cycle_graph, grid_graph, load_preset
from dimerlab.verification import cutting_cases


def test_four_cycle_partition_function_and_probabilities():
    g = cycle_graph((1.0, 2.0, 3.0, 4.0))
    # the two covers weigh 1*3 and 2*4
    assert partition_function(g, exact=True) == 11
    assert kasteleyn_count(g) == pytest.approx(11.0, rel=1e-12)
    assert np.allclose(edge_probabilities(g), [3 / 11, 8 / 11, 3 / 11, 8 / 11])
    d = enumerate_covers(g)[0]
    assert boltzmann_probability(d) + boltzmann_probability(enumerate_covers(g)[1]) == pytest.approx(1.0)


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_kasteleyn_counts_aztec(order):
    assert kasteleyn_count(aztec_diamond(order)) == pytest.approx(2.0 ** (order * (order + 1) // 2), rel=1e-12)


def test_edge_probabilities_cover_each_vertex_once():
    g = aztec_diamond(6)
    p = edge_probabilities(g)
    per_vertex = (np.bincount(g.ewhite, weights=p, minlength=g.n_vertices)
                  + np.bincount(g.eblack, weights=p, minlength=g.n_vertices))
    assert np.allclose(per_vertex[~g.boundary], 1.0, atol=1e-10)


def test_free_boundary_count_matches_enumeration():
    g = grid_graph(2, 2, collar=True)
    assert np.exp(log_kasteleyn_count_free(g)) == pytest.approx(partition_function(g), rel=1e-12)


def test_boundary_decomposition_sums_to_total():
    g = grid_graph(3, 3, collar=True)
    rng = np.random.default_rng(3)
    w = rng.uniform(0.5, 2.0, g.n_edges)
    parts = boundary_partition_functions(g, w)
    assert sum(parts.values()) == pytest.approx(partition_function(g, w), rel=1e-12)


def test_boundary_condition_round_trip(tmp_path):
    g = grid_graph(3, 3, collar=True)
    d = enumerate_covers(g)[7]
    bc = boundary_condition(d)
    path = tmp_path / "bc.json"
    path.write_text(__import__("json").dumps(bc.as_dict()))
    assert BoundaryCondition.load(path) == bc
    assert partition_function(g, bc=bc) >= 1


def test_mean_height_matches_direct_average():
    g = aztec_diamond(2)
    covers = enumerate_covers(g)
    direct = np.mean([height_function(d).values for d in covers], axis=0)
    assert np.allclose(mean_height(g), direct)


def test_cut_edge_preserves_weights():
    g = grid_graph(3, 3, collar=True)
    rng = np.random.default_rng(1)
    w = rng.uniform(0.5, 2.0, g.n_edges)
    internal = [e for e in range(g.n_edges) if not (g.boundary[g.ewhite[e]] or g.boundary[g.eblack[e]])]
    g2, w2, phi = cut_edge(g, internal[0], w)
    for d in enumerate_covers(g):
        assert phi(d).weight(w2) == pytest.approx(d.weight(w))
    boundary_edge = next(e for e in range(g.n_edges) if g.boundary[g.eblack[e]] or g.boundary[g.ewhite[e]])
    with pytest.raises(BoundaryEdge):
        cut_edge(g, boundary_edge, w)


def test_cutting_rule_identity():
    name, g, curve, seed = cutting_cases(0)[0]
    w = np.random.default_rng(seed).uniform(0.3, 3.0, g.n_edges)
    bc = boundary_condition(enumerate_covers(g)[0])
    lhs, rhs, _ = cutting_rule_sides(g, curve, bc, w)
    assert rhs == pytest.approx(lhs, rel=1e-12)


def test_characteristic_polynomial_square_gauge():
    P = characteristic_polynomial(load_preset("square"))
    assert sorted(P.support()) == [(-1, -1), (-1, 0), (0, -1), (0, 0)]
    assert sorted(abs(c) for c in P.coeffs.values()) == [1, 1, 1, 1]
    hexa = characteristic_polynomial(load_preset("hexagonal"))
    assert hexa == LaurentPolynomial2({(-1, 0): 1.0, (0, 0): 1.0, (0, 1): 1.0})


def test_torus_slope_partition_matches_enumeration():
    fd = load_preset("square")
    det = torus_slope_partition(fd, 2)
    enum = enumerate_slope_counts(fd, 2)
    assert set(det) == set(enum)
    for k in det:
        assert det[k] == pytest.approx(enum[k], abs=1e-9)
    assert np.exp(log_torus_partition(fd, 2)) == pytest.approx(sum(enum.values()))
