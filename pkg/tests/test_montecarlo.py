import numpy as np
import pytest

from dimerlab.covers import DimerCover, enumerate_covers, height_function
from dimerlab.gibbs import mean_height
from dimerlab.lattice import aztec_diamond, cycle_graph
from dimerlab.montecarlo import (BoundaryClasses, ChainState, concentration_check, coupling_monotonicity_check,
                                 cover_with_unmatched, estimate_mean_height, exact_height_distribution,
                                 flip_reachable, glauber_step, make_rng, run_chain)


def test_four_cycle_stationary_frequencies():
    g = cycle_graph((1.0, 2.0, 3.0, 4.0))
    covers = enumerate_covers(g)
    est = estimate_mean_height(g, steps=200_000, burn_in=1000, seed=3, cover=covers[0])
    exact = mean_height(g)
    assert np.all(np.abs(est.mean - exact) <= 5 * est.stderr + 1e-12)


def test_glauber_steps_keep_a_valid_cover():
    g = aztec_diamond(3)
    state = ChainState.start(g, cover=enumerate_covers(g)[0], seed=1)
    rng = make_rng(1)
    for _ in range(300):
        glauber_step(state, rng)
    DimerCover(g, state.cover.edges)  # validates
    assert np.array_equal(state.heights, height_function(state.cover).values)


def test_run_chain_keeps_heights_consistent():
    g = aztec_diamond(4)
    state = ChainState.start(g, cover=enumerate_covers(g)[0], seed=2)
    run_chain(state, 5000)
    assert np.array_equal(state.heights, height_function(state.cover).values)


def test_chain_is_deterministic_given_seed():
    g = aztec_diamond(3)
    d = enumerate_covers(g)[0]
    a = estimate_mean_height(g, steps=5000, burn_in=100, seed=9, cover=d)
    b = estimate_mean_height(g, steps=5000, burn_in=100, seed=9, cover=d)
    assert np.array_equal(a.mean, b.mean)


def test_rotations_connect_all_covers():
    g = aztec_diamond(2)
    covers = enumerate_covers(g)
    assert len(flip_reachable(g, covers[0])) == len(covers)


def test_sampled_mean_matches_exact_mean():
    g = aztec_diamond(3)
    est = estimate_mean_height(g, steps=400_000, burn_in=10_000, seed=5, cover=enumerate_covers(g)[0])
    exact = mean_height(g)
    z = np.abs(est.mean - exact)[est.stderr > 0] / est.stderr[est.stderr > 0]
    assert z.max() < 5


def test_cover_with_unmatched_boundary():
    g = aztec_diamond(6, collar=True)
    d = cover_with_unmatched(g, np.flatnonzero(g.boundary))
    assert d.unmatched_boundary == tuple(np.flatnonzero(g.boundary))


def test_exact_distribution_is_normalized():
    g = aztec_diamond(2)
    H, p = exact_height_distribution(g)
    assert p.sum() == pytest.approx(1.0)
    assert np.allclose(p @ H, mean_height(g))


def test_concentration_aztec2():
    g = aztec_diamond(2)
    assert all(r.ok for r in concentration_check(g, a=1.0))


def test_coupling_monotone_on_small_diamond():
    g = aztec_diamond(1, collar=True)
    classes = BoundaryClasses.build(g)
    rng = np.random.default_rng(0)
    for _ in range(3):
        ok, worst, pairs = coupling_monotonicity_check(g, rng.uniform(0.2, 5.0, g.n_edges), classes=classes)
        assert ok and pairs > 0
