import numpy as np
import pytest

from dimerlab.errors import OutsidePolygon
from dimerlab.kasteleyn import characteristic_polynomial
from dimerlab.lattice import load_preset
from dimerlab.surface import (Ronkin, SurfaceTensionTable, free_energy, ronkin, surface_tension,
                              tabulate_sigma)

CATALAN = 0.915965594177219015


@pytest.fixture(scope="module")
def square_P():
    return characteristic_polynomial(load_preset("square"))


def test_square_free_energy_is_two_catalan_over_pi(square_P):
    assert free_energy(square_P) == pytest.approx(2 * CATALAN / np.pi, abs=1e-10)


def test_hexagonal_free_energy(square_P):
    P = characteristic_polynomial(load_preset("hexagonal"))
    # lozenge entropy per vertex is 0.16153...
    assert free_energy(P) / 2 == pytest.approx(0.161533, abs=1e-6)


def test_ronkin_at_origin_equals_free_energy(square_P):
    assert ronkin(square_P, 0.0, 0.0) == pytest.approx(free_energy(square_P), abs=1e-10)


def test_ronkin_midpoint_convexity(square_P):
    R = Ronkin(square_P)
    rng = np.random.default_rng(0)
    for _ in range(10):
        a, b = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2)
        assert R.value(*(0.5 * (a + b))) <= 0.5 * (R.value(*a) + R.value(*b)) + 1e-8


def test_surface_tension_values(square_P):
    assert surface_tension(square_P, -0.5, -0.5) == pytest.approx(2 * CATALAN / np.pi, abs=1e-8)
    # frozen corners carry no entropy
    for corner in [(-1, -1), (0, -1), (0, 0), (-1, 0)]:
        assert surface_tension(square_P, *corner) == pytest.approx(0.0, abs=1e-10)
    # the square lattice is symmetric under swapping the two slope coordinates
    assert surface_tension(square_P, -0.25, -0.5) == pytest.approx(surface_tension(square_P, -0.5, -0.25),
                                                                  abs=1e-8)


def test_surface_tension_outside_polygon(square_P):
    with pytest.raises(OutsidePolygon):
        surface_tension(square_P, 0.5, 0.5)


def test_table_interpolation_and_round_trip(square_P, tmp_path):
    table = tabulate_sigma(square_P, 4)
    assert len(table.sigma) == 25
    assert table.concavity_violations(1e-5) == []
    assert table(-0.5, -0.5) == pytest.approx(2 * CATALAN / np.pi, abs=1e-8)
    # values between nodes lie between the exact value and zero
    mid = table(-0.375, -0.375)
    assert 0.0 < mid <= surface_tension(square_P, -0.375, -0.375) + 1e-9
    path = tmp_path / "sigma.csv"
    table.to_csv(path)
    again = SurfaceTensionTable.from_csv(path)
    assert np.array_equal(again.sigma, table.sigma)
    assert again(-0.3, -0.6) == table(-0.3, -0.6)
    with pytest.raises(OutsidePolygon):
        table(0.2, 0.2)


def test_interpolant_is_concave_along_lines(square_P):
    table = tabulate_sigma(square_P, 6)
    rng = np.random.default_rng(1)
    for _ in range(200):
        a, b = rng.uniform(-1, 0, 2), rng.uniform(-1, 0, 2)
        assert table(*(0.5 * (a + b))) >= 0.5 * (table(*a) + table(*b)) - 1e-12
