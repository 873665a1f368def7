"""Acceptance criteria 1 to 11, each at its stated tolerance and runtime budget.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""
import time

import pytest

from dimerlab import verification as V


def record(log, number, res, budget=None):
    within = budget is None or res.seconds <= budget
    ok = res.ok and within
    limit = "" if budget is None else f" [budget {budget:.0f}s]"
    line = f"AC{number:<3} {'PASS' if ok else 'FAIL'}  {res.name}: {res.detail} ({res.seconds:.1f}s){limit}"
    log.append(line)
    print(line)
    assert res.ok, res.detail
    assert within, f"runtime {res.seconds:.1f}s exceeds {budget}s"


def test_ac01_counting_oracle(acceptance_log):
    res = V.check_counting(seeds=(0, 1, 2, 3, 4), per_seed=10, rtol=1e-9, max_vertices=36)
    assert res.data["patches"] >= 50
    record(acceptance_log, 1, res, budget=60)


def test_ac02_characteristic_polynomial(acceptance_log):
    record(acceptance_log, 2, V.check_characteristic_polynomial(tol=1e-12), budget=10)


def test_ac03_free_energy(acceptance_log):
    record(acceptance_log, 3, V.check_free_energy(ns=range(2, 9), tol=1e-3), budget=120)


def test_ac04_surface_tension_duality(acceptance_log):
    res = V.check_duality(n_max=6, tol=5e-2)
    assert len(res.data["rows"]) == 5
    record(acceptance_log, 4, res, budget=300)


def test_ac05_concavity(acceptance_log, square_table_64):
    res = V.check_concavity(table=square_table_64, pairs=100, tol=1e-5)
    assert square_table_64.resolution == 64
    record(acceptance_log, 5, res)


def test_ac06_cutting_rule(acceptance_log):
    res = V.check_cutting(rtol=1e-12)
    assert int(res.detail.split()[0]) >= 10
    record(acceptance_log, 6, res, budget=60)


def test_ac07_concentration(acceptance_log):
    record(acceptance_log, 7, V.check_concentration(order=3, avals=(1.0, 2.0, 3.0)), budget=60)


def test_ac08_coupling_monotonicity(acceptance_log):
    record(acceptance_log, 8, V.check_coupling(order=2, systems=20))


def test_ac09_discretization_rate(acceptance_log):
    record(acceptance_log, 9, V.check_density(ns=(8, 16, 32), spread=0.25))


def test_ac10_variational_principle(acceptance_log, square_table_64):
    t0 = time.perf_counter()
    res = V.check_variational(table=square_table_64, ns=(16, 32, 64), mesh=64, bound=0.05, margin=0.1)
    res.seconds = time.perf_counter() - t0
    d, gaps = res.data["dists"], res.data["gaps"]
    assert d[0] > d[1] > d[2] and d[2] <= 0.05, d
    assert gaps[0] > gaps[1] > gaps[2], gaps
    record(acceptance_log, 10, res, budget=900)


def test_ac11_absolute_heights(acceptance_log):
    record(acceptance_log, 11, V.check_absolute_heights(rows=4, cols=4), budget=30)
