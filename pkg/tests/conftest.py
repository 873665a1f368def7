import os

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def square_table_64(tmp_path_factory):
    """The 64-resolution surface tension table of the square lattice (a few minutes to build).

    Set DIMERLAB_TABLE64 to a CSV written by ``SurfaceTensionTable.to_csv`` to reuse one.
    """
    from dimerlab.kasteleyn import characteristic_polynomial
    from dimerlab.lattice import load_preset
    from dimerlab.surface import SurfaceTensionTable, tabulate_sigma

    cached = os.environ.get("DIMERLAB_TABLE64")
    if cached and os.path.isfile(cached):
        return SurfaceTensionTable.from_csv(cached)
    return tabulate_sigma(characteristic_polynomial(load_preset("square")), 64)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
