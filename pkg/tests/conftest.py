import numpy as np
import pytest

from eddyinv.data import AnomalyBox, AnomalySpec, dipole_grid, generate_observation
from eddyinv.fem import Discretization, Material
from eddyinv.mesh import build_box_mesh, build_dof_maps

BOX = ((-2.0, 2.0), (-2.0, 2.0), (-2.0, 0.2))
EXAMPLE1 = AnomalySpec((AnomalyBox(((-0.4, 0.4), (-0.4, 0.4), (-1.2, -0.4)), 1.0),))


def make_disc(divisions=(10, 10, 11), material=None):
    mesh = build_box_mesh(BOX, divisions, 0.0, 0.2)
    return Discretization(mesh, build_dof_maps(mesh), material or Material())


@pytest.fixture(scope="session")
def small_disc():
    return make_disc()


@pytest.fixture(scope="session")
def small_problem(small_disc):
    src = dipole_grid(offset=(0.011, 0.007, 0.0))
    load = small_disc.dipole_load(src.points, src.direction)
    obs = generate_observation(small_disc, EXAMPLE1, src)
    return small_disc, load, obs


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
