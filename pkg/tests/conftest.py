import numpy as np
import pytest

from winklercontact import model
from winklercontact.scenario import ScenarioConfig, generate_scenario, rectangle_mesh
from winklercontact.system import discretize

STEEL = model.IsotropicMaterial(2.1e5, 0.3)
INTERFACE = model.contact_tag("toy")


def clamped_pair(nx=4, ny=2, law=None, gap=None, pull=0.0, width=2.0):
    """Two stacked blocks with the lower bottom and the upper top clamped.

    ``pull`` is a downward body force (MPa/cm) on the upper block, which
    presses it onto the lower one.  Both stiffness matrices are SPD.
    """
    lower = rectangle_mesh(0.0, 0.0, width, 1.0, nx, ny, dict(
        bottom=model.DIRICHLET_FULL, right=model.NEUMANN, top=INTERFACE, left=model.NEUMANN))
    upper = rectangle_mesh(0.0, 1.0, width, 1.0, nx, ny, dict(
        bottom=INTERFACE, right=model.NEUMANN, top=model.DIRICHLET_FULL, left=model.NEUMANN))
    pair = model.PairSpec(
        alpha=0, beta=1, tag_alpha=INTERFACE, tag_beta=INTERFACE,
        law=law if law is not None else model.power_law(2.5e-5, 0.5),
        gap=gap if gap is not None else model.constant_gap(0.0), name="toy",
    )
    return model.Problem(
        bodies=(model.Body(lower, STEEL),
                model.Body(upper, STEEL, model.LoadSpec(body_force=(0.0, -pull)))),
        contact_pairs=(pair,),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def toy_problem():
    return clamped_pair(pull=50.0)


@pytest.fixture(scope="session")
def coarse_config():
    return ScenarioConfig(nx=8, ny=4)


@pytest.fixture(scope="session")
def coarse_disc(coarse_config):
    return discretize(generate_scenario(coarse_config))


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number, passed, text):
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {text}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
