import numpy as np
import pytest

from wedgepme.geometry import GeometryConfig, build_mesh


@pytest.fixture(scope="session")
def wedge_config():
    return GeometryConfig()


@pytest.fixture(scope="session")
def wedge8(wedge_config):
    return build_mesh(wedge_config, 8, 8)


@pytest.fixture(scope="session")
def wedge16(wedge_config):
    return build_mesh(wedge_config, 16, 16)


@pytest.fixture(scope="session")
def interval8():
    return build_mesh(GeometryConfig(shape="neumann_interval"), 8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def torus_config():
    return GeometryConfig(shape="slit_torus", length=1.0, circumference=1.0,
                          singular_radius=0.5, beta=2.0, blend_width=0.25)


# one summary line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
