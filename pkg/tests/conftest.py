import pytest

from sarinv.renderer import RenderConfig, default_scene


@pytest.fixture(scope="session")
def tank_scene():
    return default_scene()


@pytest.fixture(scope="session")
def small_scene():
    """Unit box on coarse ground; renders in about a millisecond."""
    return default_scene("box", ground_cells=8)


@pytest.fixture(scope="session")
def small_render():
    return RenderConfig(image_size=32, samples_per_facet=4)


ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("."))):
            terminalreporter.write_line(line)
