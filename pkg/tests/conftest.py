import pytest

from plapinv.mesh import build_interval_mesh, build_rect_mesh

# (criterion, passed, detail) rows filled by the acceptance suite
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def square64():
    return build_rect_mesh(64, 64)


@pytest.fixture(scope="session")
def square16():
    return build_rect_mesh(16, 16)


@pytest.fixture(scope="session")
def interval200():
    return build_interval_mesh(200)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
