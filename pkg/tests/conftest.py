import functools

import pytest
from hypothesis import settings

from slipstokes import geometry
from slipstokes.mesh import build_disk_mesh, refine

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

# filled by tests/test_acceptance.py: criterion number -> (passed, detail)
ACCEPTANCE = {}


@functools.lru_cache(maxsize=None)
def disk_mesh(rings, refinements=0):
    m = build_disk_mesh(rings)
    for _ in range(refinements):
        m = refine(m, geometry.UnitDisk())
    return m


@pytest.fixture
def unit_disk():
    return geometry.UnitDisk()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
