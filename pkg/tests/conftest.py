import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from raylaunch.geom import CONCRETE, GeoOrigin, Mesh, Scene, make_ground

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ORIGIN = GeoOrigin(49.42375, 7.754083, 0.0)


def box_mesh(lo, hi, material=CONCRETE, tag="box"):
    """Closed axis-aligned box with outward winding."""
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    v = np.array([
        (x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0),
        (x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1),
    ], dtype=float)
    t = [(0, 2, 1), (0, 3, 2), (4, 5, 6), (4, 6, 7)]
    for i in range(4):
        j = (i + 1) % 4
        t += [(i, j, 4 + j), (i, 4 + j, 4 + i)]
    return Mesh(v, np.array(t), material, tag)


def panel_mesh(x, y0, y1, z0, z1, material=CONCRETE, tag="panel"):
    """Single two-sided vertical screen in the plane x = const (two triangles)."""
    v = np.array([(x, y0, z0), (x, y1, z0), (x, y1, z1), (x, y0, z1)], dtype=float)
    return Mesh(v, np.array([(0, 1, 2), (0, 2, 3)]), material, tag)


def scene_of(*meshes):
    return Scene(ORIGIN, meshes)


@pytest.fixture
def ground_scene():
    return scene_of(make_ground(2000.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled by tests/test_acceptance.py
CRITERIA: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[n])
