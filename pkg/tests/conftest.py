import numpy as np
import pytest

from esikit.forward import analytic_leadfield, fibonacci_sensors
from esikit.mesh import make_icosphere, merge_meshes


@pytest.fixture(scope="session")
def icosahedron():
    return make_icosphere(0, 1.0)


@pytest.fixture(scope="session")
def sphere2():
    """162-vertex unit-style fixture at brain scale (radius 100 mm)."""
    return make_icosphere(2, 100.0)


@pytest.fixture(scope="session")
def sphere3():
    """642-vertex fixture at brain scale."""
    return make_icosphere(3, 100.0)


@pytest.fixture(scope="session")
def two_spheres():
    """Two-component mesh standing in for a two-hemisphere surface."""
    left = make_icosphere(2, 50.0)
    right = make_icosphere(2, 50.0)
    lv = left.vertices.copy()
    lv[:, 0] -= 80.0
    rv = right.vertices.copy()
    rv[:, 0] += 80.0
    from esikit.mesh import TriMesh

    return merge_meshes(TriMesh(lv, left.faces), TriMesh(rv, right.faces))


@pytest.fixture(scope="session")
def sensors64():
    return fibonacci_sensors(64, 120.0)


@pytest.fixture(scope="session")
def fm2(sphere2, sensors64):
    return analytic_leadfield(sphere2, sensors64)


@pytest.fixture(scope="session")
def fm3(sphere3, sensors64):
    return analytic_leadfield(sphere3, sensors64)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
