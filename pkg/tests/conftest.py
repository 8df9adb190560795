import numpy as np
import pytest

from geoms import cube_mesh, icosphere_mesh

from geowalk.spatial import build_index


@pytest.fixture(scope="session")
def cube():
    return cube_mesh()


@pytest.fixture(scope="session")
def cube_index(cube):
    return build_index(cube)


@pytest.fixture(scope="session")
def sphere():
    return icosphere_mesh(subdiv=3)


@pytest.fixture(scope="session")
def sphere_index(sphere):
    return build_index(sphere)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)
