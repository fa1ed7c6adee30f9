import numpy as np
import pytest

from contactscan.core import RigidPose, TriMesh, rotation_about_axis
from contactscan.shapes import make_cube, make_icosphere


@pytest.fixture(scope="session")
def small_cube() -> TriMesh:
    return make_cube(0.08, 8)


@pytest.fixture(scope="session")
def small_sphere() -> TriMesh:
    return make_icosphere(0.05, 3)


@pytest.fixture(scope="session")
def bumpy_cube() -> TriMesh:
    """Cube with a sphere bump on one corner: no nontrivial symmetry."""
    cube = make_cube(0.08, 16)
    bump = make_icosphere(0.018, 2)
    bv = bump.vertices + np.array([0.035, 0.028, 0.022])
    return TriMesh(np.concatenate([cube.vertices, bv]),
                   np.concatenate([cube.faces, bump.faces + cube.n_vertices]))


def random_pose(rng: np.random.Generator, max_angle: float = np.pi,
                max_trans: float = 0.2) -> RigidPose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle, max_angle)
    t = rng.uniform(-max_trans, max_trans, size=3)
    return RigidPose(rotation_about_axis(axis, angle), t)
