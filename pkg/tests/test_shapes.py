import numpy as np
import pytest

from contactscan.core import surface_area
from contactscan.shapes import (
    blob_contact_map,
    make_cube,
    make_cylinder,
    make_disc,
    make_icosphere,
    make_mug,
    make_torus,
)


def test_closed_shapes_watertight():
    assert make_cube(0.08, 4).is_watertight()
    assert make_icosphere(0.05, 2).is_watertight()
    assert make_cylinder(0.03, 0.1, 24, 6).is_watertight()
    assert make_torus(0.04, 0.015, 24, 12).is_watertight()
    assert make_mug(0.035, 0.09, 24, 8).is_watertight()  # two closed parts


def test_icosphere_vertex_counts():
    for s, n in ((0, 12), (1, 42), (2, 162), (3, 642)):
        assert make_icosphere(0.05, s).n_vertices == n


def test_cube_normals_point_outward():
    cube = make_cube(0.08, 4)
    outward = np.einsum("ij,ij->i", cube.vertex_normals, cube.vertices)
    assert np.all(outward > 0.0)


def test_sphere_normals_point_outward():
    sphere = make_icosphere(0.05, 2)
    outward = np.einsum("ij,ij->i", sphere.vertex_normals, sphere.vertices)
    assert np.all(outward > 0.0)


def test_torus_area_close_to_analytic():
    r_major, r_minor = 0.04, 0.015
    torus = make_torus(r_major, r_minor, 96, 48)
    analytic = 4.0 * np.pi ** 2 * r_major * r_minor
    assert surface_area(torus) == pytest.approx(analytic, rel=0.01)


def test_tapered_cylinder_radii():
    cone = make_cylinder(0.03, 0.1, 32, 8, top_radius=0.02)
    top = cone.vertices[np.isclose(cone.vertices[:, 2], 0.05)]
    top = top[np.hypot(top[:, 0], top[:, 1]) > 1e-9]
    assert np.allclose(np.hypot(top[:, 0], top[:, 1]), 0.02, atol=1e-12)


def test_blob_map_range_and_peak():
    mesh = make_icosphere(0.05, 3)
    contact = blob_contact_map(mesh, [[0.05, 0, 0]], sigma=0.01)
    assert contact.values.max() <= 1.0
    assert contact.values.min() >= 0.0
    peak_vertex = int(np.argmax(contact.values))
    assert np.linalg.norm(mesh.vertices[peak_vertex] - [0.05, 0, 0]) < 0.01


def test_disc_flat_and_centered():
    disc = make_disc(0.25, 32, 4, z=0.01)
    assert np.allclose(disc.vertices[:, 2], 0.01)
    assert np.hypot(disc.vertices[:, 0], disc.vertices[:, 1]).max() == \
        pytest.approx(0.25)
