import numpy as np
import pytest

from contactscan.core import ContactMap
from contactscan.representation import (
    DatasetEntry,
    export_dataset,
    make_point_sample,
    make_voxel_sample,
)
from contactscan.shapes import make_cube, make_cylinder


def bimodal_entries(kind: str, resolution: int = 32, n_points: int = 600):
    """Two primitives, each with two disjoint contact modes (two tags per
    mode): a deliberately one-to-many toy dataset."""
    entries = []
    shapes = {
        "cylinder": make_cylinder(0.03, 0.1, 48, 16),
        "box": make_cube(0.08, 12),
    }
    for name, mesh in shapes.items():
        z = mesh.vertices[:, 2]
        x = mesh.vertices[:, 0]
        modes = {
            "top": (z > np.quantile(z, 0.7)).astype(float),
            "side": ((x > np.quantile(x, 0.75)) & (z < np.quantile(z, 0.6))
                     ).astype(float),
        }
        for mode, values in modes.items():
            contact = ContactMap(values, mesh_ref=mesh)
            for rep in range(2):
                if kind == "voxel":
                    sample = make_voxel_sample(mesh, contact,
                                               resolution=resolution)
                else:
                    sample = make_point_sample(mesh, contact, n=n_points,
                                               seed=rep)
                entries.append(DatasetEntry(name, "use", sample,
                                            tag=f"{mode}{rep}"))
    return entries


@pytest.fixture(scope="session")
def voxel_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("voxds")
    export_dataset(bimodal_entries("voxel"), path, test_objects=frozenset())
    return path


@pytest.fixture(scope="session")
def point_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("ptds")
    export_dataset(bimodal_entries("point"), path, test_objects=frozenset())
    return path
