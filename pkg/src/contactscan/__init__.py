"""contactscan: synthetic turntable thermal scanning, contact-map
reconstruction, analysis and prediction preparation for triangle meshes."""

from .core import (
    CameraIntrinsics,
    ContactMap,
    RigidPose,
    SymmetrySpec,
    TriMesh,
    load_contact_mesh,
    load_mesh,
    save_mesh,
    surface_area,
    transform_points,
)

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "ContactMap",
    "RigidPose",
    "SymmetrySpec",
    "TriMesh",
    "load_contact_mesh",
    "load_mesh",
    "save_mesh",
    "surface_area",
    "transform_points",
    "__version__",
]
