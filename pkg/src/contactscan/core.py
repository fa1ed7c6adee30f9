"""Domain types, mesh I/O and rigid-transform utilities shared by all modules.

Conventions: all lengths are meters, contact values are unitless scalars in
[0, 1] stored per vertex, poses map object-frame points into camera-frame
points.  All types are immutable after construction (backing arrays are
marked read-only) and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TriMesh",
    "ContactMap",
    "RigidPose",
    "CameraIntrinsics",
    "SymmetrySpec",
    "MeshFormatError",
    "load_mesh",
    "load_contact_mesh",
    "save_mesh",
    "surface_area",
    "transform_points",
    "rotation_about_axis",
    "rotation_angle",
]


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed or violates mesh invariants."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _face_cross_products(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Per-face cross products (a-b) x (c-b); norm equals twice the face area."""
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    return np.cross(b - a, c - a)


def _vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    # Area-weighted average of incident face normals: accumulate the raw
    # cross products (already proportional to area) and normalize.
    cross = _face_cross_products(vertices, faces)
    normals = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(normals, faces[:, k], cross)
    norms = np.linalg.norm(normals, axis=1)
    degenerate = norms < 1e-30
    norms[degenerate] = 1.0
    normals /= norms[:, None]
    normals[degenerate] = (0.0, 0.0, 1.0)
    return normals


@dataclass(frozen=True)
class TriMesh:
    """Triangle mesh: vertices (n,3) in meters, faces (m,3) vertex indices.

    Vertex normals are derived on construction as the area-weighted average
    of incident face normals.  Faces must be non-degenerate (area > 0) and
    reference valid vertices.
    """

    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: np.ndarray = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if v.shape[0] == 0:
            raise MeshFormatError("mesh has no vertices")
        if f.shape[0] == 0:
            raise MeshFormatError("mesh has no faces")
        if f.min() < 0 or f.max() >= v.shape[0]:
            raise MeshFormatError("face index out of range")
        areas = 0.5 * np.linalg.norm(_face_cross_products(v, f), axis=1)
        if np.any(areas <= 0.0):
            bad = int(np.flatnonzero(areas <= 0.0)[0])
            raise MeshFormatError(f"degenerate face {bad} (area == 0)")
        object.__setattr__(self, "vertices", _readonly(v))
        object.__setattr__(self, "faces", _readonly(f))
        object.__setattr__(self, "vertex_normals", _readonly(_vertex_normals(v, f)))

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(
            _face_cross_products(self.vertices, self.faces), axis=1
        )

    def vertex_areas(self) -> np.ndarray:
        """Lumped vertex areas: one third of the incident face areas."""
        areas = self.face_areas()
        va = np.zeros(self.n_vertices)
        for k in range(3):
            np.add.at(va, self.faces[:, k], areas / 3.0)
        return va

    def is_watertight(self) -> bool:
        """True when every undirected edge is shared by exactly two faces."""
        e = np.concatenate(
            [self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]
        )
        e = np.sort(e, axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))


@dataclass(frozen=True)
class ContactMap:
    """Per-vertex contact intensity in [0, 1] attached to a TriMesh."""

    values: np.ndarray
    mesh_ref: TriMesh | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size == 0:
            raise ValueError("contact map has no values")
        if np.any(v < 0.0) or np.any(v > 1.0) or not np.all(np.isfinite(v)):
            raise ValueError("contact values must lie in [0, 1]")
        if self.mesh_ref is not None and v.size != self.mesh_ref.n_vertices:
            raise ValueError(
                f"contact map length {v.size} != vertex count "
                f"{self.mesh_ref.n_vertices}"
            )
        object.__setattr__(self, "values", _readonly(v))

    def check_mesh(self, mesh: TriMesh) -> None:
        if self.values.size != mesh.n_vertices:
            raise ValueError("contact map does not match mesh vertex count")
        if self.mesh_ref is not None and self.mesh_ref is not mesh:
            raise ValueError("contact map belongs to a different mesh")


@dataclass(frozen=True)
class RigidPose:
    """SE(3) transform: p_out = rotation @ p_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", _readonly(r))
        object.__setattr__(self, "translation", _readonly(t))

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return transform_points(points, self)

    def compose(self, other: "RigidPose") -> "RigidPose":
        """self after other: (self o other)(p) = self(other(p))."""
        return RigidPose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidPose":
        rt = self.rotation.T
        return RigidPose(rt, -rt @ self.translation)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; u = fx*x/z + cx, v = fy*y/z + cy (pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")


@dataclass(frozen=True)
class SymmetrySpec:
    """Rotational symmetry of an object about an axis through its origin."""

    kind: str = "none"
    axis: np.ndarray | None = None
    n_test_angles: int = 36

    def __post_init__(self):
        if self.kind not in ("none", "axial"):
            raise ValueError(f"unknown symmetry kind {self.kind!r}")
        if self.kind == "axial":
            a = np.asarray(self.axis, dtype=np.float64).reshape(3)
            n = np.linalg.norm(a)
            if abs(n - 1.0) > 1e-6:
                raise ValueError("symmetry axis must be unit length")
            if self.n_test_angles < 1:
                raise ValueError("n_test_angles must be positive")
            object.__setattr__(self, "axis", _readonly(a))


def transform_points(points: np.ndarray, pose: RigidPose) -> np.ndarray:
    """Apply p' = R p + t to an (n,3) array (or a single 3-vector)."""
    p = np.asarray(points, dtype=np.float64)
    return p @ pose.rotation.T + pose.translation


def surface_area(mesh: TriMesh) -> float:
    """Total triangle area in m² (cross-product formula)."""
    return float(mesh.face_areas().sum())


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    n = np.linalg.norm(a)
    if n == 0.0:
        raise ValueError("zero rotation axis")
    x, y, z = a / n
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def rotation_angle(r: np.ndarray) -> float:
    """Geodesic angle (radians) of a rotation matrix."""
    c = (np.trace(r) - 1.0) / 2.0
    return float(math.acos(min(1.0, max(-1.0, c))))


# ---------------------------------------------------------------------------
# Mesh file format
#
# The interchange format is an ASCII polygon ("ply") file.  Header grammar:
#
#   ply
#   format ascii 1.0            (or: format binary_little_endian 1.0)
#   comment <free text>         (zero or more)
#   element vertex <n>
#   property float x            (float or double; x, y, z required)
#   property float y
#   property float z
#   property float contact      (optional, in [0, 1]; extra scalar
#                                properties are read and ignored)
#   element face <m>
#   property list uchar int vertex_indices
#   end_header
#
# Faces must be triangles.  The ASCII writer prints coordinates with
# repr(float) so that a load/save round trip is bit-exact.
# ---------------------------------------------------------------------------

_PLY_SCALAR = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _parse_ply_header(fh) -> tuple[str, list[tuple[str, int, list[tuple[str, ...]]]]]:
    line = fh.readline().strip()
    if line != b"ply":
        raise MeshFormatError("not a ply file (missing 'ply' magic)")
    fmt = None
    elements: list[tuple[str, int, list[tuple[str, ...]]]] = []
    while True:
        raw = fh.readline()
        if not raw:
            raise MeshFormatError("unexpected end of header")
        parts = raw.decode("ascii", "replace").strip().split()
        if not parts:
            continue
        kw = parts[0]
        if kw == "comment" or kw == "obj_info":
            continue
        if kw == "format":
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise MeshFormatError(f"unsupported ply format {parts[1]!r}")
            fmt = parts[1]
        elif kw == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif kw == "property":
            if not elements:
                raise MeshFormatError("property before any element")
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append(("scalar", parts[1], parts[2]))
        elif kw == "end_header":
            break
        else:
            raise MeshFormatError(f"unknown header keyword {kw!r}")
    if fmt is None:
        raise MeshFormatError("ply header missing 'format' line")
    return fmt, elements


def _load_ply(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh)
        names = [e[0] for e in elements]
        if "vertex" not in names or "face" not in names:
            raise MeshFormatError("ply must declare vertex and face elements")

        vertices = faces = contact = None
        for name, count, props in elements:
            if name == "vertex":
                vertices, contact = _read_vertex_block(fh, fmt, count, props)
            elif name == "face":
                faces = _read_face_block(fh, fmt, count, props)
            else:
                _skip_block(fh, fmt, count, props)
        return vertices, faces, contact


def _read_vertex_block(fh, fmt, count, props):
    cols = []
    for p in props:
        if p[0] != "scalar":
            raise MeshFormatError("list property on vertex element")
        if p[1] not in _PLY_SCALAR:
            raise MeshFormatError(f"unsupported vertex property type {p[1]!r}")
        cols.append((p[2], _PLY_SCALAR[p[1]]))
    names = [c[0] for c in cols]
    for need in ("x", "y", "z"):
        if need not in names:
            raise MeshFormatError(f"vertex element missing property {need!r}")
    if fmt == "ascii":
        data = np.empty((count, len(cols)), dtype=np.float64)
        for i in range(count):
            parts = fh.readline().split()
            if len(parts) != len(cols):
                raise MeshFormatError(f"vertex line {i} has {len(parts)} fields")
            data[i] = [float(v) for v in parts]
    else:
        dt = np.dtype([(f"c{i}", "<" + c[1]) for i, c in enumerate(cols)])
        raw = fh.read(dt.itemsize * count)
        if len(raw) != dt.itemsize * count:
            raise MeshFormatError("truncated vertex data")
        rec = np.frombuffer(raw, dtype=dt)
        data = np.column_stack([rec[f"c{i}"].astype(np.float64) for i in range(len(cols))])
    xyz = data[:, [names.index("x"), names.index("y"), names.index("z")]]
    contact = data[:, names.index("contact")] if "contact" in names else None
    return xyz, contact


def _read_face_block(fh, fmt, count, props):
    if len(props) != 1 or props[0][0] != "list":
        raise MeshFormatError("face element must have a single list property")
    _, count_t, index_t, _name = props[0]
    if count_t not in _PLY_SCALAR or index_t not in _PLY_SCALAR:
        raise MeshFormatError("unsupported face list types")
    faces = np.empty((count, 3), dtype=np.int64)
    if fmt == "ascii":
        for i in range(count):
            parts = fh.readline().split()
            if not parts:
                raise MeshFormatError("truncated face data")
            n = int(parts[0])
            if n != 3:
                raise MeshFormatError(f"face {i} has {n} vertices; only triangles supported")
            faces[i] = [int(v) for v in parts[1:4]]
    else:
        cdt = np.dtype("<" + _PLY_SCALAR[count_t])
        idt = np.dtype("<" + _PLY_SCALAR[index_t])
        for i in range(count):
            n = int(np.frombuffer(fh.read(cdt.itemsize), dtype=cdt)[0])
            if n != 3:
                raise MeshFormatError(f"face {i} has {n} vertices; only triangles supported")
            faces[i] = np.frombuffer(fh.read(idt.itemsize * 3), dtype=idt)
    return faces


def _skip_block(fh, fmt, count, props):
    if fmt == "ascii":
        for _ in range(count):
            fh.readline()
    else:
        for p in props:
            if p[0] == "list":
                raise MeshFormatError("cannot skip binary list element")
        size = sum(np.dtype(_PLY_SCALAR[p[1]]).itemsize for p in props)
        fh.read(size * count)


def load_mesh(path) -> TriMesh:
    """Load a triangle mesh; degenerate (zero-area) faces are dropped."""
    mesh, _ = load_contact_mesh(path)
    return mesh


def load_contact_mesh(path) -> tuple[TriMesh, ContactMap | None]:
    """Load a mesh plus its optional per-vertex contact property."""
    vertices, faces, contact = _load_ply(path)
    if vertices.shape[0] == 0:
        raise MeshFormatError("empty mesh (no vertices)")
    areas = 0.5 * np.linalg.norm(_face_cross_products(vertices, faces), axis=1)
    faces = faces[areas > 0.0]
    mesh = TriMesh(vertices, faces)
    cmap = None
    if contact is not None:
        cmap = ContactMap(np.clip(contact, 0.0, 1.0), mesh_ref=mesh)
    return mesh, cmap


def save_mesh(path, mesh: TriMesh, contact: ContactMap | None = None,
              binary: bool = False) -> None:
    """Write a mesh (and optional contact map) in the repo's ply format."""
    if contact is not None:
        contact.check_mesh(mesh)
    coord_type = "double" if not binary else "double"
    with open(path, "wb") as fh:
        header = ["ply"]
        header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
        header.append(f"element vertex {mesh.n_vertices}")
        header += [f"property {coord_type} x", f"property {coord_type} y",
                   f"property {coord_type} z"]
        if contact is not None:
            header.append(f"property {coord_type} contact")
        header.append(f"element face {mesh.n_faces}")
        header.append("property list uchar int vertex_indices")
        header.append("end_header")
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            cols = [mesh.vertices]
            if contact is not None:
                cols.append(contact.values[:, None])
            fh.write(np.ascontiguousarray(
                np.hstack(cols), dtype="<f8").tobytes())
            face_rec = np.empty(mesh.n_faces,
                                dtype=[("n", "u1"), ("idx", "<i4", (3,))])
            face_rec["n"] = 3
            face_rec["idx"] = mesh.faces
            fh.write(face_rec.tobytes())
        else:
            for i in range(mesh.n_vertices):
                x, y, z = (float(c) for c in mesh.vertices[i])
                line = f"{x!r} {y!r} {z!r}"
                if contact is not None:
                    line += f" {float(contact.values[i])!r}"
                fh.write((line + "\n").encode("ascii"))
            for f in mesh.faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n".encode("ascii"))
