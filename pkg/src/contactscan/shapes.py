"""Procedural test shapes: primitives with controllable vertex density.

Shapes are centered on the object-frame origin with +z as the natural
symmetry / up axis.  Sizes follow the 0.02-0.25 m range the toolkit is
calibrated for.
"""

from __future__ import annotations

import numpy as np

from .core import ContactMap, TriMesh

__all__ = [
    "make_cube",
    "make_icosphere",
    "make_cylinder",
    "make_torus",
    "make_mug",
    "make_plate",
    "make_disc",
    "blob_contact_map",
    "blob_values",
]


def _weld(vertices: np.ndarray, faces: np.ndarray, decimals: int = 9) -> TriMesh:
    """Merge coincident vertices (rounded to `decimals`) and drop degenerates."""
    key = np.round(vertices, decimals)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    new_vertices = vertices[first[order]]
    new_faces = rank[inverse][faces]
    ok = (
        (new_faces[:, 0] != new_faces[:, 1])
        & (new_faces[:, 1] != new_faces[:, 2])
        & (new_faces[:, 0] != new_faces[:, 2])
    )
    return TriMesh(new_vertices, new_faces[ok])


def _grid_faces(nu: int, nv: int, wrap_u: bool = False, wrap_v: bool = False):
    """Triangulate a (nu x nv) vertex grid; optionally wrap either direction."""
    faces = []
    mu = nu if wrap_u else nu - 1
    mv = nv if wrap_v else nv - 1
    for i in range(mu):
        i2 = (i + 1) % nu
        for j in range(mv):
            j2 = (j + 1) % nv
            a, b = i * nv + j, i2 * nv + j
            c, d = i2 * nv + j2, i * nv + j2
            faces.append((a, b, c))
            faces.append((a, c, d))
    return np.asarray(faces, dtype=np.int64)


def make_cube(side: float = 0.08, n: int = 8) -> TriMesh:
    """Axis-aligned cube of the given side, each face an n x n quad grid."""
    if n < 1:
        raise ValueError("n must be >= 1")
    h = side / 2.0
    t = np.linspace(-h, h, n + 1)
    verts = []
    faces = []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            base = len(verts)
            uu, vv = np.meshgrid(t, t, indexing="ij")
            block = np.empty((n + 1, n + 1, 3))
            block[..., axis] = sign * h
            block[..., (axis + 1) % 3] = uu
            block[..., (axis + 2) % 3] = vv
            verts.extend(block.reshape(-1, 3))
            f = _grid_faces(n + 1, n + 1)
            if sign < 0:  # flip winding so normals point outward
                f = f[:, ::-1]
            faces.extend(f + base)
    return _weld(np.asarray(verts), np.asarray(faces))


def make_icosphere(radius: float = 0.05, subdivisions: int = 3) -> TriMesh:
    """Subdivided icosahedron; 10*4^s + 2 vertices."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=np.float64,
    )
    v /= np.linalg.norm(v, axis=1)[:, None]
    f = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(p) for p in v]
    cache: dict[tuple[int, int], int] = {}

    def midpoint(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        if key in cache:
            return cache[key]
        m = np.asarray(verts[a]) + np.asarray(verts[b])
        m /= np.linalg.norm(m)
        verts.append(tuple(m))
        cache[key] = len(verts) - 1
        return cache[key]

    for _ in range(subdivisions):
        nf = []
        for a, b, c in f:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        f = nf
    return TriMesh(np.asarray(verts) * radius, np.asarray(f, dtype=np.int64))


def make_cylinder(radius: float = 0.03, height: float = 0.1,
                  n_theta: int = 48, n_z: int = 12,
                  top_radius: float | None = None) -> TriMesh:
    """Closed cylinder along +z, centered on the origin.

    A top_radius different from radius gives a truncated cone: still
    axially symmetric but with a well-defined up direction.
    """
    top_radius = radius if top_radius is None else top_radius
    theta = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
    z = np.linspace(-height / 2.0, height / 2.0, n_z + 1)
    tt, zz = np.meshgrid(theta, z, indexing="ij")
    frac = (zz + height / 2.0) / height
    rr = radius + (top_radius - radius) * frac
    side = np.stack(
        [rr * np.cos(tt), rr * np.sin(tt), zz], axis=-1
    ).reshape(-1, 3)
    faces = _grid_faces(n_theta, n_z + 1, wrap_u=True)
    verts = [side]
    fl = [faces]
    # cap fans
    base = side.shape[0]
    for sign, row in ((-1.0, 0), (1.0, n_z)):
        center = np.array([[0.0, 0.0, sign * height / 2.0]])
        verts.append(center)
        ring = np.arange(n_theta) * (n_z + 1) + row
        cap = []
        for i in range(n_theta):
            a, b = ring[i], ring[(i + 1) % n_theta]
            cap.append((base, a, b) if sign > 0 else (base, b, a))
        fl.append(np.asarray(cap, dtype=np.int64))
        base += 1
    return TriMesh(np.concatenate(verts), np.concatenate(fl))


def make_torus(major_radius: float = 0.04, minor_radius: float = 0.015,
               n_major: int = 48, n_minor: int = 24) -> TriMesh:
    """Torus in the xy plane (axis +z)."""
    u = np.linspace(0.0, 2.0 * np.pi, n_major, endpoint=False)
    v = np.linspace(0.0, 2.0 * np.pi, n_minor, endpoint=False)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    r = major_radius + minor_radius * np.cos(vv)
    pts = np.stack(
        [r * np.cos(uu), r * np.sin(uu), minor_radius * np.sin(vv)], axis=-1
    ).reshape(-1, 3)
    return TriMesh(pts, _grid_faces(n_major, n_minor, wrap_u=True, wrap_v=True))


def make_mug(radius: float = 0.035, height: float = 0.09,
             n_theta: int = 40, n_z: int = 12,
             handle_z: float = 0.0,
             n_handle_major: int = 32, n_handle_minor: int = 12) -> TriMesh:
    """Mug-like shape: closed cylindrical body plus a torus handle.

    The two closed components overlap; the union is not a manifold solid
    but renders and registers like one.  With handle_z = 0 the shape has
    an exact 180-degree flip symmetry about the handle axis; a nonzero
    handle offset breaks it (useful when tests need a symmetry-free shape).
    """
    body = make_cylinder(radius, height, n_theta, n_z)
    handle = make_torus(height * 0.28, radius * 0.22,
                        n_major=n_handle_major, n_minor=n_handle_minor)
    # stand the handle torus upright in the xz plane, poking out along +x
    rot = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    hv = handle.vertices @ rot.T \
        + np.array([radius + height * 0.08, 0.0, handle_z])
    verts = np.concatenate([body.vertices, hv])
    faces = np.concatenate([body.faces, handle.faces + body.n_vertices])
    return TriMesh(verts, faces)


def make_plate(width: float = 0.1, depth: float = 0.1,
               nx: int = 10, ny: int = 10, z: float = 0.0,
               normal_sign: float = 1.0) -> TriMesh:
    """Flat rectangular plate in the z = const plane.

    normal_sign +1 gives normals along +z; -1 flips the winding (a plate
    in front of a +z-looking camera needs -1 to face it).
    """
    x = np.linspace(-width / 2.0, width / 2.0, nx + 1)
    y = np.linspace(-depth / 2.0, depth / 2.0, ny + 1)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    pts = np.stack([xx, yy, np.full_like(xx, z)], axis=-1).reshape(-1, 3)
    faces = _grid_faces(nx + 1, ny + 1)
    if normal_sign < 0:
        faces = faces[:, ::-1]
    return TriMesh(pts, faces)


def make_disc(radius: float = 0.25, n_theta: int = 64, n_r: int = 6,
              z: float = 0.0) -> TriMesh:
    """Flat disc in the z = const plane, normal +z (turntable stand-in)."""
    theta = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
    rings = np.linspace(radius / n_r, radius, n_r)
    verts = [np.array([[0.0, 0.0, z]])]
    for r in rings:
        verts.append(
            np.stack([r * np.cos(theta), r * np.sin(theta),
                      np.full_like(theta, z)], axis=-1)
        )
    pts = np.concatenate(verts)
    faces = []
    for i in range(n_theta):  # inner fan
        faces.append((0, 1 + i, 1 + (i + 1) % n_theta))
    for k in range(n_r - 1):  # ring bands
        a0 = 1 + k * n_theta
        b0 = 1 + (k + 1) * n_theta
        for i in range(n_theta):
            j = (i + 1) % n_theta
            faces.append((a0 + i, b0 + i, b0 + j))
            faces.append((a0 + i, b0 + j, a0 + j))
    return TriMesh(pts, np.asarray(faces, dtype=np.int64))


def blob_values(points: np.ndarray, centers: np.ndarray, sigma: float = 0.01,
                amplitude: float = 1.0) -> np.ndarray:
    """Sum-of-Gaussians field evaluated at arbitrary points, clipped to [0,1]."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    c = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    values = np.zeros(p.shape[0])
    for center in c:
        d2 = np.sum((p - center) ** 2, axis=1)
        values += amplitude * np.exp(-d2 / (2.0 * sigma * sigma))
    return np.clip(values, 0.0, 1.0)


def blob_contact_map(mesh: TriMesh, centers: np.ndarray, sigma: float = 0.01,
                     amplitude: float = 1.0) -> ContactMap:
    """Smooth synthetic contact map: sum of Gaussian blobs, clipped to [0,1]."""
    values = blob_values(mesh.vertices, centers, sigma, amplitude)
    return ContactMap(values, mesh_ref=mesh)
