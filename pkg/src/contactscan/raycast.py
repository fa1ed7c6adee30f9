"""Ray casting against triangle meshes via a bounding-volume hierarchy.

Rays are cast with unnormalized directions whose z component is 1 in the
camera frame, so the hit parameter t equals the camera-frame z depth.
Pixel [i, j] of an image corresponds to the image-plane point (u=j, v=i).
Ties at shared triangle edges (equal t) resolve to the lowest triangle
index, which makes renders deterministic and thread-count independent.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .core import CameraIntrinsics, RigidPose, TriMesh

__all__ = ["Raycaster", "camera_rays", "NO_HIT"]

NO_HIT = -1
_LEAF_SIZE = 4


def _build_nodes(tri_min, tri_max, centroids, leaf_size):
    n_tris = tri_min.shape[0]
    order = np.arange(n_tris, dtype=np.int64)
    nodes_min, nodes_max = [], []
    lefts, rights, starts, counts = [], [], [], []

    def build(lo: int, hi: int) -> int:
        idx = len(nodes_min)
        sel = order[lo:hi]
        nodes_min.append(tri_min[sel].min(axis=0))
        nodes_max.append(tri_max[sel].max(axis=0))
        lefts.append(-1)
        rights.append(-1)
        starts.append(lo)
        counts.append(hi - lo)
        if hi - lo > leaf_size:
            cen = centroids[sel]
            axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
            mid = (hi - lo) // 2
            part = np.argpartition(cen[:, axis], mid, kind="introselect")
            order[lo:hi] = sel[part]
            counts[idx] = 0
            lefts[idx] = build(lo, lo + mid)
            rights[idx] = build(lo + mid, hi)
        return idx

    build(0, n_tris)
    return (
        np.asarray(nodes_min),
        np.asarray(nodes_max),
        np.asarray(lefts, dtype=np.int64),
        np.asarray(rights, dtype=np.int64),
        np.asarray(starts, dtype=np.int64),
        np.asarray(counts, dtype=np.int64),
        order,
    )


@njit(cache=True, nogil=True)
def _cast_kernel(origin, dirs, nodes_min, nodes_max, lefts, rights, starts,
                 counts, tri_id, v0, e1, e2, out_t, out_tri, out_u, out_v):
    n_rays = dirs.shape[0]
    stack = np.empty(128, dtype=np.int64)
    for r in range(n_rays):
        ox, oy, oz = origin[0], origin[1], origin[2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        inv_x = 1.0 / dx if dx != 0.0 else 1e300
        inv_y = 1.0 / dy if dy != 0.0 else 1e300
        inv_z = 1.0 / dz if dz != 0.0 else 1e300
        best_t = np.inf
        best_tri = NO_HIT
        best_u = 0.0
        best_v = 0.0
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            # slab test
            t0 = (nodes_min[node, 0] - ox) * inv_x
            t1 = (nodes_max[node, 0] - ox) * inv_x
            tmin = min(t0, t1)
            tmax = max(t0, t1)
            t0 = (nodes_min[node, 1] - oy) * inv_y
            t1 = (nodes_max[node, 1] - oy) * inv_y
            tmin = max(tmin, min(t0, t1))
            tmax = min(tmax, max(t0, t1))
            t0 = (nodes_min[node, 2] - oz) * inv_z
            t1 = (nodes_max[node, 2] - oz) * inv_z
            tmin = max(tmin, min(t0, t1))
            tmax = min(tmax, max(t0, t1))
            if tmax < max(tmin, 0.0) or tmin > best_t:
                continue
            if counts[node] > 0:  # leaf
                for k in range(starts[node], starts[node] + counts[node]):
                    # Moller-Trumbore
                    px = dy * e2[k, 2] - dz * e2[k, 1]
                    py = dz * e2[k, 0] - dx * e2[k, 2]
                    pz = dx * e2[k, 1] - dy * e2[k, 0]
                    det = e1[k, 0] * px + e1[k, 1] * py + e1[k, 2] * pz
                    if abs(det) < 1e-300:
                        continue
                    inv_det = 1.0 / det
                    tx = ox - v0[k, 0]
                    ty = oy - v0[k, 1]
                    tz = oz - v0[k, 2]
                    u = (tx * px + ty * py + tz * pz) * inv_det
                    if u < -1e-12 or u > 1.0 + 1e-12:
                        continue
                    qx = ty * e1[k, 2] - tz * e1[k, 1]
                    qy = tz * e1[k, 0] - tx * e1[k, 2]
                    qz = tx * e1[k, 1] - ty * e1[k, 0]
                    v = (dx * qx + dy * qy + dz * qz) * inv_det
                    if v < -1e-12 or u + v > 1.0 + 1e-12:
                        continue
                    t = (e2[k, 0] * qx + e2[k, 1] * qy + e2[k, 2] * qz) * inv_det
                    if t <= 1e-9:
                        continue
                    gid = tri_id[k]
                    if t < best_t or (t == best_t and gid < best_tri):
                        best_t = t
                        best_tri = gid
                        best_u = u
                        best_v = v
            else:
                stack[sp] = lefts[node]
                sp += 1
                stack[sp] = rights[node]
                sp += 1
        if best_tri != NO_HIT:
            out_t[r] = best_t
            out_tri[r] = best_tri
            out_u[r] = best_u
            out_v[r] = best_v


class Raycaster:
    """BVH over one mesh, built once in the mesh's own frame."""

    def __init__(self, mesh: TriMesh, leaf_size: int = _LEAF_SIZE):
        self.mesh = mesh
        v, f = mesh.vertices, mesh.faces
        tris = v[f]
        (self._nmin, self._nmax, self._left, self._right, self._start,
         self._count, order) = _build_nodes(
            tris.min(axis=1), tris.max(axis=1), tris.mean(axis=1), leaf_size)
        self._tri_id = order
        ot = tris[order]
        self._v0 = np.ascontiguousarray(ot[:, 0])
        self._e1 = np.ascontiguousarray(ot[:, 1] - ot[:, 0])
        self._e2 = np.ascontiguousarray(ot[:, 2] - ot[:, 0])

    def cast(self, origin: np.ndarray, dirs: np.ndarray):
        """Cast rays from a shared origin. Returns (t, tri, u, v) arrays.

        t is the ray parameter of the nearest hit (inf = miss), tri the hit
        triangle index (NO_HIT = miss) and (u, v) the barycentric
        coordinates of the hit on faces[tri] relative to vertices 1 and 2.
        """
        dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
        n = dirs.shape[0]
        t = np.full(n, np.inf)
        tri = np.full(n, NO_HIT, dtype=np.int64)
        u = np.zeros(n)
        v = np.zeros(n)
        _cast_kernel(np.asarray(origin, dtype=np.float64).reshape(3), dirs,
                     self._nmin, self._nmax, self._left, self._right,
                     self._start, self._count, self._tri_id,
                     self._v0, self._e1, self._e2, t, tri, u, v)
        return t, tri, u, v

    def cast_camera(self, pose: RigidPose, cam: CameraIntrinsics):
        """Cast one ray per pixel of a camera observing the posed mesh.

        `pose` maps mesh frame -> camera frame; rays are transformed into
        the mesh frame so the BVH never needs rebuilding.  Returned t is
        the camera-frame z depth (dirs have unit z in camera frame).
        """
        dirs_cam = camera_rays(cam)
        inv = pose.inverse()
        origin = inv.translation
        dirs = dirs_cam.reshape(-1, 3) @ inv.rotation.T
        t, tri, u, v = self.cast(origin, dirs)
        shape = (cam.height, cam.width)
        return (t.reshape(shape), tri.reshape(shape),
                u.reshape(shape), v.reshape(shape))


def camera_rays(cam: CameraIntrinsics) -> np.ndarray:
    """Per-pixel ray directions in the camera frame, z component 1."""
    jj, ii = np.meshgrid(np.arange(cam.width), np.arange(cam.height))
    return np.stack(
        [(jj - cam.cx) / cam.fx, (ii - cam.cy) / cam.fy, np.ones_like(jj, dtype=np.float64)],
        axis=-1,
    )
