"""Synthetic turntable scanner: depth + thermal views of a mesh with a
known contact map, standing in for the physical capture rig.

World frame: +z up.  The turntable plane passes through `turntable_center`
orthogonal to `turntable_axis`.  The object origin is placed on a circle of
`turntable_radius` around the axis (lifted by `object_lift` along it) and
rotates with the table; the camera is static.  View i's `gt_pose` maps
object-frame points into camera-frame points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .core import (
    CameraIntrinsics,
    ContactMap,
    RigidPose,
    TriMesh,
    rotation_about_axis,
)
from .raycast import NO_HIT, Raycaster
from .shapes import make_disc

__all__ = [
    "RigConfig",
    "NoiseParams",
    "View",
    "ScanSequence",
    "render_depth",
    "render_thermal",
    "simulate_scan",
    "diffuse_contact",
    "diffuse_values",
    "default_camera",
    "look_at_pose",
]


def default_camera(width: int = 192, height: int = 192,
                   focal: float = 350.0) -> CameraIntrinsics:
    return CameraIntrinsics(fx=focal, fy=focal, cx=width / 2.0,
                            cy=height / 2.0, width=width, height=height)


def look_at_pose(eye, target, up=(0.0, 0.0, 1.0)) -> RigidPose:
    """Camera pose in the world (camera frame -> world frame).

    Camera convention: +z looks from eye toward target, +x right, +y down.
    """
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    nr = np.linalg.norm(right)
    if nr < 1e-12:
        raise ValueError("view direction parallel to up vector")
    right /= nr
    down = np.cross(fwd, right)
    return RigidPose(np.column_stack([right, down, fwd]), eye)


@dataclass(frozen=True)
class RigConfig:
    """Geometry of the simulated capture rig."""

    n_views: int = 9
    camera: CameraIntrinsics = field(default_factory=default_camera)
    camera_pose_world: RigidPose = field(
        default_factory=lambda: look_at_pose((0.0, -0.40, 0.22), (0.0, 0.0, 0.04))
    )
    turntable_center: np.ndarray = field(
        default_factory=lambda: np.zeros(3))
    turntable_axis: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    turntable_radius: float = 0.03
    arc_degrees: float = 360.0
    object_lift: float = 0.0
    table_radius: float = 0.25  # rendered turntable disc; 0 disables it

    def __post_init__(self):
        if self.n_views < 3:
            raise ValueError("n_views must be >= 3")
        if self.turntable_radius < 0.0:
            raise ValueError("turntable_radius must be >= 0")
        axis = np.asarray(self.turntable_axis, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("turntable_axis must be unit length")
        object.__setattr__(self, "turntable_center",
                           np.asarray(self.turntable_center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "turntable_axis", axis)

    def view_angles(self) -> np.ndarray:
        """Turntable angles (radians), equally spaced over the arc.

        A full 360 degree arc uses spacing arc/n (no duplicate endpoint);
        a partial arc includes both endpoints with spacing arc/(n-1).
        """
        arc = math.radians(self.arc_degrees)
        if abs(self.arc_degrees - 360.0) < 1e-12:
            step = arc / self.n_views
        else:
            step = arc / (self.n_views - 1)
        return np.arange(self.n_views) * step

    def radial_reference(self) -> np.ndarray:
        """Deterministic unit vector orthogonal to the turntable axis."""
        a = self.turntable_axis
        e = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        u = e - np.dot(e, a) * a
        return u / np.linalg.norm(u)

    def object_pose_world(self, angle: float) -> RigidPose:
        """Object frame -> world frame after the table rotated by `angle`."""
        r = rotation_about_axis(self.turntable_axis, angle)
        offset = self.turntable_radius * self.radial_reference() \
            + self.object_lift * self.turntable_axis
        return RigidPose(r, self.turntable_center + r @ offset)

    def gt_pose(self, angle: float) -> RigidPose:
        """Object frame -> camera frame at the given turntable angle."""
        return self.camera_pose_world.inverse().compose(self.object_pose_world(angle))


@dataclass(frozen=True)
class NoiseParams:
    """Sensor noise model; generation is deterministic given the seed."""

    depth_sigma: float = 0.0
    thermal_sigma: float = 0.0
    ambient_level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.depth_sigma < 0.0 or self.thermal_sigma < 0.0:
            raise ValueError("noise sigmas must be >= 0")
        if not (0.0 <= self.ambient_level < 1.0):
            raise ValueError("ambient_level must be in [0, 1)")


@dataclass(frozen=True)
class View:
    """One turntable pause: depth (m, 0 = no hit) and thermal in [0,1]."""

    depth: np.ndarray
    thermal: np.ndarray
    angle: float
    gt_pose: RigidPose | None = None
    object_mask: np.ndarray | None = None  # oracle segmentation (simulator only)


@dataclass(frozen=True)
class ScanSequence:
    views: list[View]
    rig: RigConfig

    def __post_init__(self):
        shapes = {v.depth.shape for v in self.views} | {v.thermal.shape for v in self.views}
        if len(shapes) != 1:
            raise ValueError("all views must share image dimensions")
        angles = np.array([v.angle for v in self.views])
        steps = np.diff(angles)
        if len(steps) and (np.any(steps <= 0) or np.ptp(steps) > 1e-9):
            raise ValueError("view angles must be strictly increasing and equally spaced")

    @property
    def n_views(self) -> int:
        return len(self.views)


def render_depth(mesh: TriMesh, pose: RigidPose, cam: CameraIntrinsics,
                 caster: Raycaster | None = None) -> np.ndarray:
    """Z-depth image of the posed mesh; pixels with no hit are 0."""
    caster = caster or Raycaster(mesh)
    t, tri, _, _ = caster.cast_camera(pose, cam)
    depth = np.where(tri != NO_HIT, t, 0.0)
    return depth


def _shade_thermal(contact: ContactMap, faces: np.ndarray, tri: np.ndarray,
                   u: np.ndarray, v: np.ndarray, ambient: float) -> np.ndarray:
    """Barycentric interpolation of contact values at hit pixels."""
    hit = tri != NO_HIT
    out = np.zeros(tri.shape)
    if not np.any(hit):
        return out
    f = faces[tri[hit]]
    vals = contact.values
    a = vals[f[:, 0]]
    # a + u(b-a) + v(c-a): exact for constant fields, unlike the w*a form
    interp = a + u[hit] * (vals[f[:, 1]] - a) + v[hit] * (vals[f[:, 2]] - a)
    out[hit] = ambient + (1.0 - ambient) * np.clip(interp, 0.0, 1.0)
    return out


def render_thermal(mesh: TriMesh, contact: ContactMap, pose: RigidPose,
                   cam: CameraIntrinsics, noise: NoiseParams | None = None,
                   caster: Raycaster | None = None,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Thermal image: interpolated contact plus ambient and Gaussian noise
    on object pixels, clamped to [0, 1]; background is exactly 0."""
    contact.check_mesh(mesh)
    noise = noise or NoiseParams()
    caster = caster or Raycaster(mesh)
    _, tri, u, v = caster.cast_camera(pose, cam)
    img = _shade_thermal(contact, mesh.faces, tri, u, v, noise.ambient_level)
    hit = tri != NO_HIT
    if noise.thermal_sigma > 0.0:
        rng = rng or np.random.default_rng([noise.seed, 1])
        img[hit] += rng.normal(0.0, noise.thermal_sigma, int(hit.sum()))
    np.clip(img, 0.0, 1.0, out=img)
    img[~hit] = 0.0
    return img


def simulate_scan(mesh: TriMesh, contact: ContactMap, rig: RigConfig,
                  noise: NoiseParams | None = None, jobs: int = 1) -> ScanSequence:
    """Render the full turntable sequence (depth + thermal per pause).

    The rendered scene contains the posed object and, when
    rig.table_radius > 0, a static turntable disc.  Thermal intensity comes
    from the object only; table pixels stay at 0.  gt_pose and the
    per-pixel object mask are attached to every view (oracle data).

    Views are independent; jobs > 1 renders them on a thread pool.  Noise
    streams are seeded per view, so output is bit-identical at any jobs.
    """
    contact.check_mesh(mesh)
    noise = noise or NoiseParams()
    obj_caster = Raycaster(mesh)
    table_caster = None
    table_cam = None
    if rig.table_radius > 0.0:
        axis = rig.turntable_axis
        # disc in its own frame is z-up at z=0; pose it onto the table plane
        u = rig.radial_reference()
        table_pose_world = RigidPose(
            np.column_stack([u, np.cross(axis, u), axis]), rig.turntable_center)
        table_cam = rig.camera_pose_world.inverse().compose(table_pose_world)
        table_caster = Raycaster(make_disc(rig.table_radius, n_theta=96, n_r=8))

    def render_view(i_angle):
        i, angle = i_angle
        pose = rig.gt_pose(float(angle))
        t_obj, tri, u, v = obj_caster.cast_camera(pose, rig.camera)
        depth = np.where(tri != NO_HIT, t_obj, np.inf)
        obj_mask = tri != NO_HIT
        if table_caster is not None:
            t_tab, tri_tab, _, _ = table_caster.cast_camera(table_cam, rig.camera)
            t_tab = np.where(tri_tab != NO_HIT, t_tab, np.inf)
            obj_mask &= t_obj <= t_tab
            depth = np.minimum(depth, t_tab)
        hit = np.isfinite(depth)
        depth = np.where(hit, depth, 0.0)

        thermal = _shade_thermal(contact, mesh.faces, tri, u, v, noise.ambient_level)
        thermal[~obj_mask] = 0.0
        if noise.thermal_sigma > 0.0:
            rng = np.random.default_rng([noise.seed, i, 1])
            thermal[obj_mask] += rng.normal(0.0, noise.thermal_sigma,
                                            int(obj_mask.sum()))
        np.clip(thermal, 0.0, 1.0, out=thermal)
        thermal[~obj_mask] = 0.0
        if noise.depth_sigma > 0.0:
            rng = np.random.default_rng([noise.seed, i, 0])
            depth[hit] += rng.normal(0.0, noise.depth_sigma, int(hit.sum()))
            depth[hit] = np.maximum(depth[hit], 1e-6)
        return View(depth=depth, thermal=thermal, angle=float(angle),
                    gt_pose=pose, object_mask=obj_mask)

    items = list(enumerate(rig.view_angles()))
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            views = list(pool.map(render_view, items))
    else:
        views = [render_view(it) for it in items]
    return ScanSequence(views=views, rig=rig)


# ---------------------------------------------------------------------------
# Heat diffusion on the mesh vertex graph
# ---------------------------------------------------------------------------

def _cotan_weights(mesh: TriMesh) -> sp.csr_matrix:
    """Symmetric cotangent edge-weight matrix (zero row sums via diagonal)."""
    v, f = mesh.vertices, mesh.faces
    rows, cols, vals = [], [], []
    for k in range(3):
        i = f[:, (k + 1) % 3]
        j = f[:, (k + 2) % 3]
        o = f[:, k]
        a = v[i] - v[o]
        b = v[j] - v[o]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        cross = np.maximum(cross, 1e-300)
        cot = np.einsum("ij,ij->i", a, b) / cross
        w = 0.5 * cot
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
    w = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_vertices, mesh.n_vertices),
    )
    return w


def diffuse_values(values: np.ndarray, mesh: TriMesh, time: float,
                   diffusivity: float, min_steps: int = 1) -> np.ndarray:
    """Explicit-Euler heat diffusion; conserves total vertex-area-weighted
    heat (no clamping).  The step size is subdivided for stability;
    min_steps forces extra subdivision (integrator error is O(dt))."""
    if time < 0.0:
        raise ValueError("time must be >= 0")
    u = np.asarray(values, dtype=np.float64).copy()
    if time == 0.0 or diffusivity == 0.0:
        return u
    w = _cotan_weights(mesh)
    m = mesh.vertex_areas()
    deg = np.asarray(w.sum(axis=1)).ravel()
    row_abs = np.asarray(np.abs(w).sum(axis=1)).ravel()
    # stability: dt * D * sum_j |w_ij| / m_i <= 1/2 everywhere
    dt_stable = 0.5 / (diffusivity * row_abs / m).max()
    n_steps = max(min_steps, int(math.ceil(time / dt_stable)))
    dt = time / n_steps
    for _ in range(n_steps):
        u += dt * diffusivity * (w @ u - deg * u) / m
    return u


def diffuse_contact(contact: ContactMap, mesh: TriMesh, time: float,
                    diffusivity: float) -> ContactMap:
    """Diffused contact map; values are clamped back into [0, 1]."""
    contact.check_mesh(mesh)
    if time == 0.0:
        return ContactMap(contact.values, mesh_ref=mesh)
    u = diffuse_values(contact.values, mesh, time, diffusivity)
    return ContactMap(np.clip(u, 0.0, 1.0), mesh_ref=mesh)
