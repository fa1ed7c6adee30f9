"""Multi-view texture fusion: project thermal views onto the mesh, average
per vertex with view-angle weights, optionally refine poses photometrically.

Fusion accumulates in ascending view order, so results are independent of
any parallelism in the per-view projection work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    CameraIntrinsics,
    ContactMap,
    RigidPose,
    SymmetrySpec,
    TriMesh,
    rotation_about_axis,
)
from .poseest import IcpParams, PoseEstimate, ScanPoseResult, run_pose_pipeline
from .synth import ScanSequence

__all__ = [
    "VertexObservation",
    "RefineParams",
    "FuseResult",
    "project_vertex",
    "project_vertices",
    "vertex_visibility",
    "observe_vertices",
    "fuse_views",
    "refine_poses",
    "reconstruct",
    "ReconstructionResult",
    "reconstruction_metrics",
    "gauge_transform",
    "gauge_aligned_metrics",
]


@dataclass(frozen=True)
class VertexObservation:
    """One view's observation of one vertex."""

    view_index: int
    intensity: float
    weight: float
    valid: bool

    def __post_init__(self):
        if not self.valid and self.weight != 0.0:
            raise ValueError("invalid observations must carry zero weight")


@dataclass(frozen=True)
class RefineParams:
    enabled: bool = True
    max_outer_iters: int = 6
    rot_step: float = math.radians(0.25)
    trans_step: float = 5e-4
    residual_tol: float = 1e-7
    max_inner_steps: int = 16
    n_scales: int = 3  # step sizes halve per scale during the local search

    def __post_init__(self):
        if min(self.max_outer_iters, self.rot_step, self.trans_step,
               self.residual_tol, self.max_inner_steps, self.n_scales) <= 0:
            raise ValueError("refine parameters must be positive")


def project_vertex(v, pose: RigidPose, cam: CameraIntrinsics):
    """Pinhole projection of a single point: ((u, v), depth, valid)."""
    uv, z, valid = project_vertices(np.asarray(v, dtype=np.float64).reshape(1, 3),
                                    pose, cam)
    return uv[0], float(z[0]), bool(valid[0])


def project_vertices(verts: np.ndarray, pose: RigidPose, cam: CameraIntrinsics):
    """Vectorized projection: (uv (n,2), camera z (n,), in-front flag (n,))."""
    p = verts @ pose.rotation.T + pose.translation
    z = p[:, 2]
    valid = z > 0.0
    safe_z = np.where(valid, z, 1.0)
    u = cam.fx * p[:, 0] / safe_z + cam.cx
    v = cam.fy * p[:, 1] / safe_z + cam.cy
    return np.column_stack([u, v]), z, valid


def vertex_visibility(mesh: TriMesh, pose: RigidPose, cam: CameraIntrinsics,
                      depth_image: np.ndarray, depth_eps: float) -> np.ndarray:
    """Per-vertex visibility: projects in-bounds, agrees with the depth
    image within depth_eps, and faces the camera (n . view_dir < 0)."""
    visible, _, _ = _visibility_detail(mesh, pose, cam, depth_image, depth_eps)
    return visible


def _visibility_detail(mesh, pose, cam, depth_image, depth_eps):
    uv, z, in_front = project_vertices(mesh.vertices, pose, cam)
    pi = np.rint(uv[:, 1]).astype(np.int64)
    pj = np.rint(uv[:, 0]).astype(np.int64)
    in_bounds = in_front & (pi >= 0) & (pi < cam.height) & (pj >= 0) & (pj < cam.width)
    visible = in_bounds.copy()
    idx = np.flatnonzero(in_bounds)
    d = depth_image[pi[idx], pj[idx]]
    visible[idx] &= (d > 0.0) & (np.abs(z[idx] - d) <= depth_eps)

    # outward normal must face the camera
    p_cam = mesh.vertices @ pose.rotation.T + pose.translation
    n_cam = mesh.vertex_normals @ pose.rotation.T
    facing = np.einsum("ij,ij->i", n_cam, p_cam)
    visible &= facing < 0.0
    norms = np.linalg.norm(p_cam, axis=1)
    weights = np.where(visible, np.maximum(0.0, -facing / np.maximum(norms, 1e-12)),
                       0.0)
    return visible, weights, uv


def _bilinear(image: np.ndarray, uv: np.ndarray) -> np.ndarray:
    h, w = image.shape
    u = np.clip(uv[:, 0], 0.0, w - 1.0)
    v = np.clip(uv[:, 1], 0.0, h - 1.0)
    j0 = np.floor(u).astype(np.int64)
    i0 = np.floor(v).astype(np.int64)
    j1 = np.minimum(j0 + 1, w - 1)
    i1 = np.minimum(i0 + 1, h - 1)
    fu = u - j0
    fv = v - i0
    top = image[i0, j0] * (1.0 - fu) + image[i0, j1] * fu
    bot = image[i1, j0] * (1.0 - fu) + image[i1, j1] * fu
    return top * (1.0 - fv) + bot * fv


def observe_vertices(mesh: TriMesh, thermal: np.ndarray, depth: np.ndarray,
                     pose: RigidPose, cam: CameraIntrinsics,
                     depth_eps: float):
    """Per-vertex (intensity, weight, valid) for one view; intensity is a
    bilinear sample of the thermal image at the projected location."""
    visible, weights, uv = _visibility_detail(mesh, pose, cam, depth, depth_eps)
    intensity = np.zeros(mesh.n_vertices)
    idx = np.flatnonzero(visible)
    if idx.size:
        intensity[idx] = _bilinear(thermal, uv[idx])
    return intensity, weights, visible


@dataclass
class FuseResult:
    contact: ContactMap
    coverage: np.ndarray  # per-vertex observation count
    uncovered: np.ndarray  # vertex indices never observed

    @property
    def covered_fraction(self) -> float:
        return float(np.mean(self.coverage > 0))


def fuse_views(mesh: TriMesh, scan: ScanSequence,
               poses: list[RigidPose] | list[PoseEstimate],
               depth_eps: float = 0.005) -> FuseResult:
    """Weighted per-vertex average of thermal observations over all views.

    Weight is the view-angle cosine max(0, -n . view_dir).  Vertices with
    no valid observation get value 0 and are listed as uncovered.
    """
    poses = [p.pose if isinstance(p, PoseEstimate) else p for p in poses]
    if len(poses) != scan.n_views:
        raise ValueError(f"{len(poses)} poses for {scan.n_views} views")
    cam = scan.rig.camera
    acc = np.zeros(mesh.n_vertices)
    wsum = np.zeros(mesh.n_vertices)
    coverage = np.zeros(mesh.n_vertices, dtype=np.int64)
    for view, pose in zip(scan.views, poses):  # fixed ascending view order
        intensity, weight, valid = observe_vertices(
            mesh, view.thermal, view.depth, pose, cam, depth_eps)
        acc += weight * intensity
        wsum += weight
        coverage += valid.astype(np.int64)
    covered = wsum > 0.0
    values = np.zeros(mesh.n_vertices)
    values[covered] = acc[covered] / wsum[covered]
    values = np.clip(values, 0.0, 1.0)
    return FuseResult(contact=ContactMap(values, mesh_ref=mesh),
                      coverage=coverage,
                      uncovered=np.flatnonzero(~covered))


# ---------------------------------------------------------------------------
# Photometric pose refinement
# ---------------------------------------------------------------------------

def _rotation_axes(pose: RigidPose, sym: SymmetrySpec | None) -> list[np.ndarray]:
    """Camera-frame rotation axes for the local search.  For axially
    symmetric objects the rotation about the symmetry axis is pure gauge
    (fixed upstream by the turntable angle), so it is excluded."""
    if sym is None or sym.kind != "axial":
        return [np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]),
                np.array([0.0, 0.0, 1.0])]
    a = pose.rotation @ sym.axis
    e = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = e - (e @ a) * a
    e1 /= np.linalg.norm(e1)
    return [e1, np.cross(a, e1)]


def _perturbations(rot_axes: list[np.ndarray], rot_step: float,
                   trans_step: float):
    # translations only in the image plane: along the viewing axis the
    # photometric residual is nearly flat and rewards shedding silhouette
    # vertices off the depth test, so depth stays where the geometric
    # registration put it
    deltas = []
    for axis in rot_axes:
        for sign in (1.0, -1.0):
            deltas.append((rotation_about_axis(axis, sign * rot_step),
                           np.zeros(3)))
    for axis in range(2):
        for sign in (1.0, -1.0):
            t = np.zeros(3)
            t[axis] = sign * trans_step
            deltas.append((np.eye(3), t))
    return deltas


def _apply_delta(pose: RigidPose, drot: np.ndarray, dt: np.ndarray,
                 pivot: np.ndarray) -> RigidPose:
    # rotate about the object's camera-frame pivot so rotation steps do not
    # double as large translations
    r = drot @ pose.rotation
    t = drot @ (pose.translation - pivot) + pivot + dt
    return RigidPose(r, t)


def _view_residual(mesh, view, pose, cam, current, depth_eps):
    intensity, weight, _ = observe_vertices(mesh, view.thermal, view.depth,
                                            pose, cam, depth_eps)
    total_w = float(weight.sum())
    if total_w <= 0.0:
        return math.inf, 0.0
    res = float(np.sum(weight * (intensity - current) ** 2) / total_w)
    return res, total_w


def refine_poses(mesh: TriMesh, scan: ScanSequence,
                 poses: list[RigidPose] | list[PoseEstimate],
                 current_map: ContactMap,
                 params: RefineParams | None = None,
                 depth_eps: float = 0.005,
                 sym: SymmetrySpec | None = None) -> list[RigidPose]:
    """Alternating photometric refinement: per view, greedy local 6-DoF
    search against the current fused map, then re-fuse.  The total
    residual is non-increasing across outer iterations (a worsening step
    reverts and stops).  No-op when params.enabled is False."""
    params = params or RefineParams()
    poses = [p.pose if isinstance(p, PoseEstimate) else p for p in poses]
    if not params.enabled:
        return list(poses)
    cam = scan.rig.camera
    current = current_map.values.copy()

    def total_residual(pose_list, values):
        total = 0.0
        for view, pose in zip(scan.views, pose_list):
            r, _ = _view_residual(mesh, view, pose, cam, values, depth_eps)
            total += r if math.isfinite(r) else 1.0
        return total

    best_total = total_residual(poses, current)
    for _ in range(params.max_outer_iters):
        new_poses = []
        for view, pose in zip(scan.views, poses):
            cur_pose = pose
            cur_res, cur_w = _view_residual(mesh, view, cur_pose, cam,
                                            current, depth_eps)
            pivot = mesh.vertices.mean(axis=0) @ cur_pose.rotation.T \
                + cur_pose.translation
            rot_axes = _rotation_axes(cur_pose, sym)
            for scale in (0.5 ** np.arange(params.n_scales)):
                deltas = _perturbations(rot_axes, params.rot_step * scale,
                                        params.trans_step * scale)
                for _ in range(params.max_inner_steps):
                    best_cand, best_res, best_w = cur_pose, cur_res, cur_w
                    for drot, dt in deltas:
                        cand = _apply_delta(cur_pose, drot, dt, pivot)
                        res, w = _view_residual(mesh, view, cand, cam, current,
                                                depth_eps)
                        # a candidate must not shed observations to win
                        if res < best_res and w >= 0.995 * cur_w:
                            best_cand, best_res, best_w = cand, res, w
                    if best_cand is cur_pose:
                        break
                    cur_pose, cur_res, cur_w = best_cand, best_res, best_w
            new_poses.append(cur_pose)
        new_values = fuse_views(mesh, scan, new_poses, depth_eps).contact.values
        new_total = total_residual(new_poses, new_values)
        if new_total > best_total - params.residual_tol:
            if new_total <= best_total:
                poses, current = new_poses, new_values
            break
        poses, current, best_total = new_poses, new_values, new_total
    return list(poses)


# ---------------------------------------------------------------------------
# End-to-end reconstruction
# ---------------------------------------------------------------------------

@dataclass
class ReconstructionResult:
    contact: ContactMap
    coverage: np.ndarray
    uncovered: np.ndarray
    estimates: list[PoseEstimate]
    refined_poses: list[RigidPose]
    pose_result: ScanPoseResult = field(repr=False)


def reconstruct(mesh: TriMesh, scan: ScanSequence,
                sym: SymmetrySpec | None = None,
                icp_params: IcpParams | None = None,
                refine_params: RefineParams | None = None,
                depth_eps: float = 0.005,
                segmentation: str = "geometric",
                height_eps: float = 0.004) -> ReconstructionResult:
    """Scan -> poses -> fused contact map (with optional refinement)."""
    pose_result = run_pose_pipeline(scan, mesh, sym, icp_params,
                                    segmentation=segmentation,
                                    height_eps=height_eps)
    poses = pose_result.poses()
    fused = fuse_views(mesh, scan, poses, depth_eps)
    refine_params = refine_params or RefineParams()
    if refine_params.enabled:
        poses = refine_poses(mesh, scan, poses, fused.contact,
                             refine_params, depth_eps, sym=sym)
        fused = fuse_views(mesh, scan, poses, depth_eps)
    return ReconstructionResult(contact=fused.contact, coverage=fused.coverage,
                                uncovered=fused.uncovered,
                                estimates=pose_result.estimates,
                                refined_poses=poses, pose_result=pose_result)


def reconstruction_metrics(recon: ContactMap, gt: ContactMap,
                           coverage: np.ndarray,
                           threshold: float = 0.4) -> dict[str, float]:
    """RMSE on covered vertices plus contacted-region IoU at a threshold."""
    covered = coverage > 0
    diff = recon.values[covered] - gt.values[covered]
    rmse = float(np.sqrt(np.mean(diff ** 2))) if covered.any() else math.nan
    a = recon.values > threshold
    b = gt.values > threshold
    union = np.logical_or(a, b).sum()
    iou = float(np.logical_and(a, b).sum() / union) if union else 1.0
    return {"rmse_covered": rmse, "iou": iou,
            "covered_fraction": float(covered.mean())}


def gauge_transform(est_pose: RigidPose, gt_pose: RigidPose) -> RigidPose:
    """Object-frame transform relating an estimated pose to ground truth.

    The scan only constrains poses up to the object's symmetry group (a
    sphere fixes no rotation at all), so reconstructions match ground
    truth after composing with this gauge: recon(v) ~ gt(T v).
    """
    return gt_pose.inverse().compose(est_pose)


def gauge_aligned_metrics(mesh: TriMesh, recon: ContactMap,
                          coverage: np.ndarray, gt: ContactMap,
                          est_pose: RigidPose, gt_pose: RigidPose,
                          threshold: float = 0.4) -> dict[str, float]:
    """Reconstruction metrics after removing the symmetry gauge.

    The ground-truth map is resampled at the gauge-transformed vertex
    positions (nearest vertex).  gauge_surface_dist reports how far the
    gauge strays from a true surface symmetry; large values mean the pose
    estimate was genuinely wrong, not just rotated within the symmetry
    group.
    """
    from scipy.spatial import cKDTree

    t_rel = gauge_transform(est_pose, gt_pose)
    moved = mesh.vertices @ t_rel.rotation.T + t_rel.translation
    tree = cKDTree(mesh.vertices)
    dist, idx = tree.query(moved)
    aligned = ContactMap(gt.values[idx], mesh_ref=None)
    out = reconstruction_metrics(recon, aligned, coverage, threshold)
    out["gauge_rot_deg"] = math.degrees(
        math.acos(min(1.0, max(-1.0, (np.trace(t_rel.rotation) - 1.0) / 2.0))))
    out["gauge_surface_dist"] = float(dist.mean())
    return out
