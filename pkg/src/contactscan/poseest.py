"""Per-view object pose recovery from a scan sequence.

Pipeline: table plane fit -> per-view segmentation -> sequential ICP seeded
by the recorded turntable angles -> 3D circle fit of accepted origins ->
interpolation of rejected views from the circle.  Axially symmetric objects
get their rotation about the symmetry axis from the turntable angle instead
of ICP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dataclasses_replace

import numpy as np
from scipy.spatial import cKDTree

from .core import (
    CameraIntrinsics,
    RigidPose,
    SymmetrySpec,
    TriMesh,
    rotation_about_axis,
    transform_points,
)
from .synth import ScanSequence

__all__ = [
    "Plane",
    "Circle3D",
    "IcpParams",
    "PoseEstimate",
    "PipelineError",
    "SegmentationError",
    "PoseEstimationError",
    "fit_plane",
    "segment_object",
    "icp_register",
    "fit_circle3d",
    "estimate_scan_poses",
    "run_pose_pipeline",
    "ScanPoseResult",
    "depth_to_cloud",
    "estimate_table_plane",
]


class PipelineError(RuntimeError):
    """A stage of the pose pipeline failed."""


class SegmentationError(PipelineError):
    pass


class PoseEstimationError(PipelineError):
    pass


@dataclass(frozen=True)
class Plane:
    """Plane {x : normal . x = offset} with unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(n)
        if abs(norm - 1.0) > 1e-9:
            n = n / norm
        object.__setattr__(self, "normal", n)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.normal - self.offset

    def oriented_toward(self, point) -> "Plane":
        """Flip the normal so `point` lies on the non-negative side."""
        if float(np.asarray(point) @ self.normal - self.offset) < 0.0:
            return Plane(-self.normal, -self.offset)
        return self


@dataclass(frozen=True)
class Circle3D:
    center: np.ndarray
    radius: float
    normal: np.ndarray

    def __post_init__(self):
        if self.radius < 0.0:
            raise ValueError("radius must be >= 0")
        object.__setattr__(self, "center",
                           np.asarray(self.center, dtype=np.float64).reshape(3))
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        object.__setattr__(self, "normal", n / np.linalg.norm(n))


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 60
    correspondence_max_dist: float = 0.01
    convergence_eps: float = 1e-8
    fitness_threshold: float = 0.7

    def __post_init__(self):
        if min(self.max_iterations, self.correspondence_max_dist,
               self.convergence_eps, self.fitness_threshold) <= 0:
            raise ValueError("all ICP parameters must be positive")


@dataclass(frozen=True)
class PoseEstimate:
    pose: RigidPose
    fitness: float  # nan for interpolated poses
    source: str  # "icp" | "interpolated"
    objective_history: tuple = ()  # accepted ICP objectives, non-increasing


def fit_plane(points: np.ndarray) -> Plane:
    """Total-least-squares plane: smallest principal direction of the
    centered points.  Mean signed residual is zero by construction."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if p.shape[0] < 3:
        raise ValueError("need at least 3 points to fit a plane")
    centroid = p.mean(axis=0)
    _, s, vt = np.linalg.svd(p - centroid, full_matrices=False)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise ValueError("points are collinear; plane is not unique")
    normal = vt[2]
    return Plane(normal, float(normal @ centroid))


def segment_object(cloud: np.ndarray, plane: Plane, height_eps: float) -> np.ndarray:
    """Points strictly more than height_eps above the (oriented) plane."""
    cloud = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    keep = plane.signed_distance(cloud) > height_eps
    if not np.any(keep):
        raise SegmentationError("segmentation removed every point")
    return cloud[keep]


def _kabsch(src: np.ndarray, dst: np.ndarray) -> RigidPose:
    """Least-squares rigid transform mapping src points onto dst points."""
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidPose(r, cd - r @ cs)


def icp_register(model_points: np.ndarray, observed_cloud: np.ndarray,
                 init: RigidPose, params: IcpParams,
                 model_normals: np.ndarray | None = None) -> PoseEstimate:
    """Point-to-point ICP (SVD update) aligning model points to observations.

    The recorded objective (mean inlier correspondence distance) is
    non-increasing: an update that would worsen it is rejected and the best
    pose so far is returned.  When model normals are supplied, points
    facing away from the camera under the current pose are excluded from
    matching (removes hidden-surface bias for single-view clouds).
    Divergence (too few inliers) yields fitness 0.
    """
    model = np.asarray(model_points, dtype=np.float64).reshape(-1, 3)
    observed = np.asarray(observed_cloud, dtype=np.float64).reshape(-1, 3)
    if model.shape[0] == 0 or observed.shape[0] == 0:
        raise ValueError("both point sets must be non-empty")
    tree = cKDTree(observed)
    pose = init
    best = PoseEstimate(init, 0.0, "icp")
    best_obj = math.inf
    history: list[float] = []
    for _ in range(params.max_iterations):
        tp = transform_points(model, pose)
        if model_normals is not None:
            tn = np.asarray(model_normals) @ pose.rotation.T
            facing = np.einsum("ij,ij->i", tn, tp) < 0.0
            if facing.sum() < 3:
                facing = np.ones(len(tp), dtype=bool)
        else:
            facing = np.ones(len(tp), dtype=bool)
        d, idx = tree.query(tp[facing],
                            distance_upper_bound=params.correspondence_max_dist)
        inlier = np.isfinite(d)
        if inlier.sum() < 3:
            break  # diverged: no usable correspondences
        obj = float(d[inlier].mean())
        fitness = float(inlier.mean())
        if obj < best_obj:
            history.append(obj)
            best = PoseEstimate(pose, fitness, "icp", tuple(history))
            improved = best_obj - obj
            best_obj = obj
            if improved < params.convergence_eps:
                break
        else:
            break  # would increase the objective: keep the best pose
        src = tp[facing][inlier]
        dst = observed[idx[inlier]]
        delta = _kabsch(src, dst)
        pose = delta.compose(pose)
    return best


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    e = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = e - (e @ normal) * normal
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(normal, e1)


def fit_circle3d(origins: np.ndarray) -> Circle3D:
    """Plane fit, in-plane algebraic (Kasa) circle fit, lifted back to 3D."""
    pts = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] < 3:
        raise ValueError("need at least 3 origins")
    plane = fit_plane(pts)  # raises for collinear origins
    e1, e2 = _plane_basis(plane.normal)
    anchor = pts.mean(axis=0)
    rel = pts - anchor
    x = rel @ e1
    y = rel @ e2
    a = np.column_stack([2.0 * x, 2.0 * y, np.ones_like(x)])
    b = x * x + y * y
    (cx, cy, c), *_ = np.linalg.lstsq(a, b, rcond=None)
    r2 = c + cx * cx + cy * cy
    radius = math.sqrt(max(r2, 0.0))
    if radius < 1e-9:
        raise ValueError("degenerate circle (radius ~ 0)")
    center = anchor + cx * e1 + cy * e2
    # keep the anchor plane height: project the lifted center onto the plane
    center += (plane.offset - center @ plane.normal) * plane.normal
    return Circle3D(center=center, radius=radius, normal=plane.normal)


# ---------------------------------------------------------------------------
# Scan-level pipeline
# ---------------------------------------------------------------------------

def depth_to_cloud(depth: np.ndarray, cam: CameraIntrinsics,
                   stride: int = 1) -> np.ndarray:
    """Back-project a z-depth image (0 = no hit) into a camera-frame cloud."""
    d = depth[::stride, ::stride]
    ii, jj = np.nonzero(d > 0.0)
    z = d[ii, jj]
    u = jj * stride
    v = ii * stride
    return np.column_stack([(u - cam.cx) / cam.fx * z,
                            (v - cam.cy) / cam.fy * z, z])


def estimate_table_plane(scan: ScanSequence, inlier_dist: float = 0.008,
                         iterations: int = 4, stride: int = 4) -> Plane:
    """Iteratively re-fitted TLS plane over all views, oriented toward the
    camera.  Object masks, when present, are excluded up front; otherwise
    the iteration relies on the table dominating the cloud."""
    clouds = []
    cam = scan.rig.camera
    for view in scan.views:
        depth = view.depth
        if view.object_mask is not None:
            depth = np.where(view.object_mask, 0.0, depth)
        clouds.append(depth_to_cloud(depth, cam, stride=stride))
    pts = np.concatenate(clouds)
    if pts.shape[0] < 3:
        raise SegmentationError("no depth samples to fit the table plane")
    plane = fit_plane(pts)
    for _ in range(iterations):
        keep = np.abs(plane.signed_distance(pts)) < inlier_dist
        if keep.sum() < 3:
            break
        plane = fit_plane(pts[keep])
    return plane.oriented_toward(np.zeros(3))


def _pca_frame(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    centroid = points.mean(axis=0)
    cov = np.cov((points - centroid).T)
    w, v = np.linalg.eigh(cov)
    frame = v[:, ::-1]  # descending variance
    if np.linalg.det(frame) < 0:
        frame = frame.copy()
        frame[:, 2] = -frame[:, 2]
    return centroid, frame


def _init_candidates(model: np.ndarray, observed: np.ndarray,
                     axis: np.ndarray, n_yaw: int = 12) -> list[RigidPose]:
    """Deterministic first-view initializations: principal-axes alignments
    plus a yaw sweep about the table axis."""
    cm, fm = _pca_frame(model)
    co, fo = _pca_frame(observed)
    cands = []
    for signs in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)):
        r = fo @ np.diag(signs) @ fm.T
        cands.append(RigidPose(r, co - r @ cm))
    for k in range(n_yaw):
        r = rotation_about_axis(axis, 2.0 * math.pi * k / n_yaw)
        cands.append(RigidPose(r, co - r @ cm))
    return cands


def _subsample(points: np.ndarray, n: int) -> np.ndarray:
    if points.shape[0] <= n:
        return points
    idx = np.linspace(0, points.shape[0] - 1, n).astype(np.int64)
    return points[idx]


def _coarse_icp(model, normals, observed, init, base: IcpParams) -> PoseEstimate:
    coarse = IcpParams(max_iterations=25,
                       correspondence_max_dist=4.0 * base.correspondence_max_dist,
                       convergence_eps=base.convergence_eps,
                       fitness_threshold=base.fitness_threshold)
    return icp_register(model, observed, init, coarse, model_normals=normals)


def _rotation_about_line(point: np.ndarray, axis: np.ndarray,
                         angle: float) -> RigidPose:
    r = rotation_about_axis(axis, angle)
    return RigidPose(r, point - r @ point)


@dataclass
class ScanPoseResult:
    estimates: list[PoseEstimate]
    plane: Plane
    circle: Circle3D | None
    turn_sign: float  # +1 when turntable angle increases about the plane normal

    def poses(self) -> list[RigidPose]:
        return [e.pose for e in self.estimates]


def _segment_views(scan: ScanSequence, plane: Plane, height_eps: float,
                   segmentation: str) -> list[np.ndarray | None]:
    """Per-view segmented clouds; a failed view yields None (it is skipped
    by ICP and later gets an interpolated pose)."""
    cam = scan.rig.camera
    clouds: list[np.ndarray | None] = []
    for i, view in enumerate(scan.views):
        try:
            if segmentation == "oracle":
                if view.object_mask is None:
                    raise SegmentationError(f"view {i}: no oracle mask in scan")
                depth = np.where(view.object_mask, view.depth, 0.0)
                cloud = depth_to_cloud(depth, cam)
                if cloud.shape[0] == 0:
                    raise SegmentationError(f"view {i}: empty oracle segmentation")
            else:
                cloud = segment_object(depth_to_cloud(view.depth, cam),
                                       plane, height_eps)
        except SegmentationError:
            cloud = None
        clouds.append(cloud)
    if all(c is None for c in clouds):
        raise SegmentationError("segmentation failed for every view")
    return clouds


def run_pose_pipeline(scan: ScanSequence, mesh: TriMesh,
                      sym: SymmetrySpec | None = None,
                      params: IcpParams | None = None,
                      segmentation: str = "geometric",
                      height_eps: float = 0.004,
                      n_model_points: int = 4000,
                      seed: int = 0) -> ScanPoseResult:
    """Full pose pipeline; see estimate_scan_poses for the plain list form."""
    from .representation import sample_surface

    sym = sym or SymmetrySpec()
    params = params or IcpParams()
    if scan.n_views < 3:
        raise PoseEstimationError("need at least 3 views")
    if segmentation not in ("geometric", "oracle"):
        raise ValueError(f"unknown segmentation mode {segmentation!r}")

    plane = estimate_table_plane(scan)
    axis = plane.normal  # oriented toward the camera
    clouds = _segment_views(scan, plane, height_eps, segmentation)
    angles = np.array([v.angle for v in scan.views])

    model, model_face = sample_surface(mesh, n_model_points, seed=seed,
                                       return_faces=True)
    face_normals = np.cross(
        mesh.vertices[mesh.faces[:, 1]] - mesh.vertices[mesh.faces[:, 0]],
        mesh.vertices[mesh.faces[:, 2]] - mesh.vertices[mesh.faces[:, 0]])
    face_normals /= np.linalg.norm(face_normals, axis=1)[:, None]
    normals = face_normals[model_face]
    small_idx = np.linspace(0, model.shape[0] - 1,
                            min(800, model.shape[0])).astype(np.int64)
    model_small = model[small_idx]
    normals_small = normals[small_idx]

    # --- anchor view (principal-axes + yaw sweep), retried if the
    # --- sequential pass rejects too many views ---------------------------
    n = scan.n_views
    best_run = None
    for anchor_idx in dict.fromkeys([0, n // 3, (2 * n) // 3]):
        if clouds[anchor_idx] is None:
            continue
        anchor = _anchor_estimate(model, normals, model_small, normals_small,
                                  clouds[anchor_idx], axis, params)
        if anchor.fitness < params.fitness_threshold:
            continue
        accepted, turn_sign = _sequential_pass(
            anchor_idx, anchor, clouds, angles, model, normals, axis, params)
        score = (len(accepted),
                 float(np.mean([e.fitness for e in accepted.values()])))
        if best_run is None or score > best_run[0]:
            best_run = (score, accepted, turn_sign)
        if len(accepted) == n:
            break
    if best_run is None or len(best_run[1]) < 3:
        got = 0 if best_run is None else len(best_run[1])
        raise PoseEstimationError(f"only {got} views passed ICP (need >= 3)")
    _, accepted, turn_sign = best_run
    estimates: list[PoseEstimate | None] = [None] * n
    for i, est in accepted.items():
        estimates[i] = est

    def fit_accepted_circle():
        pts = np.array([accepted[i].pose.translation for i in sorted(accepted)])
        try:
            c = fit_circle3d(pts)
            if c.normal @ axis < 0.0:
                c = Circle3D(c.center, c.radius, -c.normal)
            return c
        except ValueError:
            return None  # radius ~ 0 rig: interpolation falls back to anchors

    # --- polish pass: once the circle pivot is known, re-seed every view
    # --- from the best accepted pose and re-run ICP ----------------------
    circle = fit_accepted_circle()
    if circle is not None:
        best_idx = max(accepted, key=lambda i: (accepted[i].fitness, -i))
        best_pose = accepted[best_idx].pose
        for i in range(n):
            if clouds[i] is None:
                continue
            dtheta = turn_sign * float(angles[i] - angles[best_idx])
            seed = _rotation_about_line(circle.center, axis, dtheta
                                        ).compose(best_pose)
            est = _seeded_icp(model, normals, clouds[i], seed, params)
            old = accepted.get(i)
            if est.fitness >= params.fitness_threshold and (
                    old is None or not old.objective_history
                    or (est.objective_history and est.objective_history[-1]
                        <= old.objective_history[-1])):
                accepted[i] = est
                estimates[i] = est
        circle = fit_accepted_circle()

    # --- circle of accepted origins --------------------------------------
    origins = np.array([accepted[i].pose.translation for i in sorted(accepted)])
    acc_angles = np.array([angles[i] for i in sorted(accepted)])

    phase = None
    if circle is not None:
        e1, e2 = _plane_basis(circle.normal)
        rel = origins - circle.center
        phi = np.arctan2(rel @ e2, rel @ e1)
        # circular mean of (phi - sign * theta)
        z = np.exp(1j * (phi - turn_sign * acc_angles))
        phase = float(np.angle(z.mean()))

    # --- interpolate the rejected views ----------------------------------
    for i in range(scan.n_views):
        if estimates[i] is not None:
            continue
        near = min(accepted, key=lambda k: (abs(angles[k] - angles[i]), k))
        dtheta = float(angles[i] - angles[near])
        delta = _rotation_about_line(
            circle.center if circle is not None else accepted[near].pose.translation,
            axis, turn_sign * dtheta)
        pose = delta.compose(accepted[near].pose)
        if circle is not None and phase is not None:
            e1, e2 = _plane_basis(circle.normal)
            ang = turn_sign * float(angles[i]) + phase
            origin = circle.center + circle.radius * (
                math.cos(ang) * e1 + math.sin(ang) * e2)
            pose = RigidPose(pose.rotation, origin)
        estimates[i] = PoseEstimate(pose, float("nan"), "interpolated")

    # --- axial symmetry: pose rotation follows the turntable angle -------
    if sym.kind == "axial":
        anchor = min(accepted)
        pivot = circle.center if circle is not None else accepted[anchor].pose.translation
        for i in range(scan.n_views):
            if i == anchor:
                continue
            delta = _rotation_about_line(pivot, axis,
                                         turn_sign * float(angles[i] - angles[anchor]))
            pose = delta.compose(accepted[anchor].pose)
            old = estimates[i]
            estimates[i] = PoseEstimate(pose, old.fitness, old.source)

    return ScanPoseResult(estimates=list(estimates), plane=plane, circle=circle,
                          turn_sign=turn_sign)


def _turn_pivot(accepted: dict[int, PoseEstimate],
                prev_idx: int) -> np.ndarray:
    """Best available point on the turntable axis: the circle center of the
    accepted origins, else the previous origin (exact for radius 0)."""
    if len(accepted) >= 3:
        origins = np.array([e.pose.translation for e in accepted.values()])
        try:
            return fit_circle3d(origins).center
        except ValueError:
            pass
    return accepted[prev_idx].pose.translation


def _tighten(model, normals, cloud, est: PoseEstimate,
             params: IcpParams) -> PoseEstimate:
    """Final ICP stage with a cutoff shrunk to ~3x the median residual:
    drops far correspondences that smear the converged pose."""
    if est.fitness <= 0.0 or not est.objective_history:
        return est
    cutoff = min(params.correspondence_max_dist,
                 max(3.0 * est.objective_history[-1], 1e-4))
    if cutoff >= params.correspondence_max_dist:
        return est
    tight = IcpParams(max_iterations=params.max_iterations,
                      correspondence_max_dist=cutoff,
                      convergence_eps=params.convergence_eps,
                      fitness_threshold=params.fitness_threshold)
    refined = icp_register(model, cloud, est.pose, tight, model_normals=normals)
    if refined.fitness <= 0.0:
        return est
    # fitness is measured against the original cutoff for accept decisions
    full = icp_register(model, cloud, refined.pose,
                        dataclasses_replace(params, max_iterations=1),
                        model_normals=normals)
    return PoseEstimate(refined.pose, full.fitness, "icp",
                        refined.objective_history)


def _seeded_icp(model, normals, cloud, seed_pose: RigidPose,
                params: IcpParams) -> PoseEstimate:
    """Coarse (wide correspondence cutoff), fine, then tightened ICP."""
    coarse = _coarse_icp(model, normals, cloud, seed_pose, params)
    fine = icp_register(model, cloud, coarse.pose, params, model_normals=normals)
    return _tighten(model, normals, cloud, fine, params)


def _sequential_pass(anchor_idx: int, anchor: PoseEstimate,
                     clouds: list[np.ndarray], angles: np.ndarray,
                     model, normals, axis, params: IcpParams
                     ) -> tuple[dict[int, PoseEstimate], float]:
    """Walk outward from the anchor view, seeding each ICP by composing the
    recorded turntable rotation with the nearest accepted pose.  The
    rotation direction (sign) is unknown up front: both are tried until
    one produces an accepted view, then it is locked."""
    n = len(clouds)
    accepted: dict[int, PoseEstimate] = {anchor_idx: anchor}
    turn_sign = 1.0
    sign_locked = False
    order = list(range(anchor_idx + 1, n)) + list(range(anchor_idx - 1, -1, -1))
    prev_idx = anchor_idx
    for i in order:
        if clouds[i] is None:
            continue  # failed segmentation: the view gets interpolated later
        if (i > anchor_idx) != (prev_idx > anchor_idx) and prev_idx != anchor_idx:
            prev_idx = anchor_idx  # direction flipped: restart from anchor
        prev = accepted[prev_idx].pose
        dtheta = float(angles[i] - angles[prev_idx])
        pivot = _turn_pivot(accepted, prev_idx)
        signs = (turn_sign,) if sign_locked else (1.0, -1.0)
        results = [
            _seeded_icp(model, normals, clouds[i],
                        _rotation_about_line(pivot, axis, s * dtheta).compose(prev),
                        params)
            for s in signs
        ]
        pick = int(np.argmax([r.fitness for r in results]))
        est = results[pick]
        if not sign_locked and est.fitness >= params.fitness_threshold:
            turn_sign = signs[pick]
            sign_locked = True
        if est.fitness >= params.fitness_threshold:
            accepted[i] = est
            prev_idx = i
    return accepted, turn_sign


def _anchor_estimate(model, normals, model_small, normals_small, cloud,
                     axis, params: IcpParams, n_finalists: int = 4
                     ) -> PoseEstimate:
    """Best ICP result over the first-view init candidates.

    All candidates run a cheap coarse ICP on a subsample; the coarse cutoff
    is too wide to separate near-symmetric fits, so the top few finalists
    are refined at full resolution and ranked by converged objective."""
    tree = cKDTree(cloud)

    def residual(est: PoseEstimate) -> float:
        tp = transform_points(model_small, est.pose)
        d, _ = tree.query(tp, distance_upper_bound=4.0 * params.correspondence_max_dist)
        d = d[np.isfinite(d)]
        return float(d.mean()) if d.size else math.inf

    scored = []
    for j, cand in enumerate(_init_candidates(model_small, cloud, axis)):
        est = _coarse_icp(model_small, normals_small, cloud, cand, params)
        scored.append(((-est.fitness, residual(est), j), est))
    scored.sort(key=lambda item: item[0])

    best: PoseEstimate | None = None
    best_key = None
    for _, coarse_est in scored[:n_finalists]:
        fine = icp_register(model, cloud, coarse_est.pose, params,
                            model_normals=normals)
        fine = _tighten(model, normals, cloud, fine, params)
        obj = fine.objective_history[-1] if fine.objective_history else math.inf
        key = (-round(fine.fitness, 3), obj)
        if best_key is None or key < best_key:
            best, best_key = fine, key
    return best


def estimate_scan_poses(scan: ScanSequence, mesh: TriMesh,
                        sym: SymmetrySpec | None = None,
                        params: IcpParams | None = None,
                        **kwargs) -> list[PoseEstimate]:
    """Per-view pose estimates (ICP where possible, interpolated otherwise)."""
    return run_pose_pipeline(scan, mesh, sym, params, **kwargs).estimates
