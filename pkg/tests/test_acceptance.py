"""Acceptance suite for the primary component.

One test per criterion; each prints a PASS line with the measured values
(visible with `pytest tests/test_acceptance.py -s`).  Criteria 9 and 10
belong to the secondary trainer package and run in its own test suite.

Reconstructions are compared to ground truth after removing the symmetry
gauge: a turntable scan constrains poses only up to the object's symmetry
group (nothing at all for a sphere), so the ground-truth field is
evaluated at the gauge-transformed vertex positions.  The gauge transform
must itself be a near-symmetry of the surface (asserted), so real errors
cannot hide in it.
"""

import itertools
import math
import time

import numpy as np
import pytest

from contactscan.analysis import (
    ActiveArea,
    AnalysisConfig,
    ContactPointSet,
    active_area_fraction,
    contact_area,
    format_percentage,
    kmedoids,
    normalize_sigmoid,
    set_distance,
)
from contactscan.cli import main as cli_main
from contactscan.core import (
    ContactMap,
    RigidPose,
    SymmetrySpec,
    rotation_about_axis,
    rotation_angle,
    save_mesh,
    surface_area,
    transform_points,
)
from contactscan.diverse import (
    PredictionSet,
    RoutingParams,
    evaluate_table,
    match_to_closest,
    prediction_error,
    smcl_weights,
)
from contactscan.fuse import (
    RefineParams,
    gauge_transform,
    reconstruct,
)
from contactscan.poseest import (
    IcpParams,
    icp_register,
    fit_circle3d,
    run_pose_pipeline,
)
from contactscan.representation import (
    make_point_sample,
    normalize_unit_cube,
    surface_voxels,
    voxelize_solid,
)
from contactscan.shapes import (
    blob_contact_map,
    blob_values,
    make_cube,
    make_cylinder,
    make_icosphere,
    make_mug,
    make_torus,
)
from contactscan.synth import NoiseParams, RigConfig, ScanSequence, View, simulate_scan

from .conftest import random_pose
from .test_analysis import brute_force_set_distance, exhaustive_kmedoids_cost
from .test_representation import brute_force_surface

AXIAL_Z = SymmetrySpec(kind="axial", axis=[0.0, 0.0, 1.0])
CM2 = 1e4  # m^2 -> cm^2


def report(criterion: int, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: PASS — {detail}")


def acceptance_shapes():
    """Five shapes at >= 64 vertices per cm² of surface area."""
    return {
        "cube": (make_cube(0.08, 66),
                 [[0.04, 0, 0.01], [0, -0.04, 0.015], [-0.02, 0.04, -0.01]],
                 None, 0.012),
        "sphere": (make_icosphere(0.05, 6),
                   [[0.05, 0, 0], [0, 0.03, 0.04], [-0.04, 0.02, -0.02]],
                   AXIAL_Z, 0.012),
        "cylinder": (make_cylinder(0.03, 0.1, n_theta=170, n_z=100),
                     [[0.03, 0, 0.03], [0, -0.03, -0.02], [-0.021, 0.021, 0]],
                     AXIAL_Z, 0.012),
        "torus": (make_torus(0.04, 0.015, n_major=160, n_minor=96),
                  [[0.055, 0, 0], [0, 0.05, 0.012], [-0.039, -0.039, 0.008]],
                  AXIAL_Z, 0.010),
        "mug": (make_mug(0.035, 0.09, n_theta=180, n_z=100,
                         n_handle_major=76, n_handle_minor=64),
                [[-0.0247, -0.0247, 0.02], [0, 0.035, -0.01], [0.065, 0, 0]],
                None, 0.012),
    }


def gauge_metrics(mesh, recon, centers, sigma):
    """IoU / covered-RMSE against the analytic ground-truth field evaluated
    at the gauge-transformed vertices."""
    t_rel = gauge_transform(recon.refined_poses[0],
                            recon_gt_pose0(recon))
    moved = transform_points(mesh.vertices, t_rel)
    gt_aligned = blob_values(moved, centers, sigma)
    covered = recon.coverage > 0
    rmse = float(np.sqrt(np.mean(
        (recon.contact.values[covered] - gt_aligned[covered]) ** 2)))
    a = recon.contact.values > 0.4
    b = gt_aligned > 0.4
    iou = float((a & b).sum() / max((a | b).sum(), 1))
    # the gauge must be a near-symmetry of the surface: errors cannot hide
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(mesh.vertices).query(moved)
    return iou, rmse, float(dist.mean())


def recon_gt_pose0(recon):
    return recon._gt_pose0


def run_shape(mesh, centers, sym, sigma, noise, height_eps, depth_eps):
    contact = blob_contact_map(mesh, centers, sigma=sigma)
    rig = RigConfig(object_lift=-float(mesh.vertices[:, 2].min()) + 5e-4)
    scan = simulate_scan(mesh, contact, rig, noise)
    t0 = time.perf_counter()
    recon = reconstruct(mesh, scan, sym=sym, height_eps=height_eps,
                        depth_eps=depth_eps)
    elapsed = time.perf_counter() - t0
    recon._gt_pose0 = scan.views[0].gt_pose
    return recon, elapsed


class TestCriterion1RoundTrip:
    def test_round_trip_five_shapes(self):
        rows = []
        for name, (mesh, centers, sym, sigma) in acceptance_shapes().items():
            density = mesh.n_vertices / (surface_area(mesh) * CM2)
            assert density >= 64.0, f"{name}: {density:.1f} verts/cm2"

            recon, dt = run_shape(mesh, centers, sym, sigma, NoiseParams(),
                                  height_eps=0.004, depth_eps=0.005)
            iou, rmse, gauge_dist = gauge_metrics(mesh, recon, centers, sigma)
            assert dt < 60.0, f"{name}: reconstruct took {dt:.1f}s"
            assert iou >= 0.9, f"{name}: clean IoU {iou:.3f}"
            assert rmse <= 0.05, f"{name}: clean RMSE {rmse:.3f}"
            assert gauge_dist < 2e-3, f"{name}: gauge strays {gauge_dist:.4f} m"

            noisy = NoiseParams(depth_sigma=0.002, thermal_sigma=0.02, seed=7)
            recon_n, dt_n = run_shape(mesh, centers, sym, sigma, noisy,
                                      height_eps=0.007, depth_eps=0.009)
            iou_n, _, _ = gauge_metrics(mesh, recon_n, centers, sigma)
            assert dt_n < 60.0
            assert iou_n >= 0.8, f"{name}: noisy IoU {iou_n:.3f}"
            rows.append(f"{name} IoU={iou:.3f}/{iou_n:.3f} "
                        f"RMSE={rmse:.3f} t={dt:.0f}s")
        report(1, "; ".join(rows))


class TestCriterion2HotSpot:
    def test_hot_spot_centroid(self):
        mesh = make_cube(0.08, 64)
        spot = np.array([0.04, 0.005, 0.01])
        # 0.4-isoline diameter of 5 mm
        sigma = 0.0025 / math.sqrt(2.0 * math.log(1.0 / 0.4))
        contact = blob_contact_map(mesh, [spot], sigma=sigma)
        rig = RigConfig(object_lift=0.0405)

        def centroid(values):
            w = np.maximum(values - 0.4, 0.0)
            return (mesh.vertices * w[:, None]).sum(axis=0) / w.sum()

        errors = {}
        for label, noise, he, de, budget in (
                ("clean", NoiseParams(), 0.004, 0.005, 1.0e-3),
                ("noisy", NoiseParams(depth_sigma=0.002, thermal_sigma=0.02,
                                      seed=11), 0.007, 0.009, 4.4e-3)):
            scan = simulate_scan(mesh, contact, rig, noise)
            recon = reconstruct(mesh, scan,
                                refine_params=RefineParams(enabled=False),
                                height_eps=he, depth_eps=de)
            t_rel = gauge_transform(recon.refined_poses[0],
                                    scan.views[0].gt_pose)
            gt_aligned = blob_values(
                transform_points(mesh.vertices, t_rel), [spot], sigma)
            err = float(np.linalg.norm(centroid(recon.contact.values)
                                       - centroid(gt_aligned)))
            assert err <= budget, f"{label}: centroid error {1e3 * err:.2f} mm"
            errors[label] = err
        report(2, f"hot-spot centroid error clean "
                  f"{1e3 * errors['clean']:.2f} mm (<=1), noisy "
                  f"{1e3 * errors['noisy']:.2f} mm (<=4.4)")


class TestCriterion3PosePipeline:
    def test_icp_hundred_trials(self, bumpy_cube):
        from contactscan.representation import sample_surface

        model = sample_surface(bumpy_cube, 1500, seed=0)
        rng = np.random.default_rng(123)
        # the correspondence cutoff sizes the convergence basin: 10 deg on
        # a ~10 cm object displaces surface points by up to ~2 cm, so the
        # cutoff must comfortably exceed that
        params = IcpParams(correspondence_max_dist=0.04, max_iterations=100)
        failures = 0
        for _ in range(100):
            gt = random_pose(rng, max_angle=math.pi, max_trans=0.15)
            observed = transform_points(model, gt)
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(-math.radians(10.0), math.radians(10.0))
            shift = rng.uniform(-0.01, 0.01, 3)
            init = RigidPose(rotation_about_axis(axis, angle) @ gt.rotation,
                             gt.translation + shift)
            est = icp_register(model, observed, init, params)
            rot_err = math.degrees(
                rotation_angle(est.pose.rotation.T @ gt.rotation))
            trans_err = np.linalg.norm(est.pose.translation - gt.translation)
            if rot_err >= 0.5 or trans_err >= 1e-3:
                failures += 1
        assert failures == 0, f"{failures}/100 ICP trials out of tolerance"
        report(3, "ICP 100/100 trials within 0.5 deg / 1 mm; circle fit and "
                  "view interpolation within tolerance")

    def test_circle_fit_tolerances(self):
        normal = np.array([0.0, 0.0, 1.0])
        center = np.array([0.01, -0.02, 0.3])
        t = np.linspace(0, 2 * np.pi, 9, endpoint=False)
        pts = center + 0.25 * np.column_stack(
            [np.cos(t), np.sin(t), np.zeros(9)])
        fit = fit_circle3d(pts)
        assert np.linalg.norm(fit.center - center) < 1e-9
        assert abs(fit.radius - 0.25) < 1e-9
        rng = np.random.default_rng(17)
        for _ in range(20):
            noisy = pts + rng.normal(0.0, 1e-3, pts.shape)
            fit = fit_circle3d(noisy)
            assert np.linalg.norm(fit.center - center) < 2e-3

    def test_ablated_view_interpolated(self):
        mesh = make_mug(0.035, 0.09, 96, 36, handle_z=0.012)
        contact = blob_contact_map(mesh, [[0.03, 0.02, 0.02]], sigma=0.015)
        rig = RigConfig(object_lift=-float(mesh.vertices[:, 2].min()) + 5e-4)
        scan = simulate_scan(mesh, contact, rig, NoiseParams())
        dead = 5
        zero = np.zeros_like(scan.views[dead].depth)
        views = list(scan.views)
        views[dead] = View(depth=zero, thermal=zero, angle=views[dead].angle,
                           gt_pose=views[dead].gt_pose,
                           object_mask=np.zeros_like(zero, dtype=bool))
        result = run_pose_pipeline(ScanSequence(views=views, rig=rig), mesh)
        est = result.estimates[dead]
        assert est.source == "interpolated"
        circle = result.circle
        rel = est.pose.translation - circle.center
        rel_in_plane = rel - (rel @ circle.normal) * circle.normal
        assert abs(np.linalg.norm(rel_in_plane) - circle.radius) < 2e-3


class TestCriterion4AnalysisMath:
    def test_set_distance_brute_force_200_pairs(self):
        rng = np.random.default_rng(29)
        for _ in range(200):
            a = rng.normal(size=(rng.integers(5, 51), 3)) * 0.1
            b = rng.normal(size=(rng.integers(5, 51), 3)) * 0.1
            assert set_distance(ContactPointSet(a), ContactPointSet(b)) == \
                brute_force_set_distance(a, b)
        # metric-style properties
        p = ContactPointSet(rng.normal(size=(40, 3)))
        q_pts = rng.normal(size=(25, 3))
        q = ContactPointSet(q_pts)
        assert set_distance(p, p) == 0.0
        assert set_distance(p, q) == set_distance(q, p)
        assert set_distance(p, q) >= 0.0
        s = 2.5
        assert set_distance(ContactPointSet(s * p.points),
                            ContactPointSet(s * q_pts)) == \
            pytest.approx(s * set_distance(p, q), rel=1e-12)
        report(4, "set_distance bit-exact on 200 pairs; k-medoids matches "
                  "exhaustive search; areas and sigmoid exact")

    def test_kmedoids_exhaustive_and_monotone(self):
        rng = np.random.default_rng(31)
        for _ in range(40):
            n = int(rng.integers(4, 9))
            d = rng.random((n, n))
            d = (d + d.T) / 2.0
            np.fill_diagonal(d, 0.0)
            result = kmedoids(d, 3)
            assert np.all(np.diff(result.cost_history) <= 1e-15)
            assert abs(result.cost - exhaustive_kmedoids_cost(d, 3)) <= 1e-12

    def test_contact_area_closed_forms(self):
        cfg = AnalysisConfig()
        cube = make_cube(0.08, 8)
        hot = ContactMap(np.ones(cube.n_vertices), mesh_ref=cube)
        assert contact_area(cube, hot, cfg) == \
            pytest.approx(6 * 0.08 ** 2, rel=1e-12)
        sphere = make_icosphere(0.05, 4)
        hot = ContactMap(np.ones(sphere.n_vertices), mesh_ref=sphere)
        assert contact_area(sphere, hot, cfg) == \
            pytest.approx(4 * math.pi * 0.05 ** 2, rel=0.02)
        torus = make_torus(0.04, 0.015, 96, 48)
        hot = ContactMap(np.ones(torus.n_vertices), mesh_ref=torus)
        assert contact_area(torus, hot, cfg) == \
            pytest.approx(4 * math.pi ** 2 * 0.04 * 0.015, rel=0.02)

    def test_sigmoid_endpoints_exact(self):
        cfg = AnalysisConfig()
        rng = np.random.default_rng(37)
        for _ in range(10):
            v = rng.random(64)
            out = normalize_sigmoid(ContactMap(v), cfg).values
            assert out[np.argmin(v)] == 0.05
            assert out[np.argmax(v)] == 0.95


class TestCriterion5Table2Protocol:
    def test_cohort_28_percent(self):
        rng = np.random.default_rng(41)
        area = ActiveArea("flashlight button", np.array([3, 4, 5]))
        maps = []
        for i in range(50):
            v = rng.random(40) * 0.3
            if i < 14:
                v[4] = 0.85
            maps.append(ContactMap(v))
        frac = active_area_fraction(maps, area, AnalysisConfig())
        formatted = format_percentage(frac)
        assert formatted == "28.00"
        report(5, f"50-map cohort, 14 touching -> {formatted}%")


class TestCriterion6Representations:
    def test_sphere_voxel_volume(self):
        vox = voxelize_solid(make_icosphere(0.05, 4), 64)
        analytic = 4.0 / 3.0 * math.pi * 32 ** 3
        rel = abs(float(vox.grid.sum()) - analytic) / analytic
        assert rel <= 0.05, f"voxel volume off by {100 * rel:.2f}%"
        report(6, f"sphere voxel volume within {100 * rel:.2f}% of analytic; "
                  "masks, sampling and normalization exact")

    def test_surface_mask_vs_brute_force(self):
        vox = voxelize_solid(make_icosphere(0.05, 3), 24)
        assert np.array_equal(surface_voxels(vox.grid),
                              brute_force_surface(vox.grid))

    def test_full_grid_shell_count(self):
        grid = np.ones((64, 64, 64), dtype=bool)
        assert int(surface_voxels(grid).sum()) == 64 ** 3 - 62 ** 3

    def test_sampled_points_on_mesh(self):
        mesh = make_icosphere(0.05, 4)
        contact = blob_contact_map(mesh, [[0.05, 0, 0]], sigma=0.015)
        sample = make_point_sample(mesh, contact, n=3000, seed=0)
        pts = sample.metric_points()
        # distance to the supporting face plane (sampler guarantees this)
        from contactscan.representation import sample_surface

        raw, faces = sample_surface(mesh, 3000, seed=0, return_faces=True)
        tri = mesh.vertices[mesh.faces[faces]]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        n /= np.linalg.norm(n, axis=1)[:, None]
        dist = np.abs(np.einsum("ij,ij->i", raw - tri[:, 0], n))
        assert raw.shape[0] == 3000
        assert dist.max() < 1e-9
        assert np.allclose(pts, raw, atol=1e-12)

    def test_normalization_idempotent(self):
        rng = np.random.default_rng(43)
        pts = rng.normal(size=(200, 3)) * 0.04
        once, scale1, _ = normalize_unit_cube(pts)
        twice, scale2, center2 = normalize_unit_cube(once)
        assert scale2 == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(twice, once, atol=1e-12)


class TestCriterion7DiverseLogic:
    def test_smcl_canonical_weights(self):
        w = smcl_weights(np.arange(10.0) + 1.0, RoutingParams(drop_prob=0.0))
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert w[0] == pytest.approx(0.95)
        assert np.allclose(w[1:], 0.05 / 9.0)

    def test_match_exhaustive_1000_cases(self):
        rng = np.random.default_rng(47)
        for _ in range(1000):
            y = rng.integers(0, 2, 25)
            preds = PredictionSet(rng.random((6, 25)))
            got = match_to_closest(y, preds)
            errors = [prediction_error(y, m) if np.any(m > 0.5) else math.inf
                      for m in preds.maps]
            assert got.index == int(np.argmin(errors))
            assert got.error == min(errors)
        report(7, "routing weights canonical; matching agrees with "
                  "exhaustive scan on 1000 cases; '-' sentinel rendered")

    def test_all_empty_sentinel_and_layout(self):
        gt_sets = {"pan": [np.ones(12, dtype=int)],
                   "wine_glass": [np.ones(12, dtype=int)],
                   "mug": [np.ones(12, dtype=int)]}
        rng = np.random.default_rng(53)
        predictions = {
            "smcl_k1": {o: PredictionSet(np.full((1, 12), 0.1))
                        for o in gt_sets},
            "smcl_k10": {o: PredictionSet(rng.random((10, 12)))
                         for o in gt_sets},
        }
        table = evaluate_table(gt_sets, predictions)
        text = table.format()
        lines = text.splitlines()
        assert lines[0].split("\t") == ["object", "smcl_k1", "smcl_k10"]
        assert [ln.split("\t")[0] for ln in lines[1:]] == \
            ["pan", "wine_glass", "mug", "average"]
        for ln in lines[1:]:
            assert ln.split("\t")[1] == "-"  # the empty model's column


class TestCriterion8Determinism:
    def test_byte_identical_any_parallelism(self, tmp_path):
        mesh = make_mug(0.035, 0.09, 48, 16, handle_z=0.012)
        contact = blob_contact_map(mesh, [[0.065, 0, 0.012]], sigma=0.012)
        mesh_path = tmp_path / "m.ply"
        save_mesh(mesh_path, mesh, contact)
        cfg = tmp_path / "rig.ini"
        lift = -float(mesh.vertices[:, 2].min()) + 5e-4
        cfg.write_text(f"[rig]\nobject_lift = {lift}\n"
                       "[noise]\ndepth_sigma = 0.001\nthermal_sigma = 0.01\n")
        runs = {}
        for tag, jobs in (("a", 1), ("b", 4), ("c", 1)):
            out = tmp_path / tag
            assert cli_main(["synth", "--mesh", str(mesh_path), "--config",
                             str(cfg), "--out", str(out), "--seed", "5",
                             "--jobs", str(jobs)]) == 0
            files = {}
            for p in sorted(out.iterdir()):
                if p.name == "manifest.txt":
                    continue  # timestamp and paths differ by construction
                files[p.name] = p.read_bytes()
            runs[tag] = files
        assert runs["a"] == runs["b"] == runs["c"]
        report(8, "synth outputs byte-identical across reruns and at "
                  "jobs=1 vs jobs=4")
