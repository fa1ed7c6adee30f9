import math

import numpy as np
import pytest

from contactscan.core import ContactMap, TriMesh
from contactscan.diverse import PredictionSet
from contactscan.representation import (
    AugmentSpec,
    DatasetEntry,
    augment,
    export_dataset,
    import_dataset,
    import_predictions,
    label_contacts,
    make_point_sample,
    make_voxel_sample,
    normalize_unit_cube,
    sample_surface,
    save_predictions,
    surface_voxels,
    voxelize_solid,
    weighted_cross_entropy,
)
from contactscan.shapes import (
    blob_contact_map,
    make_cube,
    make_icosphere,
    make_plate,
)


class TestNormalizeUnitCube:
    def test_cube_scale(self):
        pts = make_cube(0.12, 2).vertices
        norm, scale, center = normalize_unit_cube(pts)
        assert scale == pytest.approx(0.12)
        for axis in range(3):
            assert norm[:, axis].min() == pytest.approx(-0.5)
            assert norm[:, axis].max() == pytest.approx(0.5)

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(50, 3))
        norm1, _, _ = normalize_unit_cube(pts)
        norm2, scale2, center2 = normalize_unit_cube(norm1)
        assert scale2 == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(norm2, norm1, atol=1e-12)
        assert np.allclose(center2, 0.0, atol=1e-12)

    def test_elongated_box(self):
        pts = np.array([[x, y, z]
                        for x in (0.0, 0.12)
                        for y in (0.0, 0.04)
                        for z in (0.0, 0.04)])
        norm, scale, _ = normalize_unit_cube(pts)
        assert scale == pytest.approx(0.12)
        assert norm[:, 1].max() == pytest.approx(1.0 / 6.0)
        assert norm[:, 1].min() == pytest.approx(-1.0 / 6.0)

    def test_zero_extent_rejected(self):
        with pytest.raises(ValueError):
            normalize_unit_cube(np.zeros((5, 3)))


class TestSampleSurface:
    def test_count(self, small_sphere):
        pts = sample_surface(small_sphere, 3000, seed=0)
        assert pts.shape == (3000, 3)

    def test_area_weighted_split(self):
        # two triangles with areas 1 and 3; multinomial concentration puts
        # the 40000-sample split within 2% of 1:3
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0],
                          [10, 0, 0], [13, 0, 0], [10, 2, 0.0]])
        mesh = TriMesh(verts, [[0, 1, 2], [3, 4, 5]])
        pts = sample_surface(mesh, 40000, seed=1)
        frac_second = np.mean(pts[:, 0] > 5.0)
        assert frac_second == pytest.approx(0.75, abs=0.02)

    def test_points_on_surface(self, small_sphere):
        pts, faces = sample_surface(small_sphere, 2000, seed=2,
                                    return_faces=True)
        tri = small_sphere.vertices[small_sphere.faces[faces]]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        n /= np.linalg.norm(n, axis=1)[:, None]
        dist = np.abs(np.einsum("ij,ij->i", pts - tri[:, 0], n))
        assert dist.max() < 1e-9

    def test_deterministic(self, small_sphere):
        a = sample_surface(small_sphere, 100, seed=3)
        b = sample_surface(small_sphere, 100, seed=3)
        assert np.array_equal(a, b)


class TestVoxelizeSolid:
    def test_sphere_volume_64(self):
        mesh = make_icosphere(0.05, 4)
        vox = voxelize_solid(mesh, 64)
        analytic = 4.0 / 3.0 * math.pi * 32 ** 3
        assert vox.grid.sum() == pytest.approx(analytic, rel=0.05)
        assert vox.watertight

    def test_sphere_volume_48(self):
        mesh = make_icosphere(0.05, 4)
        vox = voxelize_solid(mesh, 48)
        analytic = 4.0 / 3.0 * math.pi * 24 ** 3
        assert vox.grid.sum() == pytest.approx(analytic, rel=0.05)

    def test_thin_plate_no_interior(self):
        plate = make_plate(0.1, 0.1, 8, 8)
        vox = voxelize_solid(plate, 32)
        assert np.array_equal(vox.grid, vox.surface)
        assert not vox.watertight

    def test_cube_exact_32(self):
        cube = make_cube(0.08, 4)
        vox = voxelize_solid(cube, 32)
        surface_count = int(vox.surface.sum())
        assert abs(int(vox.grid.sum()) - 32 ** 3) <= surface_count

    def test_monotone_under_containment(self):
        big = make_icosphere(0.05, 3)
        small = make_icosphere(0.03, 3)
        frame_pts, scale, center = normalize_unit_cube(big.vertices)
        vb = voxelize_solid(big, 48, frame=(center, scale))
        vs = voxelize_solid(small, 48, frame=(center, scale))
        assert not np.any(vs.grid & ~vb.grid)

    def test_deterministic(self):
        mesh = make_icosphere(0.04, 3)
        a = voxelize_solid(mesh, 32)
        b = voxelize_solid(mesh, 32)
        assert np.array_equal(a.grid, b.grid)


def brute_force_surface(grid: np.ndarray) -> np.ndarray:
    r = grid.shape[0]
    out = np.zeros_like(grid)
    for i in range(r):
        for j in range(r):
            for k in range(r):
                if not grid[i, j, k]:
                    continue
                for di, dj, dk in ((1, 0, 0), (-1, 0, 0), (0, 1, 0),
                                   (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                    a, b, c = i + di, j + dj, k + dk
                    if not (0 <= a < r and 0 <= b < r and 0 <= c < r) \
                            or not grid[a, b, c]:
                        out[i, j, k] = True
                        break
    return out


class TestSurfaceVoxels:
    def test_full_grid_shell(self):
        grid = np.ones((64, 64, 64), dtype=bool)
        mask = surface_voxels(grid)
        assert int(mask.sum()) == 64 ** 3 - 62 ** 3

    def test_single_voxel(self):
        grid = np.zeros((8, 8, 8), dtype=bool)
        grid[3, 4, 5] = True
        mask = surface_voxels(grid)
        assert mask.sum() == 1 and mask[3, 4, 5]

    def test_sphere_matches_brute_force(self):
        mesh = make_icosphere(0.05, 3)
        vox = voxelize_solid(mesh, 24)
        assert np.array_equal(surface_voxels(vox.grid),
                              brute_force_surface(vox.grid))


class TestLabelContacts:
    def test_all_hot(self, small_sphere):
        contact = ContactMap(np.ones(small_sphere.n_vertices),
                             mesh_ref=small_sphere)
        sample = make_point_sample(small_sphere, contact, n=500, seed=0)
        assert np.all(sample.labels == 1)
        vs = make_voxel_sample(small_sphere, contact, resolution=24)
        assert np.all(vs.labels == 1)

    def test_all_cold(self, small_sphere):
        contact = ContactMap(np.zeros(small_sphere.n_vertices),
                             mesh_ref=small_sphere)
        sample = make_point_sample(small_sphere, contact, n=500, seed=0)
        assert np.all(sample.labels == 0)
        vs = make_voxel_sample(small_sphere, contact, resolution=24)
        assert np.all(vs.labels == 0)

    def test_half_hot_sphere_matches_nearest_vertex_oracle(self):
        mesh = make_icosphere(0.05, 3)
        values = (mesh.vertices[:, 2] > 0).astype(float)
        contact = ContactMap(values, mesh_ref=mesh)
        sample = make_point_sample(mesh, contact, n=2000, seed=1)
        # oracle: nearest vertex by explicit scan
        pts = sample.metric_points()
        d2 = ((pts[:, None, :] - mesh.vertices[None]) ** 2).sum(axis=2)
        oracle = (values[np.argmin(d2, axis=1)] > 0.4).astype(np.uint8)
        agreement = np.mean(oracle == sample.labels)
        assert agreement >= 0.99
        # voxel path: labeled surface voxels form the upper hemisphere
        vs = make_voxel_sample(mesh, contact, resolution=32)
        surf = vs.surface_indices()
        hot = vs.labels == 1
        z = surf[:, 2]
        mid = 15.5
        assert np.mean(z[hot] > mid) > 0.95
        assert np.mean(z[~hot] <= mid) > 0.95


class TestAugment:
    def test_identity_spec(self, small_sphere):
        contact = blob_contact_map(small_sphere, [[0.05, 0, 0]], sigma=0.02)
        sample = make_point_sample(small_sphere, contact, n=300, seed=2)
        out = augment(sample, AugmentSpec())
        assert np.allclose(out.points, sample.points, atol=1e-12)
        assert np.array_equal(out.labels, sample.labels)
        assert out.scale == pytest.approx(sample.scale)

    def test_yaw_90_permutes_box_coordinates(self):
        mesh = make_cube(0.08, 4)
        contact = ContactMap(np.zeros(mesh.n_vertices), mesh_ref=mesh)
        sample = make_point_sample(mesh, contact, n=400, seed=3)
        out = augment(sample, AugmentSpec(yaw_angle=math.pi / 2))
        # yaw by 90: (x, y) -> (-y, x); the unit cube renormalization maps
        # back onto itself for an axis-aligned cube
        expected = np.column_stack([-sample.points[:, 1], sample.points[:, 0],
                                    sample.points[:, 2]])
        assert np.allclose(out.points, expected, atol=1e-9)

    def test_axis_scale_ratio(self, small_sphere):
        contact = ContactMap(np.zeros(small_sphere.n_vertices),
                             mesh_ref=small_sphere)
        sample = make_point_sample(small_sphere, contact, n=500, seed=4)
        out = augment(sample, AugmentSpec(axis_index=0, axis_factor=0.6))
        # x shrank by 0.6, so y/z (now the largest) set the new scale
        metric = sample.metric_points()
        squashed = metric.copy()
        squashed[:, 0] *= 0.6
        ratio = np.ptp(squashed[:, 0]) / np.ptp(squashed[:, 1])
        got = np.ptp(out.points[:, 0]) / np.ptp(out.points[:, 1])
        assert got == pytest.approx(ratio, rel=1e-9)

    def test_voxel_yaw_90_grid_symmetry(self):
        mesh = make_cube(0.08, 6)
        values = (mesh.vertices[:, 2] > 0.02).astype(float)
        contact = ContactMap(values, mesh_ref=mesh)
        base = make_voxel_sample(mesh, contact, resolution=16)
        out = augment(base, AugmentSpec(yaw_angle=math.pi / 2), mesh=mesh,
                      contact=contact)
        # a z-threshold labeling is invariant under yaw for a cube
        assert int(out.labels.sum()) == int(base.labels.sum())
        assert out.grid.sum() == base.grid.sum()

    def test_voxel_requires_mesh(self, small_sphere):
        contact = ContactMap(np.zeros(small_sphere.n_vertices),
                             mesh_ref=small_sphere)
        vs = make_voxel_sample(small_sphere, contact, resolution=16)
        with pytest.raises(ValueError):
            augment(vs, AugmentSpec(yaw_angle=1.0))

    def test_factor_range_enforced(self):
        with pytest.raises(ValueError):
            AugmentSpec(axis_factor=0.5)
        with pytest.raises(ValueError):
            AugmentSpec(axis_factor=1.5)


class TestWeightedCrossEntropy:
    def test_perfect_prediction_near_zero(self):
        y = np.array([0, 1, 1, 0], dtype=float)
        loss = weighted_cross_entropy(y, y)
        assert loss == pytest.approx(0.0, abs=1e-5)

    def test_half_probability_positive(self):
        y = np.ones(8)
        p = np.full(8, 0.5)
        loss = weighted_cross_entropy(p, y, positive_weight=10.0)
        assert loss == pytest.approx(10.0 * math.log(2.0), rel=1e-12)

    def test_matches_fsum_oracle(self):
        rng = np.random.default_rng(5)
        p = rng.uniform(0.01, 0.99, 500)
        y = (rng.random(500) < 0.3).astype(float)
        mask = rng.random(500) < 0.8
        w = 10.0
        terms = [w * yy * math.log(min(max(pp, 1e-7), 1 - 1e-7))
                 + (1 - yy) * math.log(1 - min(max(pp, 1e-7), 1 - 1e-7))
                 for pp, yy, mm in zip(p, y, mask) if mm]
        oracle = -math.fsum(terms) / len(terms)
        got = weighted_cross_entropy(p, y, mask=mask, positive_weight=w)
        assert got == pytest.approx(oracle, abs=1e-10)

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError):
            weighted_cross_entropy(np.array([0.5]), np.array([1.0]),
                                   mask=np.array([False]))


class TestDatasetFiles:
    def build_entries(self):
        mesh = make_icosphere(0.04, 2)
        contact = blob_contact_map(mesh, [[0.04, 0, 0]], sigma=0.02)
        mug_mesh = make_cube(0.06, 4)
        mug_contact = blob_contact_map(mug_mesh, [[0.03, 0, 0]], sigma=0.02)
        return [
            DatasetEntry("ball", "use",
                         make_point_sample(mesh, contact, n=200, seed=0)),
            DatasetEntry("mug", "handoff",
                         make_voxel_sample(mug_mesh, mug_contact, resolution=16)),
        ]

    def test_roundtrip_bit_exact(self, tmp_path):
        entries = self.build_entries()
        export_dataset(entries, tmp_path)
        back = import_dataset(tmp_path)
        assert [e.name for e in back] == ["ball", "mug"]
        p0, p1 = entries[0].sample, back[0].sample
        assert np.array_equal(p0.features, p1.features)
        assert np.array_equal(p0.labels, p1.labels)
        v0, v1 = entries[1].sample, back[1].sample
        assert np.array_equal(v0.grid, v1.grid)
        assert np.array_equal(v0.surface_mask, v1.surface_mask)
        assert np.array_equal(v0.features, v1.features)
        assert np.array_equal(v0.labels, v1.labels)

    def test_split_manifest(self, tmp_path):
        entries = self.build_entries()
        export_dataset(entries, tmp_path)
        manifest = (tmp_path / "manifest.tsv").read_text()
        rows = {line.split("\t")[0]: line.split("\t")[4]
                for line in manifest.splitlines() if line.strip()}
        assert rows["ball"] == "train"
        assert rows["mug"] == "test"  # in the default held-out set
        train = import_dataset(tmp_path, split="train")
        assert [e.name for e in train] == ["ball"]

    def test_prediction_file_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        preds = PredictionSet(rng.random((10, 123)))
        path = tmp_path / "x.csp"
        save_predictions(path, preds)
        back = import_predictions(path)
        assert back.k == 10
        assert np.array_equal(back.maps, preds.maps)

    def test_truncated_file_rejected(self, tmp_path):
        rng = np.random.default_rng(7)
        preds = PredictionSet(rng.random((3, 50)))
        path = tmp_path / "t.csp"
        save_predictions(path, preds)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(ValueError):
            import_predictions(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.csd"
        path.write_bytes(b"JUNKxxxx")
        from contactscan.representation import load_sample

        with pytest.raises(ValueError):
            load_sample(path)
