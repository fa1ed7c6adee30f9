import numpy as np
import pytest
import torch

from contactscan.representation import import_dataset, import_predictions
from contactscan_trainer.data import read_dataset, write_predictions
from contactscan_trainer.models import (
    PointNet,
    VoxNet,
    build_model,
    parameter_count,
)

BUDGET = 1.2e6


class TestDataInterop:
    def test_reads_primary_export_bit_exact(self, voxel_dataset):
        ours = read_dataset(voxel_dataset)
        theirs = import_dataset(voxel_dataset)
        assert len(ours) == len(theirs) == 8
        for a, b in zip(ours, theirs):
            assert (a.name, a.intent, a.tag) == (b.name, b.intent, b.tag)
            assert np.array_equal(a.features, b.sample.features)
            assert np.array_equal(a.labels, b.sample.labels)
            assert np.array_equal(a.surface_mask, b.sample.surface_mask)

    def test_point_kind_roundtrip(self, point_dataset):
        ours = read_dataset(point_dataset, kind="point")
        theirs = import_dataset(point_dataset)
        for a, b in zip(ours, theirs):
            assert np.array_equal(a.features, b.sample.features)
            assert a.surface_mask is None

    def test_prediction_file_read_by_primary(self, tmp_path):
        rng = np.random.default_rng(0)
        maps = rng.random((10, 77))
        path = tmp_path / "obj_use.csp"
        write_predictions(path, maps)
        back = import_predictions(path)
        assert back.k == 10
        assert np.array_equal(back.maps, maps)

    def test_split_filter(self, voxel_dataset):
        assert read_dataset(voxel_dataset, split="test") == []
        assert len(read_dataset(voxel_dataset, split="train")) == 8


class TestModels:
    @pytest.mark.parametrize("control", [0, 10])
    def test_parameter_budgets(self, control):
        for model in (VoxNet(control_size=control),
                      PointNet(control_size=control)):
            n = parameter_count(model)
            assert 0.8 * BUDGET <= n <= 1.2 * BUDGET, \
                f"{type(model).__name__}: {n / 1e6:.2f}M parameters"

    def test_voxnet_shapes(self):
        model = build_model("voxnet")
        x = torch.randn(2, 5, 32, 32, 32)
        assert model(x).shape == (2, 32, 32, 32)

    def test_pointnet_shapes(self):
        model = build_model("pointnet")
        x = torch.randn(3, 123, 4)
        assert model(x).shape == (3, 123)

    def test_control_changes_output(self):
        torch.manual_seed(0)
        model = build_model("voxnet", control_size=10)
        model.eval()
        x = torch.randn(1, 5, 32, 32, 32)
        c0 = torch.nn.functional.one_hot(torch.tensor([0]), 10).float()
        c1 = torch.nn.functional.one_hot(torch.tensor([5]), 10).float()
        with torch.no_grad():
            a = model(x, c0)
            b = model(x, c1)
        assert not torch.allclose(a, b)

    def test_tnet_initialized_to_identity(self):
        torch.manual_seed(1)
        model = PointNet()
        model.eval()
        xyz = torch.randn(2, 3, 40)
        with torch.no_grad():
            t = model.tnet(xyz)
        # the transform regressor starts at the identity map
        assert torch.allclose(t, torch.eye(3).expand(2, 3, 3), atol=1e-5)
