"""Predictor networks: a 3D conv encoder-decoder on occupancy grids and a
point network with a single input transform, both around 1.2M parameters.

The DiverseNet variants take a one-hot control vector that is concatenated
to internal feature maps (after the first and fifth conv for the voxel
net; after the input transform and the second-last MLP for the point net).
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def _cp(cin: int, cout: int) -> nn.Sequential:
    """conv 3^3 + batch norm + relu + 2x max pooling."""
    return nn.Sequential(
        nn.Conv3d(cin, cout, 3, padding=1),
        nn.BatchNorm3d(cout),
        nn.ReLU(inplace=True),
        nn.MaxPool3d(2),
    )


def _cu(cin: int, cout: int) -> nn.Sequential:
    """conv 3^3 + batch norm + relu + 2x nearest-neighbor upsampling."""
    return nn.Sequential(
        nn.Conv3d(cin, cout, 3, padding=1),
        nn.BatchNorm3d(cout),
        nn.ReLU(inplace=True),
        nn.Upsample(scale_factor=2, mode="nearest"),
    )


class VoxNet(nn.Module):
    """Encoder-decoder over a 5-channel occupancy grid; per-voxel logits.

    The input grid side must be divisible by 16 (four pooling stages).
    control_size > 0 enables the control variable, concatenated after the
    first and the fifth conv blocks.
    """

    def __init__(self, in_channels: int = 5, control_size: int = 0,
                 widths: tuple[int, int, int, int] = (22, 44, 88, 176)):
        super().__init__()
        w0, w1, w2, w3 = widths
        self.control_size = control_size
        self.cp1 = _cp(in_channels, w0)
        self.cp2 = _cp(w0 + control_size, w1)
        self.cp3 = _cp(w1, w2)
        self.cp4 = _cp(w2, w3)
        self.cu1 = _cu(w3, w2)
        self.cu2 = _cu(w2 + control_size, w1)
        self.cu3 = _cu(w1, w0)
        self.cu4 = _cu(w0, w0 // 2)
        self.head = nn.Conv3d(w0 // 2, 1, 1)

    @staticmethod
    def _concat_control(x: torch.Tensor, control: torch.Tensor) -> torch.Tensor:
        b = x.shape[0]
        tiled = control.view(b, -1, 1, 1, 1).expand(
            b, control.shape[1], *x.shape[2:])
        return torch.cat([x, tiled], dim=1)

    def forward(self, grid: torch.Tensor,
                control: torch.Tensor | None = None) -> torch.Tensor:
        x = self.cp1(grid)
        if self.control_size:
            x = self._concat_control(x, control)
        x = self.cp4(self.cp3(self.cp2(x)))
        x = self.cu1(x)
        if self.control_size:
            x = self._concat_control(x, control)
        x = self.cu4(self.cu3(self.cu2(x)))
        return self.head(x).squeeze(1)


class TNet(nn.Module):
    """Input transform predicting a 3x3 matrix (initialized to identity)."""

    def __init__(self):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Conv1d(3, 64, 1), nn.BatchNorm1d(64), nn.ReLU(inplace=True),
            nn.Conv1d(64, 128, 1), nn.BatchNorm1d(128), nn.ReLU(inplace=True),
            nn.Conv1d(128, 256, 1), nn.BatchNorm1d(256), nn.ReLU(inplace=True),
        )
        self.fc = nn.Sequential(
            nn.Linear(256, 128), nn.ReLU(inplace=True),
            nn.Linear(128, 64), nn.ReLU(inplace=True),
            nn.Linear(64, 9),
        )
        nn.init.zeros_(self.fc[-1].weight)
        with torch.no_grad():
            self.fc[-1].bias.copy_(torch.eye(3).reshape(9))

    def forward(self, xyz: torch.Tensor) -> torch.Tensor:
        # xyz: (b, 3, n) -> (b, 3, 3)
        h = self.conv(xyz).max(dim=2).values
        return self.fc(h).view(-1, 3, 3)


def _mlp1d(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(nn.Conv1d(cin, cout, 1), nn.BatchNorm1d(cout),
                         nn.ReLU(inplace=True))


class PointNet(nn.Module):
    """Per-point classifier with one input transform; per-point logits.

    Features are (x, y, z, scale) per point.  The control vector, when
    enabled, is concatenated to the transformed input and to the output of
    the second-last MLP of the classification head.
    """

    def __init__(self, in_features: int = 4, control_size: int = 0):
        super().__init__()
        self.control_size = control_size
        self.tnet = TNet()
        self.local1 = _mlp1d(in_features + control_size, 64)
        self.local2 = _mlp1d(64, 64)
        self.feat1 = _mlp1d(64, 64)
        self.feat2 = _mlp1d(64, 128)
        self.feat3 = _mlp1d(128, 1024)
        self.head1 = _mlp1d(1024 + 64, 544)
        self.head2 = _mlp1d(544, 272)
        self.head3 = _mlp1d(272 + control_size, 136)
        self.head4 = nn.Conv1d(136, 1, 1)

    def forward(self, feats: torch.Tensor,
                control: torch.Tensor | None = None) -> torch.Tensor:
        # feats: (b, n, 4) -> logits (b, n)
        x = feats.transpose(1, 2)  # (b, 4, n)
        xyz = x[:, :3]
        t = self.tnet(xyz)
        x = torch.cat([torch.bmm(t, xyz), x[:, 3:]], dim=1)
        if self.control_size:
            b, _, n = x.shape
            tiled = control.view(b, -1, 1).expand(b, control.shape[1], n)
            x = torch.cat([x, tiled], dim=1)
        local = self.local2(self.local1(x))
        feat = self.feat3(self.feat2(self.feat1(local)))
        global_feat = feat.max(dim=2, keepdim=True).values
        fused = torch.cat([local, global_feat.expand(-1, -1, local.shape[2])],
                          dim=1)
        h = self.head2(self.head1(fused))
        if self.control_size:
            b, _, n = h.shape
            tiled = control.view(b, -1, 1).expand(b, control.shape[1], n)
            h = torch.cat([h, tiled], dim=1)
        return self.head4(self.head3(h)).squeeze(1)


def build_model(model: str, control_size: int = 0) -> nn.Module:
    if model == "voxnet":
        return VoxNet(control_size=control_size)
    if model == "pointnet":
        return PointNet(control_size=control_size)
    raise ValueError(f"unknown model {model!r}")


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
