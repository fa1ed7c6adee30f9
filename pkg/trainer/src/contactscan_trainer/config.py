"""Training configuration with the published defaults."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class TrainConfig:
    model: str = "voxnet"  # "voxnet" | "pointnet"
    strategy: str = "smcl"  # "smcl" | "diversenet"
    k: int = 10
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    positive_weight: float = 10.0
    top_weight: float = 0.95
    drop_prob: float = 0.1
    input_dropout: float = 0.2  # applied to voxnet + diversenet input only
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.model not in ("voxnet", "pointnet"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.strategy not in ("smcl", "diversenet"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def batch_size(self) -> int:
        # published convention: 5 for k=10 models, 25 for k=1
        return 5 if self.k > 1 else 25

    @property
    def uses_input_dropout(self) -> bool:
        return self.model == "voxnet" and self.strategy == "diversenet"
