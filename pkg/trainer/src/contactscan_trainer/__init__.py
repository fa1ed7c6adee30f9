"""Toy-scale neural contact-map predictors.

Consumes the scanner toolkit's dataset files (.csd) and emits prediction
files (.csp) in the same on-disk formats; the training strategies are an
ensemble with soft gradient routing (sMCL) and a single network driven by
a one-hot control variable (DiverseNet).
"""

from .config import TrainConfig
from .data import DatasetItem, read_dataset, write_predictions

__version__ = "0.1.0"

__all__ = ["TrainConfig", "DatasetItem", "read_dataset", "write_predictions",
           "__version__"]
