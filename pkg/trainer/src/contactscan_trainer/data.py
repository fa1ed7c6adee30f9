"""Readers/writers for the scanner toolkit's on-disk dataset formats.

Sample file (.csd), little-endian:
    magic "CSDS", u32 version (1), u8 kind (0 point, 1 voxel)
    point: u32 n; f8 center[3]; f8 scale; f8 features[n,4]; u8 labels[n]
    voxel: u32 resolution; u32 n_surface; f8 center[3]; f8 scale;
           u8 grid[r^3]; u8 surface[r^3]; f8 features[r^3*5];
           u8 labels[n_surface]

Prediction file (.csp): magic "CSPR", u32 version, u32 k, u32 n_elements,
f8 probs[k, n_elements].

manifest.tsv columns: name, intent, tag, kind, split, filename.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DATASET_MAGIC = b"CSDS"
PREDICTION_MAGIC = b"CSPR"
_VERSION = 1


@dataclass
class DatasetItem:
    name: str
    intent: str
    tag: str
    kind: str  # "point" | "voxel"
    features: np.ndarray  # point: (n, 4); voxel: (r, r, r, 5)
    labels: np.ndarray  # uint8 on the element set
    surface_mask: np.ndarray | None  # voxel kind only, (r, r, r) bool

    @property
    def prediction_stem(self) -> str:
        return f"{self.name}_{self.intent}"

    @property
    def n_elements(self) -> int:
        return int(self.labels.size)


def _read_array(fh, count, dtype):
    dt = np.dtype(dtype)
    raw = fh.read(dt.itemsize * count)
    if len(raw) != dt.itemsize * count:
        raise ValueError("truncated dataset file")
    return np.frombuffer(raw, dtype=dt).copy()


def read_sample(path) -> tuple[str, np.ndarray, np.ndarray, np.ndarray | None]:
    with open(path, "rb") as fh:
        if fh.read(4) != DATASET_MAGIC:
            raise ValueError(f"{path}: bad dataset magic")
        version, kind = struct.unpack("<IB", fh.read(5))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        if kind == 0:
            (n,) = struct.unpack("<I", fh.read(4))
            fh.read(3 * 8 + 8)  # center + scale (features carry the scale)
            features = _read_array(fh, n * 4, "<f8").reshape(n, 4)
            labels = _read_array(fh, n, "u1")
            return "point", features, labels, None
        if kind == 1:
            res, n_surf = struct.unpack("<II", fh.read(8))
            fh.read(3 * 8 + 8)
            shape = (res, res, res)
            fh.read(res ** 3)  # occupancy grid (features channel 0 repeats it)
            mask = _read_array(fh, res ** 3, "u1").reshape(shape).astype(bool)
            features = _read_array(fh, res ** 3 * 5, "<f8").reshape(*shape, 5)
            labels = _read_array(fh, n_surf, "u1")
            return "voxel", features, labels, mask
        raise ValueError(f"{path}: unknown sample kind {kind}")


def read_dataset(directory, split: str | None = None,
                 kind: str | None = None) -> list[DatasetItem]:
    directory = Path(directory)
    manifest = directory / "manifest.tsv"
    if not manifest.exists():
        raise FileNotFoundError(f"{manifest} not found")
    items = []
    for line in manifest.read_text(encoding="ascii").splitlines():
        if not line.strip():
            continue
        name, intent, tag, entry_kind, entry_split, filename = line.split("\t")
        if split is not None and entry_split != split:
            continue
        if kind is not None and entry_kind != kind:
            continue
        got, features, labels, mask = read_sample(directory / filename)
        if got != entry_kind:
            raise ValueError(f"{filename}: kind mismatch ({got} vs {entry_kind})")
        items.append(DatasetItem(name=name, intent=intent,
                                 tag="" if tag == "-" else tag,
                                 kind=got, features=features, labels=labels,
                                 surface_mask=mask))
    return items


def write_predictions(path, maps: np.ndarray) -> None:
    """k probability maps, shape (k, n_elements), written as a .csp file."""
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 2:
        raise ValueError("prediction maps must be (k, n)")
    if maps.min() < 0.0 or maps.max() > 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    with open(path, "wb") as fh:
        fh.write(PREDICTION_MAGIC)
        fh.write(struct.pack("<III", _VERSION, maps.shape[0], maps.shape[1]))
        fh.write(np.ascontiguousarray(maps, dtype="<f8").tobytes())
