"""On-disk formats: portable float maps, scan directories, pose tables.

Scan directory schema (one directory per scan):

    scan.meta             key = value metadata, INI sections [scan],
                          [camera], [rig], [noise]
    view_000.depth.pfm    z-depth image, meters, 0 = no hit
    view_000.thermal.pfm  thermal intensity in [0, 1]
    view_000.mask.pfm     optional oracle object mask (0/1)
    gt_poses.txt          optional ground-truth pose table

Pose table: text rows "view r00..r22 tx ty tz fitness tag" (rotation
row-major, fitness nan when undefined).  PFM images are little-endian
float32 with rows stored bottom-to-top per the format convention.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CameraIntrinsics, RigidPose
from .synth import NoiseParams, RigConfig, ScanSequence, View, look_at_pose

__all__ = [
    "write_pfm",
    "read_pfm",
    "save_scan",
    "load_scan",
    "write_pose_rows",
    "read_pose_rows",
    "PoseRow",
]


def write_pfm(path, image: np.ndarray) -> None:
    """Write a grayscale portable float map (Pf, little-endian)."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 2:
        raise ValueError("pfm writer expects a 2-D image")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{img.shape[1]} {img.shape[0]}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.ascontiguousarray(img[::-1], dtype="<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"Pf":
            raise ValueError(f"{path}: not a grayscale pfm file")
        dims = fh.readline().split()
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(4 * width * height), dtype=dtype)
        if data.size != width * height:
            raise ValueError(f"{path}: truncated pfm data")
        return data.reshape(height, width)[::-1].astype(np.float64)


@dataclass(frozen=True)
class PoseRow:
    view: int
    pose: RigidPose
    fitness: float  # nan when undefined for the source
    source: str


def write_pose_rows(path, rows: list[PoseRow]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# view r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz fitness source\n")
        for row in rows:
            vals = list(row.pose.rotation.ravel()) + list(row.pose.translation)
            nums = " ".join(repr(float(v)) for v in vals)
            fh.write(f"{row.view} {nums} {row.fitness!r} {row.source}\n")


def read_pose_rows(path) -> list[PoseRow]:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 15:
                raise ValueError(f"{path}: malformed pose row {line!r}")
            vals = [float(x) for x in parts[1:14]]
            rows.append(PoseRow(
                view=int(parts[0]),
                pose=RigidPose(np.array(vals[:9]).reshape(3, 3), np.array(vals[9:12])),
                fitness=vals[12],
                source=parts[14],
            ))
    return rows


def _fmt(v) -> str:
    if isinstance(v, (np.ndarray, list, tuple)):
        return " ".join(repr(float(x)) for x in np.asarray(v).ravel())
    if isinstance(v, float):
        return repr(v)
    return str(v)


def save_scan(scan: ScanSequence, directory) -> None:
    """Serialize a ScanSequence (images, metadata, oracle poses/masks)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rig = scan.rig
    cfg = configparser.ConfigParser()
    cfg["scan"] = {
        "n_views": str(scan.n_views),
        "angles": _fmt(np.array([v.angle for v in scan.views])),
        "has_masks": str(all(v.object_mask is not None for v in scan.views)),
        "has_gt_poses": str(all(v.gt_pose is not None for v in scan.views)),
    }
    cam = rig.camera
    cfg["camera"] = {
        "fx": _fmt(cam.fx), "fy": _fmt(cam.fy),
        "cx": _fmt(cam.cx), "cy": _fmt(cam.cy),
        "width": str(cam.width), "height": str(cam.height),
    }
    cfg["rig"] = {
        "n_views": str(rig.n_views),
        "camera_rotation_world": _fmt(rig.camera_pose_world.rotation),
        "camera_translation_world": _fmt(rig.camera_pose_world.translation),
        "turntable_center": _fmt(rig.turntable_center),
        "turntable_axis": _fmt(rig.turntable_axis),
        "turntable_radius": _fmt(rig.turntable_radius),
        "arc_degrees": _fmt(rig.arc_degrees),
        "object_lift": _fmt(rig.object_lift),
        "table_radius": _fmt(rig.table_radius),
    }
    with open(directory / "scan.meta", "w", encoding="ascii") as fh:
        cfg.write(fh)

    for i, view in enumerate(scan.views):
        write_pfm(directory / f"view_{i:03d}.depth.pfm", view.depth)
        write_pfm(directory / f"view_{i:03d}.thermal.pfm", view.thermal)
        if view.object_mask is not None:
            write_pfm(directory / f"view_{i:03d}.mask.pfm",
                      view.object_mask.astype(np.float32))
    if all(v.gt_pose is not None for v in scan.views):
        rows = [PoseRow(i, v.gt_pose, float("nan"), "gt")
                for i, v in enumerate(scan.views)]
        write_pose_rows(directory / "gt_poses.txt", rows)


def _vec(s: str) -> np.ndarray:
    return np.array([float(x) for x in s.split()])


def load_scan(directory) -> ScanSequence:
    directory = Path(directory)
    meta = directory / "scan.meta"
    if not meta.exists():
        raise FileNotFoundError(f"{meta}: scan metadata not found")
    cfg = configparser.ConfigParser()
    cfg.read(meta)
    cam = CameraIntrinsics(
        fx=float(cfg["camera"]["fx"]), fy=float(cfg["camera"]["fy"]),
        cx=float(cfg["camera"]["cx"]), cy=float(cfg["camera"]["cy"]),
        width=int(cfg["camera"]["width"]), height=int(cfg["camera"]["height"]),
    )
    r = cfg["rig"]
    rig = RigConfig(
        n_views=int(r["n_views"]),
        camera=cam,
        camera_pose_world=RigidPose(_vec(r["camera_rotation_world"]).reshape(3, 3),
                                    _vec(r["camera_translation_world"])),
        turntable_center=_vec(r["turntable_center"]),
        turntable_axis=_vec(r["turntable_axis"]),
        turntable_radius=float(r["turntable_radius"]),
        arc_degrees=float(r["arc_degrees"]),
        object_lift=float(r["object_lift"]),
        table_radius=float(r["table_radius"]),
    )
    n = int(cfg["scan"]["n_views"])
    angles = _vec(cfg["scan"]["angles"])
    gt = {}
    gt_file = directory / "gt_poses.txt"
    if gt_file.exists():
        gt = {row.view: row.pose for row in read_pose_rows(gt_file)}
    views = []
    for i in range(n):
        depth = read_pfm(directory / f"view_{i:03d}.depth.pfm")
        thermal = read_pfm(directory / f"view_{i:03d}.thermal.pfm")
        mask_path = directory / f"view_{i:03d}.mask.pfm"
        mask = read_pfm(mask_path) > 0.5 if mask_path.exists() else None
        views.append(View(depth=depth, thermal=thermal, angle=float(angles[i]),
                          gt_pose=gt.get(i), object_mask=mask))
    return ScanSequence(views=views, rig=rig)
