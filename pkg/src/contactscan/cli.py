"""Command-line front end: synth, reconstruct, analyze, export, eval,
defaults.

Every run writes a manifest next to its outputs recording the command,
config, seed, inputs/outputs and tool version; only the timestamp line may
differ between identical runs.  Exit codes: 0 ok, 1 internal/pipeline
failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    ActiveArea,
    AnalysisConfig,
    active_area_fraction,
    contact_area,
    contact_points,
    format_active_area_table,
    kmedoids,
    normalize_sigmoid,
    pairwise_distance_matrix,
    set_distance,
    symmetric_set_distance,
)
from .core import (
    CameraIntrinsics,
    MeshFormatError,
    RigidPose,
    SymmetrySpec,
    load_contact_mesh,
    save_mesh,
)
from .diverse import PredictionSet, evaluate_table
from .fuse import (
    IcpParams,
    RefineParams,
    gauge_aligned_metrics,
    reconstruct,
    reconstruction_metrics,
)
from .poseest import PipelineError, PoseEstimationError, SegmentationError
from .representation import (
    DEFAULT_TEST_OBJECTS,
    DatasetEntry,
    export_dataset,
    import_dataset,
    import_predictions,
    make_point_sample,
    make_voxel_sample,
)
from .scanio import PoseRow, load_scan, save_scan, write_pose_rows
from .synth import NoiseParams, RigConfig, default_camera, simulate_scan

USAGE_ERROR = 2
INTERNAL_ERROR = 1


def _write_manifest(path, command: str, seed, inputs: dict, outputs: dict,
                    extra: dict | None = None) -> None:
    lines = [f"command = {command}", f"version = {__version__}",
             f"seed = {seed}"]
    for k in sorted(inputs):
        lines.append(f"input.{k} = {inputs[k]}")
    for k in sorted(outputs):
        lines.append(f"output.{k} = {outputs[k]}")
    for k in sorted(extra or {}):
        lines.append(f"{k} = {(extra or {})[k]}")
    # timestamp last; comparisons exclude this line
    lines.append(f"timestamp = {time.strftime('%Y-%m-%dT%H:%M:%S')}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _load_config(path) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path is not None:
        if not Path(path).exists():
            raise FileNotFoundError(f"config file not found: {path}")
        cfg.read(path)
    return cfg


def _cfg_get(cfg, section, key, fallback, cast=float):
    if cfg.has_option(section, key):
        raw = cfg.get(section, key)
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return fallback


def _vec(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.replace(",", " ").split()])


def _rig_from_config(cfg) -> RigConfig:
    base = RigConfig()
    cam = base.camera
    if cfg.has_section("camera"):
        cam = CameraIntrinsics(
            fx=_cfg_get(cfg, "camera", "fx", cam.fx),
            fy=_cfg_get(cfg, "camera", "fy", cam.fy),
            cx=_cfg_get(cfg, "camera", "cx", cam.cx),
            cy=_cfg_get(cfg, "camera", "cy", cam.cy),
            width=_cfg_get(cfg, "camera", "width", cam.width, int),
            height=_cfg_get(cfg, "camera", "height", cam.height, int),
        )
    pose = base.camera_pose_world
    if cfg.has_option("rig", "camera_eye") or cfg.has_option("rig", "camera_target"):
        from .synth import look_at_pose

        eye = _vec(cfg.get("rig", "camera_eye", fallback="0 -0.40 0.22"))
        target = _vec(cfg.get("rig", "camera_target", fallback="0 0 0.04"))
        pose = look_at_pose(eye, target)
    return RigConfig(
        n_views=_cfg_get(cfg, "rig", "n_views", base.n_views, int),
        camera=cam,
        camera_pose_world=pose,
        turntable_center=(_vec(cfg.get("rig", "turntable_center"))
                          if cfg.has_option("rig", "turntable_center")
                          else base.turntable_center),
        turntable_axis=(_vec(cfg.get("rig", "turntable_axis"))
                        if cfg.has_option("rig", "turntable_axis")
                        else base.turntable_axis),
        turntable_radius=_cfg_get(cfg, "rig", "turntable_radius",
                                  base.turntable_radius),
        arc_degrees=_cfg_get(cfg, "rig", "arc_degrees", base.arc_degrees),
        object_lift=_cfg_get(cfg, "rig", "object_lift", base.object_lift),
        table_radius=_cfg_get(cfg, "rig", "table_radius", base.table_radius),
    )


def _noise_from_config(cfg, seed_override=None) -> NoiseParams:
    seed = seed_override if seed_override is not None \
        else _cfg_get(cfg, "noise", "seed", 0, int)
    return NoiseParams(
        depth_sigma=_cfg_get(cfg, "noise", "depth_sigma", 0.0),
        thermal_sigma=_cfg_get(cfg, "noise", "thermal_sigma", 0.0),
        ambient_level=_cfg_get(cfg, "noise", "ambient_level", 0.0),
        seed=seed,
    )


def cmd_synth(args) -> int:
    cfg = _load_config(args.config)
    mesh_path = args.mesh or cfg.get("synth", "mesh", fallback=None)
    if mesh_path is None:
        raise FileNotFoundError("no mesh given (flag --mesh or [synth] mesh)")
    if not Path(mesh_path).exists():
        raise FileNotFoundError(f"mesh file not found: {mesh_path}")
    mesh, contact = load_contact_mesh(mesh_path)
    if contact is None:
        raise MeshFormatError(f"{mesh_path}: no per-vertex contact property")
    rig = _rig_from_config(cfg)
    if args.lift_to_table:
        drop = float((mesh.vertices @ rig.turntable_axis).min())
        rig = dataclasses.replace(rig, object_lift=-drop + 5e-4)
    noise = _noise_from_config(cfg, args.seed)
    scan = simulate_scan(mesh, contact, rig, noise, jobs=args.jobs)
    out = Path(args.out)
    save_scan(scan, out)
    _write_manifest(out / "manifest.txt", "synth", noise.seed,
                    {"mesh": mesh_path, "config": args.config or "-"},
                    {"scan": str(out)}, {"jobs": args.jobs})
    return 0


def _parse_sym(args) -> SymmetrySpec | None:
    if not args.sym_axis:
        return None
    return SymmetrySpec(kind="axial", axis=_vec(args.sym_axis) /
                        np.linalg.norm(_vec(args.sym_axis)),
                        n_test_angles=args.n_sym_angles)


def cmd_reconstruct(args) -> int:
    scan_dir = Path(args.scan)
    if not scan_dir.exists():
        raise FileNotFoundError(f"scan directory not found: {scan_dir}")
    if not Path(args.mesh).exists():
        raise FileNotFoundError(f"mesh file not found: {args.mesh}")
    scan = load_scan(scan_dir)
    mesh, gt_contact = load_contact_mesh(args.mesh)
    sym = _parse_sym(args)
    icp = IcpParams(fitness_threshold=args.fitness_threshold,
                    correspondence_max_dist=args.correspondence_max_dist)
    refine = RefineParams(enabled=not args.no_refine)
    result = reconstruct(mesh, scan, sym=sym, icp_params=icp,
                         refine_params=refine, depth_eps=args.depth_eps,
                         segmentation=args.seg, height_eps=args.height_eps)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_mesh(out / "contact_mesh.ply", mesh, result.contact)
    np.savetxt(out / "coverage.txt", result.coverage, fmt="%d",
               header="per-vertex observation count")
    rows = [PoseRow(i, e.pose, e.fitness, e.source)
            for i, e in enumerate(result.estimates)]
    write_pose_rows(out / "poses.txt", rows)

    metrics_lines = []
    gt_poses = [v.gt_pose for v in scan.views]
    if gt_contact is not None:
        direct = reconstruction_metrics(result.contact, gt_contact,
                                        result.coverage, args.threshold)
        for k in sorted(direct):
            metrics_lines.append(f"direct.{k} = {direct[k]:.6f}")
        if all(p is not None for p in gt_poses):
            aligned = gauge_aligned_metrics(
                mesh, result.contact, result.coverage, gt_contact,
                result.refined_poses[0], gt_poses[0], args.threshold)
            for k in sorted(aligned):
                metrics_lines.append(f"aligned.{k} = {aligned[k]:.6f}")
    if metrics_lines:
        (out / "metrics.txt").write_text("\n".join(metrics_lines) + "\n",
                                         encoding="ascii")
    _write_manifest(out / "manifest.txt", "reconstruct", 0,
                    {"scan": str(scan_dir), "mesh": args.mesh},
                    {"dir": str(out)},
                    {"refine": str(not args.no_refine),
                     "segmentation": args.seg})
    return 0


def cmd_analyze(args) -> int:
    cfg = AnalysisConfig(contact_threshold=args.threshold, k=args.k,
                         n_sym_angles=args.n_sym_angles)
    meshes = []
    maps = []
    for path in args.maps:
        if not Path(path).exists():
            raise FileNotFoundError(f"contact mesh not found: {path}")
        mesh, contact = load_contact_mesh(path)
        if contact is None:
            raise MeshFormatError(f"{path}: no contact property")
        meshes.append(mesh)
        maps.append(contact)
    if len({m.n_vertices for m in meshes}) != 1:
        raise MeshFormatError("contact meshes have differing vertex counts")

    normalized = [normalize_sigmoid(m, cfg) for m in maps]
    sets = [contact_points(m, mesh, cfg)
            for m, mesh in zip(normalized, meshes)]
    empty = [i for i, s in enumerate(sets) if len(s) == 0]
    if empty:
        raise ValueError(f"maps {empty} have no contact above threshold")

    sym = _parse_sym(args)
    if sym is not None:
        def dist(a, b):
            return symmetric_set_distance(a, b, sym, cfg)[0]
    else:
        dist = set_distance
    d = pairwise_distance_matrix(sets, dist)
    result = kmedoids(d, cfg.k, seed=args.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["# map_index cluster_slot medoid_index contact_area_m2"]
    for i, path in enumerate(args.maps):
        slot = int(result.assignments[i])
        area = contact_area(meshes[i], normalized[i], cfg)
        lines.append(f"{i} {slot} {int(result.medoids[slot])} {area:.8f}")
    lines.append(f"# total_cost = {result.cost!r}")
    (out / "clusters.txt").write_text("\n".join(lines) + "\n", encoding="ascii")

    if args.areas_file:
        rows = []
        for line in Path(args.areas_file).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, verts = line.split(":")
            area = ActiveArea(name.strip(),
                              np.array([int(v) for v in verts.split()]))
            frac = active_area_fraction(normalized, area, cfg)
            rows.append((area.name, args.intent, frac))
        (out / "active_areas.txt").write_text(
            format_active_area_table(rows) + "\n", encoding="ascii")
    _write_manifest(out / "manifest.txt", "analyze", args.seed,
                    {"maps": ",".join(args.maps)}, {"dir": str(out)},
                    {"k": cfg.k, "threshold": cfg.contact_threshold})
    return 0


def cmd_export(args) -> int:
    entries = []
    for spec_line in Path(args.objects).read_text().splitlines():
        spec_line = spec_line.strip()
        if not spec_line or spec_line.startswith("#"):
            continue
        parts = spec_line.split()
        if len(parts) == 3:
            name, intent, mesh_path = parts
            tag = ""
        elif len(parts) == 4:
            name, intent, tag, mesh_path = parts
        else:
            raise ValueError(f"objects line needs 3 or 4 fields: {spec_line!r}")
        if not Path(mesh_path).exists():
            raise FileNotFoundError(f"mesh not found: {mesh_path}")
        mesh, contact = load_contact_mesh(mesh_path)
        if contact is None:
            raise MeshFormatError(f"{mesh_path}: no contact property")
        norm = normalize_sigmoid(contact, AnalysisConfig())
        if args.kind in ("point", "both"):
            sample = make_point_sample(mesh, norm, n=args.n_points,
                                       seed=args.seed,
                                       threshold=args.threshold)
            entries.append(DatasetEntry(name, intent, sample, tag=tag))
        if args.kind in ("voxel", "both"):
            sample = make_voxel_sample(mesh, norm, resolution=args.resolution,
                                       threshold=args.threshold)
            entries.append(DatasetEntry(name, intent, sample, tag=tag))
    test_objects = frozenset(args.test_objects.split(",")) \
        if args.test_objects else DEFAULT_TEST_OBJECTS
    export_dataset(entries, args.out, test_objects=test_objects)
    _write_manifest(Path(args.out) / "manifest.txt", "export", args.seed,
                    {"objects": args.objects}, {"dataset": args.out},
                    {"kind": args.kind, "test_objects": ",".join(sorted(test_objects))})
    return 0


def cmd_eval(args) -> int:
    entries = import_dataset(args.dataset, split=args.split or None)
    if not entries:
        raise ValueError("no dataset entries selected")
    gt_sets: dict[str, list[np.ndarray]] = {}
    pred_stems: dict[str, str] = {}
    for e in entries:
        gt_sets.setdefault(e.name, []).append(e.sample.labels)
        pred_stems[e.name] = e.prediction_stem
    predictions: dict[str, dict[str, PredictionSet]] = {}
    for spec_item in args.predictions:
        if "=" not in spec_item:
            raise ValueError(f"prediction spec must be model=dir: {spec_item!r}")
        model, pred_dir = spec_item.split("=", 1)
        per_object: dict[str, PredictionSet] = {}
        for name, stem in pred_stems.items():
            path = Path(pred_dir) / f"{stem}.csp"
            if not path.exists():
                raise FileNotFoundError(f"{model}: missing predictions {path}")
            per_object[name] = import_predictions(path)
        predictions[model] = per_object
    table = evaluate_table(gt_sets, predictions, threshold=args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "errors.txt").write_text(table.format() + "\n", encoding="ascii")
    _write_manifest(out / "manifest.txt", "eval", 0,
                    {"dataset": args.dataset,
                     "predictions": ",".join(args.predictions)},
                    {"dir": str(out)}, {})
    print(table.format())
    return 0


def cmd_defaults(_args) -> int:
    rig = RigConfig()
    cam = rig.camera
    icp = IcpParams()
    refine = RefineParams()
    analysis = AnalysisConfig()
    noise = NoiseParams()
    print("[camera]")
    for k in ("fx", "fy", "cx", "cy", "width", "height"):
        print(f"{k} = {getattr(cam, k)}")
    print("\n[rig]")
    print(f"n_views = {rig.n_views}")
    print(f"turntable_center = {' '.join(map(str, rig.turntable_center))}")
    print(f"turntable_axis = {' '.join(map(str, rig.turntable_axis))}")
    print(f"turntable_radius = {rig.turntable_radius}")
    print(f"arc_degrees = {rig.arc_degrees}")
    print(f"object_lift = {rig.object_lift}")
    print(f"table_radius = {rig.table_radius}")
    print("\n[noise]")
    for k in ("depth_sigma", "thermal_sigma", "ambient_level", "seed"):
        print(f"{k} = {getattr(noise, k)}")
    print("\n[icp]")
    for k in ("max_iterations", "correspondence_max_dist", "convergence_eps",
              "fitness_threshold"):
        print(f"{k} = {getattr(icp, k)}")
    print("\n[refine]")
    for k in ("enabled", "max_outer_iters", "rot_step", "trans_step",
              "residual_tol", "max_inner_steps", "n_scales"):
        print(f"{k} = {getattr(refine, k)}")
    print("\n[analysis]")
    for k in ("contact_threshold", "sigmoid_low", "sigmoid_high", "k",
              "n_sym_angles"):
        print(f"{k} = {getattr(analysis, k)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contactscan",
                                description="turntable thermal-scan toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", help="simulate a turntable scan")
    ps.add_argument("--mesh", help="contact mesh (ply with contact property)")
    ps.add_argument("--config", help="INI config file")
    ps.add_argument("--out", required=True, help="output scan directory")
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--jobs", type=int, default=1)
    ps.add_argument("--lift-to-table", action="store_true",
                    help="rest the mesh on the turntable plane")
    ps.set_defaults(func=cmd_synth)

    pr = sub.add_parser("reconstruct", help="scan -> contact mesh")
    pr.add_argument("--scan", required=True)
    pr.add_argument("--mesh", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--no-refine", action="store_true")
    pr.add_argument("--seg", choices=("geometric", "oracle"),
                    default="geometric")
    pr.add_argument("--sym-axis", help="axial symmetry axis, e.g. '0,0,1'")
    pr.add_argument("--n-sym-angles", type=int, default=36)
    pr.add_argument("--height-eps", type=float, default=0.004)
    pr.add_argument("--depth-eps", type=float, default=0.005)
    pr.add_argument("--threshold", type=float, default=0.4)
    pr.add_argument("--fitness-threshold", type=float, default=0.7)
    pr.add_argument("--correspondence-max-dist", type=float, default=0.01)
    pr.set_defaults(func=cmd_reconstruct)

    pa = sub.add_parser("analyze", help="cluster and measure contact maps")
    pa.add_argument("maps", nargs="+", help="contact mesh files")
    pa.add_argument("--out", required=True)
    pa.add_argument("--k", type=int, default=3)
    pa.add_argument("--threshold", type=float, default=0.4)
    pa.add_argument("--seed", type=int, default=0)
    pa.add_argument("--sym-axis")
    pa.add_argument("--n-sym-angles", type=int, default=36)
    pa.add_argument("--areas-file", help="lines 'name: v1 v2 ...'")
    pa.add_argument("--intent", default="use")
    pa.set_defaults(func=cmd_analyze)

    pe = sub.add_parser("export", help="build a learning dataset")
    pe.add_argument("--objects", required=True,
                    help="text file: name intent mesh_path per line")
    pe.add_argument("--out", required=True)
    pe.add_argument("--kind", choices=("point", "voxel", "both"),
                    default="both")
    pe.add_argument("--n-points", type=int, default=3000)
    pe.add_argument("--resolution", type=int, default=64)
    pe.add_argument("--threshold", type=float, default=0.4)
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--test-objects",
                    help="comma list; default mug,pan,wine_glass")
    pe.set_defaults(func=cmd_export)

    pv = sub.add_parser("eval", help="evaluate diverse predictions")
    pv.add_argument("--dataset", required=True)
    pv.add_argument("--split", default="test", choices=("train", "test", ""))
    pv.add_argument("--predictions", nargs="+", required=True,
                    help="model=prediction_dir entries")
    pv.add_argument("--threshold", type=float, default=0.5)
    pv.add_argument("--out", required=True)
    pv.set_defaults(func=cmd_eval)

    pd = sub.add_parser("defaults", help="print all defaults as INI")
    pd.set_defaults(func=cmd_defaults)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SegmentationError as exc:
        print(f"segmentation failure: {exc}", file=sys.stderr)
        return INTERNAL_ERROR
    except PoseEstimationError as exc:
        print(f"icp failure: {exc}", file=sys.stderr)
        return INTERNAL_ERROR
    except PipelineError as exc:
        print(f"fusion failure: {exc}", file=sys.stderr)
        return INTERNAL_ERROR
    except (FileNotFoundError, MeshFormatError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
