# scratch probe: 5-shape round trip at acceptance density (not shipped)
import time

import numpy as np

from contactscan.core import SymmetrySpec, transform_points
from contactscan.fuse import RefineParams, gauge_transform, reconstruct
from contactscan.shapes import (blob_contact_map, blob_values, make_cube,
                                make_cylinder, make_icosphere, make_mug,
                                make_torus)
from contactscan.synth import NoiseParams, RigConfig, simulate_scan

AX = SymmetrySpec(kind="axial", axis=[0.0, 0.0, 1.0])


def shape_suite():
    return {
        "cube": (make_cube(0.08, 64),
                 [[0.04, 0.0, 0.01], [0.0, -0.04, 0.015], [-0.02, 0.04, -0.01]],
                 None, 0.012),
        "sphere": (make_icosphere(0.05, 5),
                   [[0.05, 0, 0], [0, 0.03, 0.04], [-0.04, 0.02, -0.02]],
                   AX, 0.012),
        "cylinder": (make_cylinder(0.03, 0.1, n_theta=160, n_z=96),
                     [[0.03, 0.0, 0.03], [0.0, -0.03, -0.02], [-0.021, 0.021, 0.0]],
                     AX, 0.012),
        "torus": (make_torus(0.04, 0.015, n_major=160, n_minor=96),
                  [[0.055, 0.0, 0.0], [0.0, 0.05, 0.012], [-0.039, -0.039, 0.008]],
                  AX, 0.010),
        "mug": (make_mug(0.035, 0.09, n_theta=120, n_z=72),
                [[-0.0247, -0.0247, 0.02], [0.0, 0.035, -0.01], [0.065, 0.0, 0.0]],
                None, 0.012),
    }


def run(noise, height_eps=0.004, depth_eps=0.005, refine=False):
    for name, (mesh, centers, sym, sigma) in shape_suite().items():
        contact = blob_contact_map(mesh, centers, sigma=sigma)
        lift = -mesh.vertices[:, 2].min() + 0.0005
        rig = RigConfig(object_lift=lift)
        t0 = time.time()
        scan = simulate_scan(mesh, contact, rig, noise)
        t1 = time.time()
        recon = reconstruct(mesh, scan, sym=sym,
                            refine_params=RefineParams(enabled=refine),
                            height_eps=height_eps, depth_eps=depth_eps)
        t2 = time.time()
        t_rel = gauge_transform(recon.refined_poses[0], scan.views[0].gt_pose)
        gt_al = blob_values(transform_points(mesh.vertices, t_rel), centers, sigma)
        cov = recon.coverage > 0
        rmse = float(np.sqrt(np.mean((recon.contact.values[cov] - gt_al[cov]) ** 2)))
        a = recon.contact.values > 0.4
        b = gt_al > 0.4
        iou = (a & b).sum() / max((a | b).sum(), 1)
        srcs = [e.source for e in recon.estimates]
        print(f"{name:9s} v={mesh.n_vertices:6d} scan={t1-t0:5.1f}s "
              f"recon={t2-t1:5.1f}s RMSE={rmse:.4f} IoU={iou:.4f} "
              f"cov={cov.mean():.3f} interp={srcs.count('interpolated')}")


print("== noiseless, refine on ==")
run(NoiseParams(), refine=True)
print("== noisy (depth 2mm, thermal 0.02), refine on ==")
run(NoiseParams(depth_sigma=0.002, thermal_sigma=0.02, seed=7),
    height_eps=0.007, depth_eps=0.009, refine=True)
