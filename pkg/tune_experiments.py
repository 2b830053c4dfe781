"""Scratch: dry-run the fit-based acceptance criteria and print metrics."""
import json
import sys
import time
import tempfile
import pathlib

import numpy as np

from mpiforge.synthetic import SynthSpec, synth_scene
from mpiforge.manifest import build_views, load_manifest
from mpiforge.optimize import FitConfig, fit_views
from mpiforge.losses import LossConfig

which = set(sys.argv[1:]) or {"recon", "ablate", "expo", "pose"}
base = pathlib.Path(tempfile.mkdtemp())

if "recon" in which:
    t0 = time.perf_counter()
    spec = SynthSpec(planes=3, cameras=12, image_size=(128, 128), padding=12)
    res = synth_scene(1001, spec, base / "recon")
    views, host, near, far = build_views(load_manifest(base / "recon/manifest.json"), 0)
    cfg = FitConfig(planes=3, sharing=1, padding=12, iters=2000, lr=0.05,
                    views_per_step=6, val_every=250)
    r = fit_views(views, host, near, far, cfg)
    dt = time.perf_counter() - t0
    print(f"RECON: val_psnr={r.val_psnr:.2f} dB  time={dt:.0f}s "
          f"(budget 600s)  final_loss={r.history[-1]['total']:.6f}", flush=True)

if "ablate" in which:
    spec = SynthSpec(planes=3, cameras=12, image_size=(128, 128), padding=12)
    res = synth_scene(1002, spec, base / "ablate")
    views, host, near, far = build_views(load_manifest(base / "ablate/manifest.json"), 0)
    gt_depths = np.array(res.truth["depths"])
    out = {}
    for adaptive in (True, False):
        t0 = time.perf_counter()
        cfg = FitConfig(planes=3, sharing=1, padding=12, iters=1500, lr=0.05,
                        views_per_step=6, val_every=250, adaptive_depth=adaptive,
                        init_depth_scale=1.2)
        r = fit_views(views, host, near, far, cfg)
        depths = r.mpi.current_depths()
        rel = np.abs(depths - gt_depths) / gt_depths
        out[adaptive] = (r.val_psnr, rel.max())
        print(f"ABLATE adaptive={adaptive}: psnr={r.val_psnr:.2f} "
              f"depth_err={rel.max()*100:.2f}% time={time.perf_counter()-t0:.0f}s",
              flush=True)
    gap = out[True][0] - out[False][0]
    print(f"ABLATE: gap={gap:.2f} dB (need >= 3), recovery={out[True][1]*100:.2f}% (need <= 2)",
          flush=True)

if "expo" in which:
    spec = SynthSpec(planes=3, cameras=10, image_size=(96, 96), padding=10,
                     exposure="random")
    res = synth_scene(1003, spec, base / "expo")
    views, host, near, far = build_views(load_manifest(base / "expo/manifest.json"), 0)
    t0 = time.perf_counter()
    cfg = FitConfig(planes=3, sharing=1, padding=10, iters=1200, lr=0.05,
                    views_per_step=6, val_every=300, optimize_exposure=True)
    r = fit_views(views, host, near, far, cfg)
    true_beta = np.array(res.truth["beta"])
    true_gamma = np.array(res.truth["gamma"])
    db = np.abs(r.exposure.beta - true_beta).max()
    dg = np.abs(r.exposure.gamma - true_gamma).max()
    print(f"EXPO: |dbeta|={db:.4f} (need <= 0.01) |dgamma|={dg:.4f} (need <= 0.02) "
          f"psnr={r.val_psnr:.2f} time={time.perf_counter()-t0:.0f}s", flush=True)

if "pose" in which:
    spec = SynthSpec(planes=3, cameras=12, image_size=(96, 96), padding=10,
                     pose_noise_rot_deg=0.5, pose_noise_trans_frac=0.005)
    res = synth_scene(1004, spec, base / "pose")
    views, host, near, far = build_views(load_manifest(base / "pose/manifest.json"), 0)
    out = {}
    for refine in (True, False):
        t0 = time.perf_counter()
        cfg = FitConfig(planes=3, sharing=1, padding=10, iters=2000, lr=0.05,
                        views_per_step=6, val_every=400, refine_poses=refine)
        r = fit_views(views, host, near, far, cfg)
        out[refine] = (r.val_psnr, r.background_error)
        print(f"POSE refine={refine}: psnr={r.val_psnr:.2f} "
              f"bg_err={r.background_error:.6f} time={time.perf_counter()-t0:.0f}s",
              flush=True)
    ratio = out[True][1] / out[False][1]
    print(f"POSE: bg ratio={ratio:.3f} (need <= 0.5) "
          f"psnr {out[False][0]:.2f} -> {out[True][0]:.2f} (need improvement)", flush=True)
