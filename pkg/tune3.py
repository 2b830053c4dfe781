import numpy as np, tempfile, pathlib, time, sys
from mpiforge.synthetic import SynthSpec, synth_scene
from mpiforge.manifest import build_views, load_manifest
from mpiforge.optimize import FitConfig, fit_views

base = pathlib.Path(tempfile.mkdtemp())
which = set(sys.argv[1:]) or {"ablate", "pose"}

if "ablate" in which:
    spec = SynthSpec(planes=3, cameras=12, image_size=(128, 128), padding=12)
    res = synth_scene(1002, spec, base / "ablate")
    m = load_manifest(base / "ablate/manifest.json")
    views, host, near, far = build_views(m, 0)
    gt = np.array(res.truth["depths"])
    for label, iters, vps, lrf in [("E1", 3000, 6, 0.02), ("E2", 2000, 0, 0.015)]:
        t0 = time.perf_counter()
        cfg = FitConfig(planes=3, sharing=1, padding=12, iters=iters, lr=0.05,
                        lr_final=lrf, views_per_step=vps, val_every=1000,
                        adaptive_depth=True, init_depth_scale=1.2)
        r = fit_views(views, host, near, far, cfg)
        rel = np.abs(r.mpi.current_depths() - gt) / gt
        print(f"ABL {label} iters={iters} vps={vps} lrf={lrf}: "
              f"err={rel.max()*100:.2f}% psnr={r.val_psnr:.2f} "
              f"t={time.perf_counter()-t0:.0f}s depths={np.round(r.mpi.current_depths(),4)} "
              f"gt={np.round(gt,4)}", flush=True)

if "pose" in which:
    spec = SynthSpec(planes=3, cameras=12, image_size=(96, 96), padding=10,
                     pose_noise_rot_deg=0.5, pose_noise_trans_frac=0.005,
                     texture_cells=(10, 16))
    res = synth_scene(1004, spec, base / "pose")
    m = load_manifest(base / "pose/manifest.json")
    views, host, near, far = build_views(m, 0)
    for label, plm, warm in [("P1", 0.005, 0.25), ("P2", 0.002, 0.25)]:
        out = {}
        for refine in (True, False):
            t0 = time.perf_counter()
            cfg = FitConfig(planes=3, sharing=1, padding=10, iters=2200, lr=0.05,
                            views_per_step=6, val_every=1000, refine_poses=refine,
                            pose_lr_mult=plm, pose_warmup_frac=warm)
            r = fit_views(views, host, near, far, cfg)
            out[refine] = (r.val_psnr, r.background_error)
            print(f"POSE {label} refine={refine}: psnr={r.val_psnr:.2f} "
                  f"bg={r.background_error:.2e} t={time.perf_counter()-t0:.0f}s",
                  flush=True)
        print(f"POSE {label}: ratio={out[True][1]/out[False][1]:.3f} "
              f"psnr {out[False][0]:.2f} -> {out[True][0]:.2f}", flush=True)
