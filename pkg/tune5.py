import numpy as np, tempfile, pathlib, time
from mpiforge.synthetic import SynthSpec, synth_scene
from mpiforge.manifest import build_views, load_manifest
from mpiforge.optimize import FitConfig, fit_views
from mpiforge.geometry import se3_log

base = pathlib.Path(tempfile.mkdtemp())
spec = SynthSpec(planes=3, cameras=12, image_size=(96, 96), padding=10,
                 pose_noise_rot_deg=0.5, pose_noise_trans_frac=0.005,
                 texture_cells=(10, 16))
res = synth_scene(1004, spec, base / "pose")
m = load_manifest(base / "pose/manifest.json")
views, host, near, far = build_views(m, 0)

def pose_errors(fit_views_result):
    errs = []
    for v in fit_views_result.views:
        if v.is_val or not v.refine:
            continue
        true = res.true_cameras[v.name]
        xi = se3_log(v.camera.rotation @ true.rotation.T,
                     v.camera.translation - v.camera.rotation @ true.rotation.T @ true.translation)
        errs.append(np.linalg.norm(xi[:3]))
    return np.rad2deg(np.mean(errs)), np.rad2deg(np.max(errs))

# initial pose error for reference
init_errs = []
for v in views:
    if v.is_val or not v.refine:
        continue
    true = res.true_cameras[v.name]
    xi = se3_log(v.camera.rotation @ true.rotation.T,
                 v.camera.translation - v.camera.rotation @ true.rotation.T @ true.translation)
    init_errs.append(np.linalg.norm(xi[:3]))
print(f"initial rot error: mean {np.rad2deg(np.mean(init_errs)):.3f} deg "
      f"max {np.rad2deg(np.max(init_errs)):.3f} deg", flush=True)

baseline = None
for prior in (None, 0.003, 0.03, 0.3):
    t0 = time.perf_counter()
    cfg = FitConfig(planes=3, sharing=1, padding=10, iters=2200, lr=0.05,
                    views_per_step=6, val_every=1000,
                    refine_poses=prior is not None,
                    pose_lr_mult=0.002, pose_prior=prior or 0.0)
    r = fit_views(views, host, near, far, cfg)
    mean_e, max_e = pose_errors(r)
    tag = "OFF" if prior is None else f"prior={prior}"
    print(f"POSE {tag}: psnr={r.val_psnr:.2f} bg={r.background_error:.2e} "
          f"rot_err mean {mean_e:.3f} max {max_e:.3f} deg "
          f"t={time.perf_counter()-t0:.0f}s", flush=True)
    if prior is None:
        baseline = (r.val_psnr, r.background_error)
    else:
        print(f"  -> ratio={r.background_error/baseline[1]:.3f} "
              f"psnr {baseline[0]:.2f} -> {r.val_psnr:.2f}", flush=True)
