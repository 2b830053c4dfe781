"""Command-line entry point: one binary, subcommand per workflow.

    mpiforge synth      generate a synthetic dataset with known ground truth
    mpiforge fit        fit MPIs to a dataset manifest
    mpiforge render     render one view of a stored MPI
    mpiforge depthmap   render the composited depth map
    mpiforge orbit      render a circular camera path to numbered frames
    mpiforge retarget   transfer keypoint motion between characters
    mpiforge rasterize  draw a keypoint file as a pose image
    mpiforge gradcheck  finite-difference verification of all gradients
    mpiforge bench      renderer throughput measurement
    mpiforge export-web write a browser viewer bundle

Defaults can come from a JSON or TOML config file (--config), overridden by
flags. Errors exit nonzero with a single machine-parsable line on stderr:
"<ErrorCategory>: <detail>". MPIFORGE_THREADS mirrors --threads.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadPath, MpiForgeError, SchemaError
from .geometry import CameraModel
from .losses import LossConfig
from . import container
from .imageio import save_png
from .manifest import build_views, load_manifest
from .motion import (
    KeypointSet,
    load_keypoints,
    rasterize_pose,
    retarget_pose,
    save_keypoints,
)
from .optimize import (
    PARAMETER_CLASSES,
    FitConfig,
    finite_diff_check,
    fit_views,
    make_gradcheck_scene,
)
from .rendering import apply_exposure, render_depth, render_view
from .synthetic import SynthSpec, bench_scene, orbit_cameras, synth_scene
from .webexport import export_web


@dataclass
class GlobalConfig:
    threads: int = 0            # 0 = auto
    precision: str = "f32"      # rendering precision for image commands
    seed: int = 0
    log_level: str = "warning"


def _size(text):
    try:
        w, h = text.lower().split("x")
        return (int(w), int(h))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}")


def load_config_file(path):
    p = Path(path)
    if not p.exists():
        raise BadPath(f"no such config file: {p}")
    if p.suffix.lower() == ".json":
        return json.loads(p.read_text())
    try:
        import tomllib
    except ImportError:
        try:
            import tomli as tomllib
        except ImportError:
            raise SchemaError(
                "/", "TOML config requires Python 3.11+ or the tomli package; "
                "JSON configs always work"
            ) from None
    with open(p, "rb") as fh:
        return tomllib.load(fh)


def camera_from_spec(text, fallback: CameraModel | None = None):
    """Camera from inline JSON, a JSON file path, or None (host camera)."""
    if text is None:
        if fallback is None:
            raise BadPath("no camera given and no host camera available")
        return fallback
    if text.strip().startswith("{"):
        doc = json.loads(text)
    else:
        p = Path(text)
        if not p.exists():
            raise BadPath(f"no such camera file: {p}")
        doc = json.loads(p.read_text())
    try:
        return CameraModel(
            np.asarray(doc["intrinsics"], dtype=np.float64),
            np.asarray(doc["rotation"], dtype=np.float64),
            np.asarray(doc["translation"], dtype=np.float64),
            tuple(doc.get("image_size", fallback.image_size if fallback else (0, 0))),
        )
    except KeyError as exc:
        raise SchemaError("/camera", f"missing field {exc}") from exc


def _read_mpi_arg(path):
    p = Path(path)
    if not p.exists():
        raise BadPath(f"no such MPI container: {p}")
    return container.read_mpi(p)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args, g: GlobalConfig):
    spec = SynthSpec(
        planes=args.planes, sharing=args.share, cameras=args.cameras,
        val_cameras=args.val_cameras, image_size=args.size, padding=args.padding,
        coverage=args.coverage, image_noise=args.noise,
        exposure="random" if args.exposure else None,
        pose_noise_rot_deg=args.pose_noise_rot,
        pose_noise_trans_frac=args.pose_noise_trans,
        near=args.near, far=args.far, spacing=args.spacing,
    )
    result = synth_scene(g.seed, spec, args.out)
    print(f"wrote dataset with {spec.cameras} cameras to {result.out_dir}")
    print(f"ground truth: {result.out_dir / 'gt.mpi'} (sidecar gt.json)")
    return 0


def _frame_range(text, count):
    if text == "all":
        return list(range(count))
    if "-" in text:
        a, b = text.split("-", 1)
        return list(range(int(a), int(b) + 1))
    return [int(text)]


def cmd_fit(args, g: GlobalConfig):
    manifest = load_manifest(args.dataset, auto_split=args.auto_split)
    if args.val_split is not None and all(f.split in (None, "train") for f in manifest.frames):
        period = max(int(round(1.0 / args.val_split)), 1)
        for i, fr in enumerate(manifest.frames):
            fr.split = "val" if i % period == period // 2 else "train"
    frames = _frame_range(args.frames, len(manifest.frames))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = FitConfig(
        planes=args.planes, sharing=args.share, spacing=args.spacing,
        padding=args.padding, iters=args.iters, lr=args.lr,
        adaptive_depth=args.adaptive_depth, refine_poses=args.refine_poses,
        optimize_exposure=args.exposure, seed=g.seed,
        init_depth_scale=args.init_depth_scale,
        loss=LossConfig(lambda1=args.lambda1, lambda2=args.lambda2,
                        foreground_weight=args.foreground_weight),
        val_every=args.val_every,
    )
    logging.getLogger("mpiforge").setLevel(logging.INFO)
    for fi in frames:
        if manifest.frames[fi].split == "val":
            continue
        views, host_cam, near, far = build_views(manifest, fi)
        result = fit_views(views, host_cam, near, far, cfg)
        container.write_mpi(result.mpi, out / f"frame{fi:04d}.mpi")
        with open(out / f"frame{fi:04d}_history.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "l2", "grad", "perceptual", "psnr_val"])
            for row in result.history:
                writer.writerow([row["iteration"], row["l2"], row["grad"],
                                 row["perceptual"], row["psnr_val"]])
        refined = {
            v.name: {"rotation": v.camera.rotation.tolist(),
                     "translation": v.camera.translation.tolist()}
            for v in result.views
        }
        (out / f"frame{fi:04d}_cameras.json").write_text(
            json.dumps(refined, sort_keys=True, indent=2) + "\n")
        (out / f"frame{fi:04d}_exposure.json").write_text(json.dumps({
            "beta": result.exposure.beta.tolist(),
            "gamma": result.exposure.gamma.tolist(),
        }, sort_keys=True, indent=2) + "\n")
        print(f"frame {fi}: final loss {result.history[-1]['total']:.6f} "
              f"val PSNR {result.val_psnr:.2f} dB -> {out / f'frame{fi:04d}.mpi'}")
    return 0


def cmd_render(args, g: GlobalConfig, depth=False):
    mpi = _read_mpi_arg(args.mpi)
    camera = camera_from_spec(args.camera, mpi.host_camera)
    if depth or getattr(args, "depth", False):
        dmap = render_depth(mpi, camera)
        near, far = mpi.current_depths()[0], mpi.current_depths()[-1]
        save_png(args.out, np.clip((dmap - near) / max(far - near, 1e-9), 0, 1))
        if getattr(args, "npy", None):
            np.save(args.npy, dmap)
    else:
        image = render_view(mpi, camera, precision=g.precision, threads=g.threads)
        pixels = image.pixels
        if args.exposure:
            doc = json.loads(Path(args.exposure).read_text())
            pixels = apply_exposure(pixels, np.asarray(doc["beta"]),
                                    np.asarray(doc["gamma"]))
        save_png(args.out, pixels)
    print(f"wrote {args.out}")
    return 0


def cmd_orbit(args, g: GlobalConfig):
    from .kernels import RenderScratch, render_fast

    mpi = _read_mpi_arg(args.mpi)
    depths = mpi.current_depths()
    mid = float(depths[len(depths) // 2]) if args.depth_mid is None else args.depth_mid
    cams = orbit_cameras(mpi.host_camera, args.frames, args.radius * mid, mid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scratch = RenderScratch(mpi)
    t0 = time.perf_counter()
    for i, cam in enumerate(cams):
        image = render_fast(mpi, cam, threads=g.threads, scratch=scratch)
        save_png(out / f"frame{i:04d}.png", image.pixels)
    dt = time.perf_counter() - t0
    print(f"rendered {args.frames} frames in {dt:.2f}s "
          f"({args.frames / dt:.1f} fps incl. PNG encode) -> {out}")
    return 0


def cmd_retarget(args, g: GlobalConfig):
    def load_sequence(manifest_path):
        m = load_manifest(manifest_path, check_files=False)
        seq = []
        for i, fr in enumerate(m.frames):
            if not fr.keypoints:
                raise SchemaError(f"/frames/{i}/keypoints", "frame has no keypoints")
            kp_path = m.resolve(fr.keypoints)
            if not kp_path.exists():
                raise BadPath(f"no such keypoint file: {kp_path}")
            seq.append(load_keypoints(kp_path))
        return seq

    source_seq = load_sequence(args.source)
    driving_seq = load_sequence(args.driving)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(len(driving_seq)):
        transferred = retarget_pose(
            source_seq, driving_seq, driving_index=i,
            anchor_index=args.anchor_frame, mode=args.limb_mode,
        )
        if args.mode != "all":
            drv = driving_seq[i]
            keep = {
                "face": args.mode == "face",
                "body": args.mode == "body",
                "hands": args.mode == "hands",
            }
            transferred = KeypointSet(
                face=transferred.face if keep["face"] else drv.face,
                body=transferred.body if keep["body"] else drv.body,
                hands=transferred.hands if keep["hands"] else drv.hands,
                face_visible=transferred.face_visible if keep["face"] else drv.face_visible,
                body_visible=transferred.body_visible if keep["body"] else drv.body_visible,
                hands_visible=transferred.hands_visible if keep["hands"] else drv.hands_visible,
                timestamp=drv.timestamp,
            )
        save_keypoints(transferred, out / f"frame{i:04d}.json")
    print(f"retargeted {len(driving_seq)} frames -> {out}")
    return 0


def cmd_rasterize(args, g: GlobalConfig):
    kps = load_keypoints(args.keypoints) if Path(args.keypoints).exists() else None
    if kps is None:
        raise BadPath(f"no such keypoint file: {args.keypoints}")
    save_png(args.out, rasterize_pose(kps, args.canvas))
    print(f"wrote {args.out}")
    return 0


def cmd_gradcheck(args, g: GlobalConfig):
    classes = PARAMETER_CLASSES if args.all else tuple(args.classes.split(","))
    t0 = time.perf_counter()
    worst = {}
    failures = 0
    for s in range(args.scenes):
        scene = make_gradcheck_scene(g.seed + s)
        for cls in classes:
            report = finite_diff_check(cls, scene, step=args.step,
                                       tolerance=args.tolerance)
            w = worst.get(cls)
            if w is None or report.max_rel_err > w.max_rel_err:
                worst[cls] = report
            if not report.passed:
                failures += 1
    print(f"{'class':<14}{'max rel err':>14}{'checked':>9}{'nudged':>8}  result")
    for cls in classes:
        r = worst[cls]
        status = "PASS" if r.max_rel_err < args.tolerance else "FAIL"
        print(f"{cls:<14}{r.max_rel_err:>14.3e}{r.checked:>9}{r.nudged:>8}  {status}")
    print(f"{args.scenes} scenes x {len(classes)} classes in "
          f"{time.perf_counter() - t0:.1f}s, tolerance {args.tolerance:g}")
    return 0 if failures == 0 else 1


def cmd_bench(args, g: GlobalConfig):
    from .kernels import RenderScratch, render_fast

    mpi = bench_scene(g.seed, args.planes, args.share, (args.width, args.height))
    depths = mpi.current_depths()
    mid = float(depths.mean())
    cams = orbit_cameras(mpi.host_camera, max(args.frames, 1), 0.08 * mid, mid)
    scratch = RenderScratch(mpi)
    render_fast(mpi, cams[0], threads=g.threads, scratch=scratch)  # warm up
    t0 = time.perf_counter()
    for i in range(args.frames):
        render_fast(mpi, cams[i % len(cams)], threads=g.threads, scratch=scratch)
    dt = time.perf_counter() - t0
    fps = args.frames / dt
    result = {
        "planes": args.planes, "sharing": args.share,
        "width": args.width, "height": args.height,
        "frames": args.frames, "seconds": dt, "fps": fps,
        "threads": g.threads or "auto",
    }
    print(json.dumps(result))
    print(f"{fps:.1f} frames/second at {args.width}x{args.height}, "
          f"D={args.planes}, K={args.share}")
    return 0


def cmd_export_web(args, g: GlobalConfig):
    frames = []
    for i, path in enumerate(args.mpi):
        frames.append((Path(path).stem, _read_mpi_arg(path)))
    index = export_web(frames, args.out)
    print(f"wrote bundle with {len(index['frames'])} frames to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mpiforge",
        description="Differentiable multiplane-image engine: render, fit, retarget.",
    )
    parser.add_argument("--config", help="JSON or TOML file with default options")
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("MPIFORGE_THREADS", "0")),
                        help="worker threads (0 = auto; env MPIFORGE_THREADS)")
    parser.add_argument("--precision", choices=["f32", "f64"], default="f32")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", required=True)
    parser._command_parsers = {}

    def add_parser(name, **kw):
        p = sub.add_parser(name, **kw)
        parser._command_parsers[name] = p
        return p

    p = add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--planes", type=int, default=3)
    p.add_argument("--share", type=int, default=1)
    p.add_argument("--cameras", type=int, default=12)
    p.add_argument("--val-cameras", type=int, default=1)
    p.add_argument("--size", type=_size, default=(128, 128))
    p.add_argument("--padding", type=int, default=12)
    p.add_argument("--coverage", type=float, default=0.45)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--near", type=float, default=1.6)
    p.add_argument("--far", type=float, default=3.4)
    p.add_argument("--spacing", choices=["depth", "disparity"], default="depth")
    p.add_argument("--exposure", action="store_true",
                   help="bake random exposure into non-reference cameras")
    p.add_argument("--pose-noise-rot", type=float, default=0.0, metavar="DEG")
    p.add_argument("--pose-noise-trans", type=float, default=0.0, metavar="FRAC")
    p.set_defaults(func=cmd_synth)

    p = add_parser("fit", help="fit MPIs to a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--frames", default="all")
    p.add_argument("--out", required=True)
    p.add_argument("--planes", type=int, default=32)
    p.add_argument("--share", type=int, default=4)
    p.add_argument("--spacing", choices=["depth", "disparity"], default="depth")
    p.add_argument("--padding", type=int, default=0)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--lambda1", type=float, default=1.0)
    p.add_argument("--lambda2", type=float, default=0.0)
    p.add_argument("--foreground-weight", type=float, default=10.0)
    p.add_argument("--adaptive-depth", action=argparse.BooleanOptionalAction,
                   default=True)
    p.add_argument("--refine-poses", action="store_true")
    p.add_argument("--exposure", action="store_true",
                   help="learn per-camera exposure coefficients")
    p.add_argument("--val-split", type=float, default=None,
                   help="tag this fraction of frames as validation")
    p.add_argument("--auto-split", action="store_true",
                   help="tag every 16th frame as validation when untagged")
    p.add_argument("--init-depth-scale", type=float, default=1.0)
    p.add_argument("--val-every", type=int, default=100)
    p.set_defaults(func=cmd_fit)

    p = add_parser("render", help="render one view of an MPI")
    p.add_argument("--mpi", required=True)
    p.add_argument("--camera", help="camera JSON file or inline JSON (default: host)")
    p.add_argument("--out", required=True)
    p.add_argument("--depth", action="store_true")
    p.add_argument("--exposure", help="exposure JSON with beta/gamma to apply")
    p.add_argument("--npy", help="also dump raw depths to this .npy (with --depth)")
    p.set_defaults(func=cmd_render)

    p = add_parser("depthmap", help="render the composited depth map")
    p.add_argument("--mpi", required=True)
    p.add_argument("--camera")
    p.add_argument("--out", required=True)
    p.add_argument("--npy")
    p.set_defaults(func=lambda a, gl: cmd_render(a, gl, depth=True))

    p = add_parser("orbit", help="render a circular camera path")
    p.add_argument("--mpi", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--radius", type=float, default=0.08,
                   help="orbit radius as a fraction of mid-scene depth")
    p.add_argument("--depth-mid", type=float, default=None)
    p.set_defaults(func=cmd_orbit)

    p = add_parser("retarget", help="transfer keypoint motion")
    p.add_argument("--source", required=True, help="source character manifest")
    p.add_argument("--driving", required=True, help="driving sequence manifest")
    p.add_argument("--mode", choices=["face", "body", "hands", "all"], default="all")
    p.add_argument("--anchor-frame", type=int, default=0)
    p.add_argument("--limb-mode", choices=["exact", "literal"], default="exact")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retarget)

    p = add_parser("rasterize", help="draw keypoints as a pose image")
    p.add_argument("--keypoints", required=True)
    p.add_argument("--canvas", type=_size, default=(640, 360))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rasterize)

    p = add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--all", action="store_true")
    p.add_argument("--classes", default=",".join(PARAMETER_CLASSES))
    p.add_argument("--scenes", type=int, default=20)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = add_parser("bench", help="renderer throughput")
    p.add_argument("--planes", type=int, default=32)
    p.add_argument("--share", type=int, default=4)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=360)
    p.add_argument("--frames", type=int, default=60)
    p.set_defaults(func=cmd_bench)

    p = add_parser("export-web", help="write a browser viewer bundle")
    p.add_argument("--mpi", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_web)
    return parser


def main(argv=None):
    parser = build_parser()
    args, remaining = parser.parse_known_args(argv)
    if args.config:
        try:
            doc = load_config_file(args.config)
        except MpiForgeError as exc:
            print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
        merged = {k.replace("-", "_"): v for k, v in doc.get(args.command, {}).items()}
        globals_ = {k.replace("-", "_"): v for k, v in doc.get("global", {}).items()}
        parser.set_defaults(**globals_)
        parser._command_parsers[args.command].set_defaults(**merged)
        args = parser.parse_args(argv)
    elif remaining:
        args = parser.parse_args(argv)  # surface proper errors for unknown flags

    logging.basicConfig(level=args.log_level.upper())
    g = GlobalConfig(threads=args.threads, precision=args.precision,
                     seed=args.seed, log_level=args.log_level)
    try:
        return args.func(args, g)
    except MpiForgeError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
