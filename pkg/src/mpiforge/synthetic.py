"""Synthetic layered scenes with known ground truth.

Generates an MPI with smooth random textures and partial-coverage alpha blobs
(plus an opaque far plane), renders it into a ring of cameras with the
float64 reference renderer, optionally bakes in known exposure coefficients,
additive image noise, and camera pose errors, and writes a standard dataset
(manifest + PNGs) alongside a ground-truth sidecar. Everything is a pure
function of the seed; regenerating writes byte-identical files.

Pose noise perturbs the poses recorded in the manifest for training cameras
only (the images are rendered from the true poses, mimicking imperfect
calibration); the host and validation cameras keep true poses so the gauge
and the held-out measurement stay clean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .container import write_mpi
from .geometry import CameraModel, look_at, simple_intrinsics
from .imageio import save_mask, save_png
from .manifest import CameraSpec, DatasetManifest, FrameSpec, save_manifest
from .mpi import ExposureCoeffs, Mpi, init_planes
from .rendering import apply_exposure, render_forward


@dataclass
class SynthSpec:
    planes: int = 3
    sharing: int = 1
    near: float = 1.6
    far: float = 3.4
    spacing: str = "depth"
    cameras: int = 12
    val_cameras: int = 1
    image_size: tuple = (128, 128)
    padding: int = 12
    texture: str = "smooth"            # "smooth" | "checker"
    texture_cells: tuple = (4, 9)      # coarse-grid range for smooth textures
    texture_range: tuple = (0.08, 0.88)
    coverage: float = 0.45             # alpha blob coverage of non-far planes
    image_noise: float = 0.0           # additive gaussian sigma, color units
    exposure: str | None = None        # None | "random" (non-reference cameras)
    pose_noise_rot_deg: float = 0.0    # training cameras only
    pose_noise_trans_frac: float = 0.0 # fraction of mid-scene depth
    ring_radius_frac: float = 0.13     # camera ring radius / mid-scene depth
    focal_factor: float = 0.9


@dataclass
class SynthResult:
    mpi: Mpi
    manifest: DatasetManifest
    truth: dict
    out_dir: Path
    exposure: ExposureCoeffs
    true_cameras: dict


def smooth_noise(rng, height, width, cells, lo=0.0, hi=1.0):
    """Random coarse grid bilinearly upsampled to (height, width)."""
    coarse = rng.uniform(lo, hi, size=(cells + 1, cells + 1))
    ys = np.linspace(0, cells, height)
    xs = np.linspace(0, cells, width)
    y0 = np.minimum(ys.astype(int), cells - 1)
    x0 = np.minimum(xs.astype(int), cells - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = coarse[np.ix_(y0, x0)]
    b = coarse[np.ix_(y0, x0 + 1)]
    c = coarse[np.ix_(y0 + 1, x0)]
    d = coarse[np.ix_(y0 + 1, x0 + 1)]
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy


def _texture_layer(rng, hc, wc, kind, cells=(4, 9), value_range=(0.08, 0.88)):
    if kind == "checker":
        ys, xs = np.mgrid[0:hc, 0:wc]
        period = max(6, hc // 10)
        base = 0.25 + 0.5 * (((ys // period) + (xs // period)) % 2)
        tint = rng.uniform(0.1, 0.25, size=3)
        return np.clip(base[..., None] * np.ones(3) - tint, 0.05, 0.9)
    lo, hi = value_range
    layers = [
        smooth_noise(rng, hc, wc, cells=int(rng.integers(*cells)), lo=lo, hi=hi)
        for _ in range(3)
    ]
    return np.stack(layers, axis=-1)


def _alpha_blob(rng, hc, wc, coverage):
    field = smooth_noise(rng, hc, wc, cells=int(rng.integers(3, 6)))
    threshold = np.quantile(field, 1.0 - coverage)
    soft = (field - threshold) * (6.0 / (field.std() + 1e-9))
    return np.clip(soft, 0.0, 1.0)


def make_ground_truth_mpi(rng, spec: SynthSpec):
    w, h = spec.image_size
    hc, wc = h + 2 * spec.padding, w + 2 * spec.padding
    host = CameraModel(
        simple_intrinsics(spec.focal_factor * w, w, h), np.eye(3), np.zeros(3), (w, h)
    )
    depths = init_planes(spec.near, spec.far, spec.planes, spec.spacing)
    alphas = np.empty((spec.planes, hc, wc))
    for i in range(spec.planes - 1):
        alphas[i] = _alpha_blob(rng, hc, wc, spec.coverage)
    alphas[-1] = 1.0  # opaque background plane
    textures = np.stack([
        _texture_layer(rng, hc, wc, spec.texture, spec.texture_cells,
                       spec.texture_range)
        for _ in range(spec.planes // spec.sharing)
    ])
    return Mpi(alphas, textures, depths, host, spec.sharing, padding=spec.padding)


def camera_ring(host: CameraModel, count, mid_depth, radius, rng=None):
    """Cameras on a jittered lateral ring looking at the mid-scene point.

    Index 0 is the host camera itself.
    """
    cams = [host]
    target = np.array([0.0, 0.0, mid_depth])
    for i in range(1, count):
        angle = 2 * np.pi * (i - 1) / max(count - 1, 1)
        eye = np.array([radius * np.cos(angle), 0.6 * radius * np.sin(angle), 0.0])
        if rng is not None:
            eye += rng.uniform(-0.1, 0.1, size=3) * radius
        cams.append(look_at(eye, target, (0.0, -1.0, 0.0),
                            host.intrinsics, host.image_size))
    return cams


def _noisy_pose(rng, cam: CameraModel, rot_deg, trans_frac, scale):
    xi = np.zeros(6)
    if rot_deg > 0:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        xi[:3] = axis * np.deg2rad(rot_deg) * rng.uniform(0.5, 1.0)
    if trans_frac > 0:
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        xi[3:] = direction * trans_frac * scale * rng.uniform(0.5, 1.0)
    return cam.perturbed(xi)


def foreground_mask(mpi: Mpi, camera: CameraModel, fg_planes):
    """Binary mask of the foreground planes' coverage in a view."""
    sub = Mpi(
        mpi.raw_alphas[fg_planes],
        np.zeros((len(fg_planes), *mpi.raw_textures.shape[1:])),
        mpi.init_depths[fg_planes],
        mpi.host_camera,
        1,
        depth_deltas=mpi.depth_deltas[fg_planes],
        padding=mpi.padding,
    )
    _, acc, _, _ = render_forward(sub, camera)
    w, h = camera.image_size
    return (acc.reshape(h, w) > 0.5).astype(np.float64)


def bench_scene(seed, planes, sharing, image_size):
    """Deterministic throughput scene: an opaque far plane behind partial-
    coverage character blobs (the workload an MPI renderer actually sees)."""
    rng = np.random.default_rng(seed)
    w, h = image_size
    host = CameraModel(simple_intrinsics(0.9 * w, w, h), np.eye(3), np.zeros(3), (w, h))
    alphas = np.empty((planes, h, w))
    for i in range(planes - 1):
        alphas[i] = _alpha_blob(rng, h, w, coverage=0.35)
    alphas[-1] = 1.0
    textures = np.stack([
        _texture_layer(rng, h, w, "smooth") for _ in range(planes // sharing)
    ])
    return Mpi(alphas, textures, init_planes(1.0, 5.0, planes), host, sharing)


def orbit_cameras(host: CameraModel, count, radius, mid_depth, tilt=0.6):
    """Closed circular camera path around the host, eyeing the mid-scene point."""
    cams = []
    target = np.array([0.0, 0.0, mid_depth])
    for i in range(count):
        angle = 2 * np.pi * i / count
        eye = np.array([radius * np.cos(angle), tilt * radius * np.sin(angle), 0.0])
        cams.append(look_at(eye, target, (0.0, -1.0, 0.0),
                            host.intrinsics, host.image_size))
    return cams


def synth_scene(seed, spec: SynthSpec, out_dir) -> SynthResult:
    """Generate the dataset and ground-truth sidecar under `out_dir`."""
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    mpi = make_ground_truth_mpi(rng, spec)
    host = mpi.host_camera
    w, h = spec.image_size
    mid = 0.5 * (spec.near + spec.far)
    cams = camera_ring(host, spec.cameras, mid, spec.ring_radius_frac * mid, rng)
    cam_ids = [f"cam{i:02d}" for i in range(spec.cameras)]
    val_ids = cam_ids[len(cam_ids) - spec.val_cameras:] if spec.val_cameras else []

    exposure = ExposureCoeffs.identity(spec.cameras)
    if spec.exposure == "random":
        for i in range(1, spec.cameras):
            exposure.beta[i] = rng.uniform(-0.05, 0.05, size=3)
            exposure.gamma[i] = rng.uniform(0.9, 1.1, size=3)

    fg_planes = list(range(spec.planes - 1))
    images, masks, poses = {}, {}, {}
    true_cameras = {}
    for i, (cid, cam) in enumerate(zip(cam_ids, cams)):
        outp, _, _, _ = render_forward(mpi, cam)
        img = apply_exposure(outp.reshape(h, w, 3), exposure.beta[i], exposure.gamma[i])
        if spec.image_noise > 0:
            img = np.clip(img + rng.normal(scale=spec.image_noise, size=img.shape), 0, 1)
        rel = f"images/{cid}.png"
        save_png(out / rel, img)
        images[cid] = rel
        mask = foreground_mask(mpi, cam, fg_planes)
        mrel = f"masks/{cid}.png"
        save_mask(out / mrel, mask)
        masks[cid] = mrel
        true_cameras[cid] = cam
        recorded = cam
        perturb = (
            (spec.pose_noise_rot_deg > 0 or spec.pose_noise_trans_frac > 0)
            and cid != cam_ids[0] and cid not in val_ids
        )
        if perturb:
            recorded = _noisy_pose(rng, cam, spec.pose_noise_rot_deg,
                                   spec.pose_noise_trans_frac, mid)
        poses[cid] = (recorded.rotation, recorded.translation)

    manifest = DatasetManifest(
        near=spec.near, far=spec.far, host_camera_id=cam_ids[0],
        cameras=[CameraSpec(id=cid, intrinsics=host.intrinsics, image_size=(w, h))
                 for cid in cam_ids],
        frames=[FrameSpec(timestamp=0.0, split="train", images=images,
                          masks=masks, poses=poses)],
        shared_intrinsics=True,
        val_camera_ids=val_ids,
        base_dir=out,
    )
    save_manifest(manifest, out / "manifest.json")
    write_mpi(mpi, out / "gt.mpi")

    truth = {
        "seed": int(seed),
        "depths": mpi.current_depths().tolist(),
        "beta": exposure.beta.tolist(),
        "gamma": exposure.gamma.tolist(),
        "foreground_planes": fg_planes,
        "poses": {
            cid: {"rotation": c.rotation.tolist(), "translation": c.translation.tolist()}
            for cid, c in true_cameras.items()
        },
        "spec": {k: (list(v) if isinstance(v, tuple) else v)
                 for k, v in asdict(spec).items()},
    }
    (out / "gt.json").write_text(json.dumps(truth, sort_keys=True, indent=2) + "\n")
    return SynthResult(mpi=mpi, manifest=manifest, truth=truth, out_dir=out,
                       exposure=exposure, true_cameras=true_cameras)
