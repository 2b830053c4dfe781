"""Dataset manifest: cameras, per-frame poses, image/mask paths, keypoints.

JSON schema documented in docs/formats.md. Paths are relative to the manifest
file. Loading validates the schema (SchemaError with a JSON-pointer path),
checks referenced files exist (MissingFile), and can auto-assign a 1-in-16
validation split when no frame carries split tags.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadPath, InvalidCamera, MissingFile, SchemaError
from .geometry import CameraModel
from .imageio import load_mask, load_png
from .optimize import ViewObservation

MANIFEST_VERSION = 1
AUTO_SPLIT_PERIOD = 16
AUTO_SPLIT_PHASE = 8  # frame indices i with i % 16 == 8 become validation


@dataclass
class CameraSpec:
    id: str
    intrinsics: np.ndarray       # (3, 3)
    image_size: tuple            # (W, H)


@dataclass
class FrameSpec:
    timestamp: float
    split: str | None            # "train" | "val" | None
    images: dict                 # camera id -> relative path
    masks: dict                  # camera id -> relative path (may be empty)
    poses: dict                  # camera id -> (rotation (3,3), translation (3,))
    keypoints: str | None = None


@dataclass
class DatasetManifest:
    near: float
    far: float
    host_camera_id: str
    cameras: list
    frames: list
    shared_intrinsics: bool = True
    val_camera_ids: list = field(default_factory=list)
    base_dir: Path = field(default_factory=Path)
    version: int = MANIFEST_VERSION

    def camera_spec(self, camera_id) -> CameraSpec:
        for c in self.cameras:
            if c.id == camera_id:
                return c
        raise SchemaError("/cameras", f"unknown camera id {camera_id!r}")

    def camera_model(self, camera_id, frame: FrameSpec) -> CameraModel:
        spec = self.camera_spec(camera_id)
        r, t = frame.poses[camera_id]
        return CameraModel(spec.intrinsics, r, t, spec.image_size)

    def resolve(self, relpath) -> Path:
        return self.base_dir / relpath


def _want(obj, key, kind, pointer):
    if key not in obj:
        raise SchemaError(f"{pointer}/{key}", "missing required field")
    val = obj[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if not isinstance(val, kind):
        raise SchemaError(f"{pointer}/{key}", f"expected {kind.__name__}")
    return val


def _matrix(val, shape, pointer):
    try:
        arr = np.asarray(val, dtype=np.float64)
    except (TypeError, ValueError):
        raise SchemaError(pointer, "expected a numeric array") from None
    if arr.shape != shape:
        raise SchemaError(pointer, f"expected shape {shape}, got {arr.shape}")
    return arr


def load_manifest(path, auto_split=False, check_files=True) -> DatasetManifest:
    p = Path(path)
    if not p.exists():
        raise BadPath(f"no such manifest: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError("/", f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("/", "top level must be an object")
    version = _want(doc, "version", int, "")
    if version != MANIFEST_VERSION:
        raise SchemaError("/version", f"unsupported manifest version {version}")
    near = _want(doc, "near", float, "")
    far = _want(doc, "far", float, "")
    if not 0 < near < far:
        raise SchemaError("/near", f"need 0 < near < far, got {near}, {far}")
    host_id = _want(doc, "host_camera_id", str, "")
    shared = bool(doc.get("shared_intrinsics", True))

    cameras = []
    for i, cam in enumerate(_want(doc, "cameras", list, "")):
        ptr = f"/cameras/{i}"
        if not isinstance(cam, dict):
            raise SchemaError(ptr, "camera entry must be an object")
        cid = _want(cam, "id", str, ptr)
        K = _matrix(_want(cam, "intrinsics", list, ptr), (3, 3), f"{ptr}/intrinsics")
        size = _want(cam, "image_size", list, ptr)
        if len(size) != 2:
            raise SchemaError(f"{ptr}/image_size", "expected [width, height]")
        cameras.append(CameraSpec(id=cid, intrinsics=K, image_size=(int(size[0]), int(size[1]))))
    ids = [c.id for c in cameras]
    if len(set(ids)) != len(ids):
        raise SchemaError("/cameras", "duplicate camera ids")
    if host_id not in ids:
        raise SchemaError("/host_camera_id", f"host camera {host_id!r} not declared")
    if shared:
        for i, c in enumerate(cameras[1:], start=1):
            if not np.array_equal(c.intrinsics, cameras[0].intrinsics):
                raise SchemaError(
                    f"/cameras/{i}/intrinsics",
                    "shared_intrinsics is set but intrinsics differ",
                )

    val_cam_ids = doc.get("val_camera_ids", [])
    if not isinstance(val_cam_ids, list) or not all(isinstance(v, str) for v in val_cam_ids):
        raise SchemaError("/val_camera_ids", "expected a list of camera ids")
    for v in val_cam_ids:
        if v not in ids:
            raise SchemaError("/val_camera_ids", f"unknown camera id {v!r}")

    frames = []
    for i, fr in enumerate(_want(doc, "frames", list, "")):
        ptr = f"/frames/{i}"
        if not isinstance(fr, dict):
            raise SchemaError(ptr, "frame entry must be an object")
        split = fr.get("split")
        if split not in (None, "train", "val"):
            raise SchemaError(f"{ptr}/split", f"bad split tag {split!r}")
        images = _want(fr, "images", dict, ptr)
        poses_raw = _want(fr, "poses", dict, ptr)
        masks = fr.get("masks", {})
        poses = {}
        for cid in images:
            if cid not in ids:
                raise SchemaError(f"{ptr}/images/{cid}", "unknown camera id")
            if cid not in poses_raw:
                raise SchemaError(f"{ptr}/poses/{cid}", "missing pose for camera")
        for cid, pose in poses_raw.items():
            if not isinstance(pose, dict):
                raise SchemaError(f"{ptr}/poses/{cid}", "pose must be an object")
            r = _matrix(_want(pose, "rotation", list, f"{ptr}/poses/{cid}"),
                        (3, 3), f"{ptr}/poses/{cid}/rotation")
            t = _matrix(_want(pose, "translation", list, f"{ptr}/poses/{cid}"),
                        (3,), f"{ptr}/poses/{cid}/translation")
            try:
                CameraModel(np.eye(3), r, t, (1, 1))
            except InvalidCamera as exc:
                raise SchemaError(f"{ptr}/poses/{cid}/rotation", str(exc)) from exc
            poses[cid] = (r, t)
        frames.append(FrameSpec(
            timestamp=float(fr.get("timestamp", i)),
            split=split,
            images=dict(images),
            masks=dict(masks),
            poses=poses,
            keypoints=fr.get("keypoints"),
        ))

    manifest = DatasetManifest(
        near=near, far=far, host_camera_id=host_id, cameras=cameras,
        frames=frames, shared_intrinsics=shared, val_camera_ids=list(val_cam_ids),
        base_dir=p.parent, version=version,
    )

    if auto_split and all(fr.split is None for fr in frames):
        for i, fr in enumerate(frames):
            fr.split = "val" if i % AUTO_SPLIT_PERIOD == AUTO_SPLIT_PHASE else "train"

    if check_files:
        missing = []
        for fr in frames:
            for rel in list(fr.images.values()) + list(fr.masks.values()):
                if not manifest.resolve(rel).exists():
                    missing.append(manifest.resolve(rel))
            if fr.keypoints and not manifest.resolve(fr.keypoints).exists():
                missing.append(manifest.resolve(fr.keypoints))
        if missing:
            raise MissingFile(missing)
    return manifest


def manifest_to_json(manifest: DatasetManifest) -> str:
    """Canonical serialization: load(save(load(x))) is a fixed point."""
    doc = {
        "version": manifest.version,
        "near": manifest.near,
        "far": manifest.far,
        "host_camera_id": manifest.host_camera_id,
        "shared_intrinsics": manifest.shared_intrinsics,
        "val_camera_ids": sorted(manifest.val_camera_ids),
        "cameras": [
            {
                "id": c.id,
                "intrinsics": c.intrinsics.tolist(),
                "image_size": [int(c.image_size[0]), int(c.image_size[1])],
            }
            for c in manifest.cameras
        ],
        "frames": [
            {
                "timestamp": fr.timestamp,
                "split": fr.split,
                "images": dict(sorted(fr.images.items())),
                "masks": dict(sorted(fr.masks.items())),
                "poses": {
                    cid: {
                        "rotation": r.tolist(),
                        "translation": t.tolist(),
                    }
                    for cid, (r, t) in sorted(fr.poses.items())
                },
                "keypoints": fr.keypoints,
            }
            for fr in manifest.frames
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def save_manifest(manifest: DatasetManifest, path):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(manifest_to_json(manifest))


def build_views(manifest: DatasetManifest, frame_index):
    """Assemble (views, host_camera, near, far) for one frame's fit.

    Camera ids map to exposure slots in declaration order; the host camera is
    slot 0 (the exposure gauge reference) and is never pose-refined.
    View-level holdout comes from val_camera_ids.
    """
    frame = manifest.frames[frame_index]
    order = [manifest.host_camera_id] + [
        c.id for c in manifest.cameras if c.id != manifest.host_camera_id
    ]
    slot = {cid: i for i, cid in enumerate(order)}
    views = []
    host_camera = None
    for cid in sorted(frame.images):
        cam = manifest.camera_model(cid, frame)
        image = load_png(manifest.resolve(frame.images[cid]))
        mask = None
        if cid in frame.masks:
            mask = load_mask(manifest.resolve(frame.masks[cid]))
        views.append(ViewObservation(
            camera=cam, image=image, mask=mask, camera_index=slot[cid],
            refine=cid != manifest.host_camera_id,
            is_val=cid in manifest.val_camera_ids,
            name=cid,
        ))
        if cid == manifest.host_camera_id:
            host_camera = cam
    if host_camera is None:
        raise SchemaError(f"/frames/{frame_index}/images",
                          "frame has no image for the host camera")
    return views, host_camera, manifest.near, manifest.far
