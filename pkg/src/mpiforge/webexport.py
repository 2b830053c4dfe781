"""Web viewer bundle: PNG atlases plus a JSON index.

Per frame, alpha planes are packed as tiles into the alpha channel of one
RGBA atlas and the shared RGB textures (deduplicated, one tile per texture
group) into a second atlas. The index records depths per frame, the host
camera, plane/sharing counts, and the atlas grids. This file layout is the
contract consumed by the browser viewer; schema in docs/formats.md.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .geometry import CameraModel
from .imageio import load_png, save_png
from .mpi import Mpi

BUNDLE_VERSION = 1


def _grid(count):
    cols = int(math.ceil(math.sqrt(count)))
    rows = int(math.ceil(count / cols))
    return cols, rows


def _pack_atlas(layers, cols, rows, channels):
    n, th, tw = layers.shape[0], layers.shape[1], layers.shape[2]
    atlas = np.zeros((rows * th, cols * tw, channels))
    for i in range(n):
        r, c = divmod(i, cols)
        tile = layers[i]
        if channels == 4:
            atlas[r * th:(r + 1) * th, c * tw:(c + 1) * tw, 3] = tile
            atlas[r * th:(r + 1) * th, c * tw:(c + 1) * tw, :3] = 1.0
        else:
            atlas[r * th:(r + 1) * th, c * tw:(c + 1) * tw] = tile
    return atlas


def _unpack_atlas(atlas, count, cols, th, tw, alpha_channel):
    out = []
    for i in range(count):
        r, c = divmod(i, cols)
        tile = atlas[r * th:(r + 1) * th, c * tw:(c + 1) * tw]
        out.append(tile[..., 3] if alpha_channel else tile[..., :3])
    return np.stack(out)


def export_web(frames, out_dir):
    """Write a viewer bundle for [(frame name, Mpi), ...] sharing one host camera.

    Returns the index dictionary.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    first = frames[0][1]
    cam = first.host_camera
    d, k = first.plane_count, first.sharing_factor
    wc, hc = first.canvas_size
    a_cols, a_rows = _grid(d)
    t_cols, t_rows = _grid(d // k)

    index_frames = []
    for name, mpi in frames:
        if (mpi.plane_count, mpi.sharing_factor, mpi.canvas_size) != (d, k, (wc, hc)):
            raise SchemaError("/frames", "all frames must share D, K and canvas size")
        alpha_rel = f"{name}_alpha.png"
        tex_rel = f"{name}_tex.png"
        save_png(out / alpha_rel, _pack_atlas(mpi.alphas, a_cols, a_rows, 4))
        save_png(out / tex_rel, _pack_atlas(mpi.textures, t_cols, t_rows, 3))
        index_frames.append({
            "name": name,
            "depths": mpi.current_depths().tolist(),
            "alpha_atlas": alpha_rel,
            "texture_atlas": tex_rel,
        })

    index = {
        "version": BUNDLE_VERSION,
        "planes": d,
        "sharing": k,
        "canvas_size": [wc, hc],
        "render_size": [cam.image_size[0], cam.image_size[1]],
        "padding": first.padding,
        "camera": {
            "intrinsics": cam.intrinsics.tolist(),
            "rotation": cam.rotation.tolist(),
            "translation": cam.translation.tolist(),
        },
        "alpha_grid": {"cols": a_cols, "rows": a_rows},
        "texture_grid": {"cols": t_cols, "rows": t_rows},
        "frames": index_frames,
    }
    (out / "index.json").write_text(json.dumps(index, sort_keys=True, indent=2) + "\n")
    return index


def import_web(bundle_dir):
    """Re-import an exported bundle as [(name, Mpi)] (8-bit quantized content)."""
    bundle = Path(bundle_dir)
    index = json.loads((bundle / "index.json").read_text())
    if index.get("version") != BUNDLE_VERSION:
        raise SchemaError("/version", f"unsupported bundle version {index.get('version')}")
    d = index["planes"]
    k = index["sharing"]
    wc, hc = index["canvas_size"]
    w, h = index["render_size"]
    cam = CameraModel(
        np.asarray(index["camera"]["intrinsics"]),
        np.asarray(index["camera"]["rotation"]),
        np.asarray(index["camera"]["translation"]),
        (w, h),
    )
    frames = []
    for fr in index["frames"]:
        alphas = _unpack_atlas(load_png(bundle / fr["alpha_atlas"]), d,
                               index["alpha_grid"]["cols"], hc, wc, True)
        textures = _unpack_atlas(load_png(bundle / fr["texture_atlas"]), d // k,
                                 index["texture_grid"]["cols"], hc, wc, False)
        frames.append((fr["name"], Mpi(
            alphas, textures, np.asarray(fr["depths"], dtype=np.float64), cam, k,
            padding=index["padding"],
        )))
    return frames
