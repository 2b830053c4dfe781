"""Regenerate the viewer test fixtures from the native engine.

Writes frontend/test/fixtures/: a small exported bundle (PNG atlases +
index.json) plus arrays.json carrying the quantized layer content, native
renders at the host and one offset viewpoint, the offset camera, and a few
homography matrices for cross-language convention checks.

Run from the repository root:  python3 frontend/scripts/make_fixtures.py
"""

import json
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[2] / "src"))

from mpiforge.geometry import CameraModel, look_at  # noqa: E402
from mpiforge.rendering import render_view, render_depth, apply_exposure  # noqa: E402
from mpiforge.synthetic import SynthSpec, make_ground_truth_mpi  # noqa: E402
from mpiforge.webexport import export_web, import_web  # noqa: E402

OUT = pathlib.Path(__file__).resolve().parents[1] / "test" / "fixtures"


def camera_doc(cam):
    return {
        "intrinsics": cam.intrinsics.tolist(),
        "rotation": cam.rotation.tolist(),
        "translation": cam.translation.tolist(),
        "image_size": list(cam.image_size),
    }


def main():
    rng = np.random.default_rng(2024)
    spec = SynthSpec(planes=3, sharing=1, near=1.6, far=3.4,
                     image_size=(24, 24), padding=6, coverage=0.5)
    mpi = make_ground_truth_mpi(rng, spec)
    export_web([("f0000", mpi)], OUT / "bundle")
    (_, quantized), = import_web(OUT / "bundle")

    host = mpi.host_camera
    mid = float(mpi.current_depths()[1])
    offset = look_at((0.22, -0.12, 0.05), (0.0, 0.0, mid), (0.0, -1.0, 0.0),
                     host.intrinsics, host.image_size)

    def native(cam):
        img = render_view(quantized, cam, precision="f32", early_exit=1e-4)
        return np.asarray(img.pixels, dtype=np.float64)

    beta = np.array([0.03, -0.02, 0.0])
    gamma = np.array([1.08, 0.94, 1.0])
    doc = {
        "planes": mpi.plane_count,
        "sharing": mpi.sharing_factor,
        "canvas_size": list(mpi.canvas_size),
        "render_size": list(host.image_size),
        "padding": mpi.padding,
        "depths": mpi.current_depths().tolist(),
        "host_camera": camera_doc(host),
        "offset_camera": camera_doc(offset),
        "alphas": np.round(quantized.alphas * 255).astype(int).ravel().tolist(),
        "textures": np.round(quantized.textures * 255).astype(int).ravel().tolist(),
        "native_host": native(host).ravel().round(7).tolist(),
        "native_offset": native(offset).ravel().round(7).tolist(),
        "native_offset_exposed": apply_exposure(native(offset), beta, gamma)
            .ravel().round(7).tolist(),
        "exposure": {"beta": beta.tolist(), "gamma": gamma.tolist()},
        "native_depth_host": render_depth(quantized, host).ravel().round(7).tolist(),
        "homography_cases": [],
    }
    for depth in (1.6, 2.5, 3.4):
        from mpiforge.rendering import _canvas_camera
        from mpiforge.geometry import homography_raw

        H = homography_raw(_canvas_camera(mpi), offset, depth)
        doc["homography_cases"].append({
            "depth": depth,
            "target": "offset",
            "matrix": (H / H[2, 2]).tolist(),
        })
    (OUT / "arrays.json").write_text(json.dumps(doc) + "\n")
    print(f"fixtures written under {OUT}")


if __name__ == "__main__":
    main()
