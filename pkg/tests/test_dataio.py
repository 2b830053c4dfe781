import json

import numpy as np
import pytest

from mpiforge.container import MAGIC, mpi_equal, parse_mpi, read_mpi, write_mpi
from mpiforge.errors import (
    BadMagic,
    BadPath,
    ContainerError,
    MissingFile,
    SchemaError,
    TruncatedPayload,
    VersionUnsupported,
)
from mpiforge.imageio import load_png, save_png
from mpiforge.manifest import (
    build_views,
    load_manifest,
    manifest_to_json,
    save_manifest,
)
from mpiforge.rendering import apply_exposure, render_forward
from mpiforge.synthetic import SynthSpec, synth_scene
from mpiforge.webexport import export_web, import_web
from support import random_mpi


class TestContainer:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        for i in range(5):
            mpi = random_mpi(rng, planes=4, k=2, size=(6, 5), padding=i % 3)
            mpi.depth_deltas += rng.uniform(-0.05, 0.05, size=4)
            mpi.refined_depths()
            path = tmp_path / f"m{i}.mpi"
            write_mpi(mpi, path)
            back = read_mpi(path)
            assert mpi_equal(back, mpi)
            # a second write of the reloaded mpi is byte-identical
            write_mpi(back, tmp_path / "again.mpi")
            assert (tmp_path / "again.mpi").read_bytes() == path.read_bytes()

    def test_bad_magic(self, tmp_path):
        mpi = random_mpi(np.random.default_rng(1), planes=2, k=1, size=(4, 4))
        path = tmp_path / "m.mpi"
        write_mpi(mpi, path)
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        with pytest.raises(BadMagic):
            parse_mpi(bytes(data))

    def test_unknown_version(self, tmp_path):
        mpi = random_mpi(np.random.default_rng(2), planes=2, k=1, size=(4, 4))
        path = tmp_path / "m.mpi"
        write_mpi(mpi, path)
        data = bytearray(path.read_bytes())
        data[4:8] = (99).to_bytes(4, "little")
        with pytest.raises(VersionUnsupported):
            parse_mpi(bytes(data))

    def test_truncated_payload(self, tmp_path):
        mpi = random_mpi(np.random.default_rng(3), planes=2, k=1, size=(4, 4))
        path = tmp_path / "m.mpi"
        write_mpi(mpi, path)
        data = path.read_bytes()
        with pytest.raises(TruncatedPayload):
            parse_mpi(data[:-10])
        with pytest.raises(TruncatedPayload):
            parse_mpi(data + b"\x00")

    def test_header_declaring_huge_dims(self, tmp_path):
        mpi = random_mpi(np.random.default_rng(4), planes=2, k=1, size=(4, 4))
        path = tmp_path / "m.mpi"
        write_mpi(mpi, path)
        data = bytearray(path.read_bytes())
        data[12:16] = (192).to_bytes(4, "little")  # D=192, payload unchanged
        with pytest.raises(ContainerError):
            parse_mpi(bytes(data))

    def test_missing_file(self, tmp_path):
        with pytest.raises(BadPath):
            read_mpi(tmp_path / "nope.mpi")

    def test_fuzzed_headers_raise_cleanly(self, tmp_path):
        mpi = random_mpi(np.random.default_rng(5), planes=4, k=2, size=(5, 4))
        path = tmp_path / "m.mpi"
        write_mpi(mpi, path)
        base = path.read_bytes()
        rng = np.random.default_rng(6)
        survived = 0
        for _ in range(1000):
            data = bytearray(base)
            for _ in range(rng.integers(1, 6)):
                pos = int(rng.integers(0, min(len(data), 220)))
                data[pos] = int(rng.integers(0, 256))
            try:
                parse_mpi(bytes(data))
                survived += 1  # mutation happened to stay valid
            except ContainerError:
                pass
        # parsing either succeeds or raises ContainerError; nothing else


def minimal_manifest_doc(tmp_path):
    save_png(tmp_path / "img.png", np.zeros((4, 4, 3)))
    return {
        "version": 1,
        "near": 1.0,
        "far": 3.0,
        "host_camera_id": "cam00",
        "cameras": [
            {"id": "cam00", "intrinsics": [[4.0, 0, 2], [0, 4.0, 2], [0, 0, 1]],
             "image_size": [4, 4]}
        ],
        "frames": [
            {
                "timestamp": 0.0,
                "images": {"cam00": "img.png"},
                "poses": {"cam00": {"rotation": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
                                    "translation": [0, 0, 0]}},
            }
        ],
    }


class TestManifest:
    def test_minimal_load(self, tmp_path):
        doc = minimal_manifest_doc(tmp_path)
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        m = load_manifest(tmp_path / "manifest.json")
        assert m.host_camera_id == "cam00"
        assert len(m.frames) == 1
        views, host, near, far = build_views(m, 0)
        assert len(views) == 1 and near == 1.0 and far == 3.0
        assert views[0].camera_index == 0 and not views[0].refine

    def test_missing_mask_file(self, tmp_path):
        doc = minimal_manifest_doc(tmp_path)
        doc["frames"][0]["masks"] = {"cam00": "missing_mask.png"}
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(MissingFile) as err:
            load_manifest(tmp_path / "manifest.json")
        assert "missing_mask.png" in str(err.value)

    def test_auto_split_tags_one_in_sixteen(self, tmp_path):
        doc = minimal_manifest_doc(tmp_path)
        frame = doc["frames"][0]
        doc["frames"] = [dict(frame, timestamp=float(i)) for i in range(32)]
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        m = load_manifest(tmp_path / "manifest.json", auto_split=True)
        assert sum(1 for f in m.frames if f.split == "val") == 2

    def test_schema_error_carries_pointer(self, tmp_path):
        doc = minimal_manifest_doc(tmp_path)
        del doc["frames"][0]["poses"]["cam00"]
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(SchemaError) as err:
            load_manifest(tmp_path / "manifest.json")
        assert "/frames/0/poses/cam00" in str(err.value)

    def test_rejects_non_orthonormal_pose(self, tmp_path):
        doc = minimal_manifest_doc(tmp_path)
        doc["frames"][0]["poses"]["cam00"]["rotation"] = [
            [1.1, 0, 0], [0, 1, 0], [0, 0, 1]
        ]
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(SchemaError):
            load_manifest(tmp_path / "manifest.json")

    def test_shared_intrinsics_enforced(self, tmp_path):
        doc = minimal_manifest_doc(tmp_path)
        cam2 = dict(doc["cameras"][0], id="cam01")
        cam2["intrinsics"] = [[5.0, 0, 2], [0, 5.0, 2], [0, 0, 1]]
        doc["cameras"].append(cam2)
        doc["shared_intrinsics"] = True
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(SchemaError):
            load_manifest(tmp_path / "manifest.json")

    def test_save_load_fixed_point(self, tmp_path):
        doc = minimal_manifest_doc(tmp_path)
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        m1 = load_manifest(tmp_path / "manifest.json")
        save_manifest(m1, tmp_path / "canonical.json")
        m2 = load_manifest(tmp_path / "canonical.json")
        assert manifest_to_json(m1) == manifest_to_json(m2)


class TestSynthScene:
    def test_deterministic_bytes(self, tmp_path):
        spec = SynthSpec(cameras=3, image_size=(24, 24), padding=4)
        r1 = synth_scene(7, spec, tmp_path / "a")
        r2 = synth_scene(7, spec, tmp_path / "b")
        for rel in ["manifest.json", "gt.mpi", "gt.json", "images/cam00.png",
                    "masks/cam02.png"]:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
        assert np.array_equal(r1.mpi.raw_alphas, r2.mpi.raw_alphas)

    def test_noiseless_dataset_matches_ground_truth_render(self, tmp_path):
        spec = SynthSpec(cameras=3, image_size=(20, 20), padding=4)
        result = synth_scene(3, spec, tmp_path)
        m = load_manifest(tmp_path / "manifest.json")
        frame = m.frames[0]
        for cid in frame.images:
            cam = m.camera_model(cid, frame)
            out, _, _, _ = render_forward(result.mpi, cam)
            rendered = out.reshape(20, 20, 3)
            stored = load_png(m.resolve(frame.images[cid]))
            # stored PNGs are the quantized renders, bit-exactly
            np.testing.assert_array_equal(
                stored, np.round(rendered * 255) / 255.0
            )

    def test_exposure_and_pose_noise_recorded(self, tmp_path):
        spec = SynthSpec(cameras=4, image_size=(16, 16), padding=2,
                         exposure="random", pose_noise_rot_deg=0.5,
                         pose_noise_trans_frac=0.005)
        result = synth_scene(11, spec, tmp_path)
        assert np.all(result.exposure.beta[0] == 0.0)
        assert np.any(result.exposure.beta[1:] != 0.0)
        m = load_manifest(tmp_path / "manifest.json")
        frame = m.frames[0]
        # training cameras (not host, not val) carry perturbed poses
        noisy = 0
        for cid, true_cam in result.true_cameras.items():
            r, t = frame.poses[cid]
            if not np.allclose(r, true_cam.rotation):
                noisy += 1
                assert cid != "cam00" and cid not in m.val_camera_ids
        assert noisy == spec.cameras - 1 - spec.val_cameras

    def test_mask_marks_foreground_planes(self, tmp_path):
        spec = SynthSpec(cameras=2, image_size=(24, 24), padding=4, coverage=0.4)
        result = synth_scene(5, spec, tmp_path)
        m = load_manifest(tmp_path / "manifest.json")
        views, _, _, _ = build_views(m, 0)
        frac = np.mean([v.mask.mean() for v in views])
        assert 0.1 < frac < 0.9


class TestWebExport:
    def test_index_lists_frames_and_layers(self, tmp_path):
        rng = np.random.default_rng(8)
        mpi = random_mpi(rng, planes=4, k=2, size=(10, 8), padding=2)
        index = export_web([("f0000", mpi)], tmp_path)
        assert len(index["frames"]) == 1
        assert index["planes"] == 4 and index["sharing"] == 2
        assert (tmp_path / "index.json").exists()
        assert (tmp_path / "f0000_alpha.png").exists()
        assert (tmp_path / "f0000_tex.png").exists()

    def test_deterministic_export(self, tmp_path):
        rng = np.random.default_rng(9)
        mpi = random_mpi(rng, planes=4, k=2, size=(10, 8))
        export_web([("f", mpi)], tmp_path / "a")
        export_web([("f", mpi)], tmp_path / "b")
        for rel in ["index.json", "f_alpha.png", "f_tex.png"]:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_reimport_renders_within_quantization_bound(self, tmp_path):
        rng = np.random.default_rng(10)
        mpi = random_mpi(rng, planes=3, k=1, size=(16, 16), padding=3)
        export_web([("f", mpi)], tmp_path)
        (name, back), = import_web(tmp_path)
        from support import random_camera

        for _ in range(3):
            cam = random_camera(rng, size=(16, 16), focal=14.0, radius=0.15)
            a, _, _, _ = render_forward(mpi, cam)
            b, _, _, _ = render_forward(back, cam)
            assert np.abs(a - b).max() <= 2.0 / 255.0
