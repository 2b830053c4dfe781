import numpy as np
import pytest

from mpiforge.errors import MpiForgeError, NeverVisible
from mpiforge.motion import (
    VIRTUAL_ROOT,
    KeypointSet,
    SkeletonTree,
    default_body_tree,
    default_hand_tree,
    limb_lengths,
    nearest_face_frame,
    rasterize_pose,
    retarget_pose,
    transfer_body,
    transfer_face,
    transfer_hand,
    transfer_tree,
)


def chain_tree(n):
    """0 -> 1 -> ... -> n-1 rooted at node 0."""
    return SkeletonTree(
        edges=tuple((i, i + 1) for i in range(n - 1)),
        root_kind="node", root_nodes=(0,), landmark_count=n,
    )


def random_keypoints(rng, scale=100.0):
    return KeypointSet(
        face=rng.uniform(0, scale, size=(468, 2)),
        body=rng.uniform(0, scale, size=(33, 2)),
        hands=rng.uniform(0, scale, size=(2, 21, 2)),
        timestamp=float(rng.uniform(0, 10)),
    )


def reference_transfer(points, tree, lengths, anchor):
    """Test-local reference: plain recursive placement, unit driving directions."""
    eidx = tree.edge_index()
    children = {}
    for p, c in tree.edges:
        children.setdefault(p, []).append(c)
    out = {}

    def drive_pos(i):
        if i == VIRTUAL_ROOT:
            l, r = tree.root_nodes
            return 0.5 * (points[l] + points[r])
        return points[i]

    def place(i, pos):
        out[i] = pos
        for c in children.get(i, []):
            v = drive_pos(c) - drive_pos(i)
            v = v / np.linalg.norm(v)
            place(c, pos + v * lengths[eidx[(i, c)]])

    start = VIRTUAL_ROOT if tree.root_kind == "midpoint" else tree.root_nodes[0]
    place(start, np.asarray(anchor, dtype=np.float64))
    return out


class TestSkeletonTree:
    def test_default_trees_load(self):
        body = default_body_tree()
        hand = default_hand_tree()
        assert body.landmark_count == 33
        assert len({c for _, c in body.edges}) == 33
        assert hand.landmark_count == 21
        assert hand.root_nodes == (0,)
        assert len(hand.edges) == 20

    def test_rejects_double_parent(self):
        with pytest.raises(MpiForgeError):
            SkeletonTree(edges=((0, 1), (2, 1)), root_kind="node",
                         root_nodes=(0,), landmark_count=3)

    def test_rejects_unreachable_edges(self):
        with pytest.raises(MpiForgeError):
            SkeletonTree(edges=((1, 2),), root_kind="node",
                         root_nodes=(0,), landmark_count=3)


class TestLimbLengths:
    def test_three_four_five(self):
        tree = chain_tree(2)
        pts = np.array([[[0.0, 0.0], [3.0, 4.0]]])
        np.testing.assert_allclose(limb_lengths(pts, None, tree), [5.0])

    def test_maximum_over_frames(self):
        tree = chain_tree(2)
        pts = np.array([[[0.0, 0.0], [2.0, 0.0]], [[0.0, 0.0], [5.0, 0.0]]])
        np.testing.assert_allclose(limb_lengths(pts, None, tree), [5.0])

    def test_invisible_frames_excluded(self):
        tree = chain_tree(2)
        pts = np.array([[[0.0, 0.0], [9.0, 0.0]], [[0.0, 0.0], [4.0, 0.0]]])
        vis = np.array([[True, False], [True, True]])
        np.testing.assert_allclose(limb_lengths(pts, vis, tree), [4.0])

    def test_never_visible(self):
        tree = chain_tree(2)
        pts = np.zeros((2, 2, 2))
        vis = np.array([[True, False], [False, True]])
        with pytest.raises(NeverVisible):
            limb_lengths(pts, vis, tree)


class TestTransferTree:
    def test_identity_transfer_reproduces_body(self):
        rng = np.random.default_rng(0)
        tree = default_body_tree()
        kps = random_keypoints(rng)
        lengths = limb_lengths(kps.body[None], None, tree)
        anchor, _ = tree.root_position(kps.body)
        res = transfer_body(kps, lengths, tree, anchor)
        np.testing.assert_allclose(res.points, kps.body, atol=1e-9)
        assert res.degenerate_edges == []

    def test_single_edge_unit_case(self):
        tree = chain_tree(2)
        driving = np.array([[0.0, 0.0], [0.0, 2.0]])  # direction (0,1), length 2
        res = transfer_tree(driving, None, np.array([1.0]), tree, (0.0, 0.0))
        np.testing.assert_allclose(res.points[1], [0.0, 1.0])

    def test_matches_reference_bfs(self):
        rng = np.random.default_rng(1)
        tree = default_body_tree()
        for _ in range(10):
            kps = random_keypoints(rng)
            source = random_keypoints(rng)
            lengths = limb_lengths(source.body[None], None, tree)
            anchor = rng.uniform(0, 50, size=2)
            res = transfer_body(kps, lengths, tree, anchor)
            ref = reference_transfer(kps.body, tree, lengths, anchor)
            for i in range(33):
                np.testing.assert_allclose(res.points[i], ref[i], atol=1e-9)

    def test_length_and_direction_preservation(self):
        rng = np.random.default_rng(2)
        tree = default_body_tree()
        for _ in range(50):
            driving = random_keypoints(rng)
            lengths = rng.uniform(0.5, 20.0, size=len(tree.edges))
            res = transfer_body(driving, lengths, tree, rng.uniform(0, 10, 2))
            eidx = tree.edge_index()
            out_root = 0.5 * (res.points[11] + res.points[12])
            drv_root = 0.5 * (driving.body[11] + driving.body[12])
            for (p, c) in tree.edges:
                ppos = out_root if p == VIRTUAL_ROOT else res.points[p]
                dpos = drv_root if p == VIRTUAL_ROOT else driving.body[p]
                edge = res.points[c] - ppos
                dedge = driving.body[c] - dpos
                if p == VIRTUAL_ROOT:
                    continue  # root edges interlock through the output midpoint
                assert abs(np.linalg.norm(edge) - lengths[eidx[(p, c)]]) < 1e-9
                cross = edge[0] * dedge[1] - edge[1] * dedge[0]
                assert abs(cross) / (np.linalg.norm(edge) * np.linalg.norm(dedge)) < 1e-9
                assert np.dot(edge, dedge) > 0

    def test_translation_equivariance(self):
        rng = np.random.default_rng(3)
        tree = default_body_tree()
        kps = random_keypoints(rng)
        lengths = rng.uniform(1, 10, size=len(tree.edges))
        anchor = np.array([5.0, 5.0])
        a = transfer_body(kps, lengths, tree, anchor)
        shifted = KeypointSet(face=kps.face, body=kps.body + 17.5,
                              hands=kps.hands, timestamp=kps.timestamp)
        b = transfer_body(shifted, lengths, tree, anchor)
        np.testing.assert_allclose(a.points, b.points, atol=1e-9)

    def test_degenerate_limb_inherits_parent(self):
        tree = chain_tree(3)
        driving = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])  # zero-length edge
        res = transfer_tree(driving, None, np.array([1.0, 1.0]), tree, (0.0, 0.0))
        assert res.degenerate_edges == [(1, 2)]
        np.testing.assert_allclose(res.points[2], res.points[1])
        assert not res.visible[2]

    def test_literal_mode_keeps_foreshortening(self):
        tree = chain_tree(2)
        driving = np.array([[0.0, 0.0], [1.0, 0.0]])  # current apparent length 1
        driving_max = np.array([2.0])                 # sequence maximum
        source_len = np.array([4.0])
        literal = transfer_tree(driving, None, source_len, tree, (0, 0),
                                mode="literal", driving_lengths=driving_max)
        exact = transfer_tree(driving, None, source_len, tree, (0, 0))
        np.testing.assert_allclose(literal.points[1], [2.0, 0.0])
        np.testing.assert_allclose(exact.points[1], [4.0, 0.0])

    def test_hand_transfer_identity(self):
        rng = np.random.default_rng(4)
        tree = default_hand_tree()
        hand = rng.uniform(0, 50, size=(21, 2))
        lengths = limb_lengths(hand[None], None, tree)
        res = transfer_hand(hand, None, lengths, tree, hand[0])
        np.testing.assert_allclose(res.points, hand, atol=1e-9)


class TestTransferFace:
    def test_current_equals_nearest_gives_source(self):
        rng = np.random.default_rng(5)
        s = rng.uniform(size=(468, 2))
        t = rng.uniform(size=(468, 2))
        out = transfer_face(s, t[None], t)
        np.testing.assert_allclose(out, s)

    def test_sequence_of_source_itself(self):
        rng = np.random.default_rng(6)
        s = rng.uniform(size=(468, 2))
        t = rng.uniform(size=(468, 2))
        out = transfer_face(s, s[None], t)
        np.testing.assert_allclose(out, t)

    def test_argmin_matches_exhaustive_scan(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            s = rng.uniform(size=(30, 2))
            seq = rng.uniform(size=(8, 30, 2))
            got = nearest_face_frame(s, seq)
            dists = []
            for f in range(8):
                a = s - s.mean(0)
                b = seq[f] - seq[f].mean(0)
                dists.append(np.mean(np.sum((a - b) ** 2, axis=1)))
            assert got == int(np.argmin(dists))

    def test_centered_metric_ignores_translation(self):
        rng = np.random.default_rng(8)
        s = rng.uniform(size=(20, 2))
        seq = np.stack([s + 50.0, rng.uniform(size=(20, 2))])
        assert nearest_face_frame(s, seq, metric="centered") == 0

    def test_offset_equivariance(self):
        rng = np.random.default_rng(9)
        s = rng.uniform(size=(20, 2))
        seq = rng.uniform(size=(5, 20, 2))
        t = rng.uniform(size=(20, 2))
        base = transfer_face(s, seq, t)
        shifted = transfer_face(s, seq, t + 3.25)
        np.testing.assert_allclose(shifted, base + 3.25)


class TestRasterize:
    def test_empty_visibility_gives_blank_canvas(self):
        rng = np.random.default_rng(10)
        kps = random_keypoints(rng, scale=30)
        kps.face_visible[:] = False
        kps.body_visible[:] = False
        kps.hands_visible[:] = False
        img = rasterize_pose(kps, (32, 32))
        assert np.all(img == 0)

    def test_single_point_disc(self):
        kps = random_keypoints(np.random.default_rng(11), scale=32)
        kps.face_visible[:] = False
        kps.body_visible[:] = False
        kps.hands_visible[:] = False
        kps.face[0] = (16.0, 16.0)
        kps.face_visible[0] = True
        img = rasterize_pose(kps, (32, 32))
        assert np.any(img[16, 16] > 0)
        assert np.all(img[0, 0] == 0)

    def test_deterministic(self):
        rng = np.random.default_rng(12)
        kps = random_keypoints(rng, scale=40)
        a = rasterize_pose(kps, (48, 48))
        b = rasterize_pose(kps, (48, 48))
        np.testing.assert_array_equal(a, b)

    def test_offcanvas_points_clipped(self):
        kps = random_keypoints(np.random.default_rng(13), scale=20)
        kps.body[:] = (-500.0, 900.0)
        img = rasterize_pose(kps, (24, 24))
        assert img.shape == (24, 24, 3)


class TestRetargetPose:
    def test_self_retarget_is_identity(self):
        # identity needs the driving frame's own limb lengths, so the
        # sequence holds one pose (max-over-frames otherwise rescales limbs)
        rng = np.random.default_rng(14)
        kps = random_keypoints(rng)
        kps.body[15] = kps.hands[0, 0]  # hand wrists coincide with body wrists,
        kps.body[16] = kps.hands[1, 0]  # as in real capture data
        seq = [kps]
        out = retarget_pose(seq, seq, driving_index=0, anchor_index=0)
        np.testing.assert_allclose(out.body, kps.body, atol=1e-9)
        np.testing.assert_allclose(out.hands, kps.hands, atol=1e-8)

    def test_retarget_keeps_source_limb_lengths(self):
        rng = np.random.default_rng(16)
        source = [random_keypoints(rng) for _ in range(2)]
        driving = [random_keypoints(rng) for _ in range(3)]
        tree = default_body_tree()
        out = retarget_pose(source, driving, driving_index=2, anchor_index=0)
        lengths = limb_lengths(np.stack([k.body for k in source]), None, tree)
        eidx = tree.edge_index()
        for p, c in tree.edges:
            if p == VIRTUAL_ROOT:
                continue
            got = np.linalg.norm(out.body[c] - out.body[p])
            assert abs(got - lengths[eidx[(p, c)]]) < 1e-9

    def test_keypoints_round_trip(self, tmp_path):
        from mpiforge.motion import load_keypoints, save_keypoints

        kps = random_keypoints(np.random.default_rng(15))
        save_keypoints(kps, tmp_path / "kp.json")
        back = load_keypoints(tmp_path / "kp.json")
        np.testing.assert_array_equal(back.face, kps.face)
        np.testing.assert_array_equal(back.hands, kps.hands)
        assert back.timestamp == kps.timestamp
