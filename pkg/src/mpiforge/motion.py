"""Keypoint motion transfer between characters.

Face: find the driving frame t' whose landmarks are most similar to the
source reference s (centroid-aligned mean squared distance by default), then
move the source by the driving offset: output = s + t - t'.

Body and hands: treat the landmarks as a tree (body rooted at the virtual
midpoint of the shoulders, hands at the wrist) and rebuild the skeleton
breadth-first, giving every limb the driving limb's direction and the source
limb's length. Limb lengths are the per-edge maxima over all frames where
both endpoints are visible.

The default transfer normalizes each driving limb by its per-frame vector
norm, so transferred limbs carry the exact source length under any
foreshortening; mode="literal" instead divides by the per-sequence maximum
driving length, which preserves apparent shortening of out-of-plane limbs at
the cost of exact lengths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import MpiForgeError, NeverVisible, SizeMismatch

VIRTUAL_ROOT = -1
DEGENERATE_LIMB_EPS = 1e-6

FACE_LANDMARKS = 468
BODY_LANDMARKS = 33
HAND_LANDMARKS = 21
LEFT_WRIST = 15   # body landmark anchoring the left hand tree
RIGHT_WRIST = 16


@dataclass
class SkeletonTree:
    """Edge list over keypoints, rooted at a landmark or a virtual midpoint."""

    edges: tuple                 # ((parent, child), ...); VIRTUAL_ROOT parents allowed
    root_kind: str               # "node" | "midpoint"
    root_nodes: tuple            # (index,) or (left, right)
    landmark_count: int

    def __post_init__(self):
        children = [c for _, c in self.edges]
        if len(set(children)) != len(children):
            raise MpiForgeError("skeleton edges assign a node two parents")
        known = {VIRTUAL_ROOT} if self.root_kind == "midpoint" else {self.root_nodes[0]}
        order = []
        pending = list(self.edges)
        while pending:
            progress = False
            rest = []
            for p, c in pending:
                if p in known:
                    known.add(c)
                    order.append((p, c))
                    progress = True
                else:
                    rest.append((p, c))
            if not progress:
                raise MpiForgeError(f"skeleton edges are not a tree: unreachable {rest}")
            pending = rest
        object.__setattr__(self, "_bfs_edges", tuple(order))
        for p, c in self.edges:
            for idx in ((c,) if p == VIRTUAL_ROOT else (p, c)):
                if not 0 <= idx < self.landmark_count:
                    raise MpiForgeError(f"edge index {idx} outside landmark range")

    @property
    def bfs_edges(self):
        return self._bfs_edges

    def edge_index(self):
        return {e: i for i, e in enumerate(self.edges)}

    def root_position(self, points, visible=None):
        """Root location for one frame, plus whether it is computable."""
        if self.root_kind == "node":
            i = self.root_nodes[0]
            ok = visible is None or bool(visible[i])
            return np.asarray(points[i], dtype=np.float64), ok
        l, r = self.root_nodes
        ok = visible is None or bool(visible[l] and visible[r])
        return 0.5 * (np.asarray(points[l]) + np.asarray(points[r])), ok

    @classmethod
    def from_dict(cls, doc):
        root = doc["root"]
        if root["kind"] == "midpoint":
            nodes = (int(root["left"]), int(root["right"]))
        else:
            nodes = (int(root["index"]),)
        return cls(
            edges=tuple((int(p), int(c)) for p, c in doc["edges"]),
            root_kind=root["kind"],
            root_nodes=nodes,
            landmark_count=int(doc["landmark_count"]),
        )

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _load_packaged_tree(name):
    text = resources.files("mpiforge").joinpath(f"data/{name}").read_text()
    return SkeletonTree.from_dict(json.loads(text))


def default_body_tree() -> SkeletonTree:
    """33-landmark body topology, shoulders as the root's children."""
    return _load_packaged_tree("body_tree.json")


def default_hand_tree() -> SkeletonTree:
    """21-landmark hand topology rooted at the wrist."""
    return _load_packaged_tree("hand_tree.json")


@dataclass
class KeypointSet:
    """Face/body/hand 2D landmarks for one frame, with visibility flags."""

    face: np.ndarray             # (468, 2) pixels
    body: np.ndarray             # (33, 2)
    hands: np.ndarray            # (2, 21, 2), index 0 left, 1 right
    face_visible: np.ndarray = None
    body_visible: np.ndarray = None
    hands_visible: np.ndarray = None
    timestamp: float = 0.0

    def __post_init__(self):
        self.face = np.asarray(self.face, dtype=np.float64)
        self.body = np.asarray(self.body, dtype=np.float64)
        self.hands = np.asarray(self.hands, dtype=np.float64)
        if self.face.ndim != 2 or self.face.shape[1] != 2:
            raise SizeMismatch(f"face landmarks must be (N, 2), got {self.face.shape}")
        if self.body.ndim != 2 or self.body.shape[1] != 2:
            raise SizeMismatch(f"body landmarks must be (N, 2), got {self.body.shape}")
        if self.hands.ndim != 3 or self.hands.shape[0] != 2 or self.hands.shape[2] != 2:
            raise SizeMismatch(f"hands must be (2, N, 2), got {self.hands.shape}")
        for name in ("face", "body", "hands"):
            pts = getattr(self, name)
            vis = getattr(self, f"{name}_visible")
            if vis is None:
                vis = np.ones(pts.shape[:-1], dtype=bool)
            else:
                vis = np.asarray(vis, dtype=bool)
                if vis.shape != pts.shape[:-1]:
                    raise SizeMismatch(f"{name} visibility shape {vis.shape}")
            setattr(self, f"{name}_visible", vis)
            visible_pts = pts[vis]
            if visible_pts.size and not np.all(np.isfinite(visible_pts)):
                raise MpiForgeError(f"{name} contains non-finite visible landmarks")

    @classmethod
    def standard(cls, face, body, hands, **kw):
        ks = cls(face=face, body=body, hands=hands, **kw)
        if ks.face.shape[0] != FACE_LANDMARKS or ks.body.shape[0] != BODY_LANDMARKS \
                or ks.hands.shape[1] != HAND_LANDMARKS:
            raise SizeMismatch(
                f"standard topology is {FACE_LANDMARKS}/{BODY_LANDMARKS}/"
                f"2x{HAND_LANDMARKS} landmarks"
            )
        return ks

    def to_dict(self):
        return {
            "timestamp": self.timestamp,
            "face": self.face.tolist(),
            "face_visible": self.face_visible.tolist(),
            "body": self.body.tolist(),
            "body_visible": self.body_visible.tolist(),
            "hands": self.hands.tolist(),
            "hands_visible": self.hands_visible.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            face=np.asarray(doc["face"]), body=np.asarray(doc["body"]),
            hands=np.asarray(doc["hands"]),
            face_visible=doc.get("face_visible"),
            body_visible=doc.get("body_visible"),
            hands_visible=doc.get("hands_visible"),
            timestamp=float(doc.get("timestamp", 0.0)),
        )


def load_keypoints(path):
    return KeypointSet.from_dict(json.loads(Path(path).read_text()))


def save_keypoints(kps: KeypointSet, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(kps.to_dict(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# limb lengths and tree transfer


def _edge_endpoints(points, visible, tree, parent, child):
    if parent == VIRTUAL_ROOT:
        ppos, ok = tree.root_position(points, visible)
    else:
        ppos, ok = np.asarray(points[parent], dtype=np.float64), bool(visible[parent])
    cpos = np.asarray(points[child], dtype=np.float64)
    return ppos, cpos, ok and bool(visible[child])


def limb_lengths(point_seq, visibility_seq, tree: SkeletonTree):
    """Per-edge maximum Euclidean length over frames with both endpoints visible.

    point_seq: (T, N, 2); visibility_seq: (T, N) bool or None.
    Returns lengths aligned with tree.edges. Raises NeverVisible for an edge
    with no qualifying frame.
    """
    point_seq = np.asarray(point_seq, dtype=np.float64)
    t = point_seq.shape[0]
    if visibility_seq is None:
        visibility_seq = np.ones(point_seq.shape[:2], dtype=bool)
    lengths = np.full(len(tree.edges), -1.0)
    for ei, (p, c) in enumerate(tree.edges):
        for f in range(t):
            ppos, cpos, ok = _edge_endpoints(point_seq[f], visibility_seq[f], tree, p, c)
            if not ok:
                continue
            lengths[ei] = max(lengths[ei], float(np.linalg.norm(cpos - ppos)))
        if lengths[ei] < 0:
            raise NeverVisible((p, c))
    return lengths


@dataclass
class TransferResult:
    points: np.ndarray
    visible: np.ndarray
    degenerate_edges: list = field(default_factory=list)


def transfer_tree(driving_points, driving_visible, source_lengths,
                  tree: SkeletonTree, root_anchor, mode="exact",
                  driving_lengths=None) -> TransferResult:
    """Rebuild a skeleton with driving directions and source limb lengths.

    mode="exact" uses unit driving directions (limbs keep the exact source
    length); mode="literal" scales the raw driving limb vector by
    source_length / max driving length and needs `driving_lengths`.
    A driving limb shorter than DEGENERATE_LIMB_EPS has no direction: the
    child inherits the parent position and the edge is flagged.
    """
    if mode not in ("exact", "literal"):
        raise MpiForgeError(f"unknown transfer mode {mode!r}")
    if mode == "literal" and driving_lengths is None:
        raise MpiForgeError("literal mode needs per-edge driving lengths")
    driving_points = np.asarray(driving_points, dtype=np.float64)
    n = driving_points.shape[0]
    if driving_visible is None:
        driving_visible = np.ones(n, dtype=bool)
    eidx = tree.edge_index()

    out = np.zeros((n, 2))
    out_visible = np.zeros(n, dtype=bool)
    placed = {}
    root_anchor = np.asarray(root_anchor, dtype=np.float64)
    placed[VIRTUAL_ROOT if tree.root_kind == "midpoint" else tree.root_nodes[0]] = root_anchor
    if tree.root_kind == "node":
        out[tree.root_nodes[0]] = root_anchor
        out_visible[tree.root_nodes[0]] = True
    degenerate = []
    for p, c in tree.bfs_edges:
        parent_out = placed[p]
        ppos, cpos, ok = _edge_endpoints(driving_points, driving_visible, tree, p, c)
        vec = cpos - ppos
        norm = float(np.linalg.norm(vec))
        length = source_lengths[eidx[(p, c)]]
        if not ok or norm < DEGENERATE_LIMB_EPS:
            pos = parent_out.copy()
            degenerate.append((p, c))
            visible = False
        elif mode == "literal":
            pos = parent_out + vec / driving_lengths[eidx[(p, c)]] * length
            visible = True
        else:
            pos = parent_out + vec / norm * length
            visible = True
        placed[c] = pos
        out[c] = pos
        out_visible[c] = visible
    return TransferResult(points=out, visible=out_visible, degenerate_edges=degenerate)


def transfer_body(driving: KeypointSet, source_lengths, tree: SkeletonTree,
                  root_anchor, mode="exact", driving_lengths=None) -> TransferResult:
    """Body retargeting; see transfer_tree. The root lands on root_anchor."""
    return transfer_tree(driving.body, driving.body_visible, source_lengths,
                         tree, root_anchor, mode, driving_lengths)


def transfer_hand(driving_hand, driving_visible, source_lengths,
                  tree: SkeletonTree, wrist_anchor, mode="exact",
                  driving_lengths=None) -> TransferResult:
    """Hand retargeting: identical machinery, wrist-rooted tree."""
    return transfer_tree(driving_hand, driving_visible, source_lengths,
                         tree, wrist_anchor, mode, driving_lengths)


# ---------------------------------------------------------------------------
# face transfer


def _face_distance(a, b, joint_visible, metric):
    a = a[joint_visible]
    b = b[joint_visible]
    if metric == "centered":
        a = a - a.mean(axis=0)
        b = b - b.mean(axis=0)
    return float(np.mean(np.sum((a - b) ** 2, axis=1)))


def nearest_face_frame(source_ref, driving_sequence, source_visible=None,
                       sequence_visible=None, metric="centered"):
    """Index of the driving frame most similar to the source reference."""
    source_ref = np.asarray(source_ref, dtype=np.float64)
    seq = np.asarray(driving_sequence, dtype=np.float64)
    if seq.ndim != 3 or seq.shape[0] == 0:
        raise SizeMismatch("driving sequence must be (T, N, 2) with T >= 1")
    n = source_ref.shape[0]
    if source_visible is None:
        source_visible = np.ones(n, dtype=bool)
    if sequence_visible is None:
        sequence_visible = np.ones(seq.shape[:2], dtype=bool)
    best, best_idx = np.inf, 0
    for f in range(seq.shape[0]):
        joint = source_visible & sequence_visible[f]
        if joint.sum() < 2:
            continue
        dist = _face_distance(source_ref, seq[f], joint, metric)
        if dist < best:
            best, best_idx = dist, f
    return best_idx


def transfer_face(source_ref, driving_sequence, driving_current,
                  source_visible=None, sequence_visible=None, metric="centered"):
    """Relative face motion: output = source + current - nearest(source)."""
    idx = nearest_face_frame(source_ref, driving_sequence, source_visible,
                             sequence_visible, metric)
    t_prime = np.asarray(driving_sequence, dtype=np.float64)[idx]
    return np.asarray(source_ref) + np.asarray(driving_current) - t_prime


# ---------------------------------------------------------------------------
# full-pose retargeting and rasterization


def retarget_pose(source_seq, driving_seq, driving_index, anchor_index=0,
                  body_tree=None, hand_tree=None, mode="exact",
                  face_metric="centered") -> KeypointSet:
    """Retarget one driving frame onto the source character.

    source_seq / driving_seq: lists of KeypointSet. The transferred body root
    sits at the source root of the anchor frame; each hand is anchored on the
    transferred body's wrist.
    """
    body_tree = body_tree or default_body_tree()
    hand_tree = hand_tree or default_hand_tree()
    driving = driving_seq[driving_index]
    anchor_kps = source_seq[anchor_index]

    body_lengths = limb_lengths(
        np.stack([k.body for k in source_seq]),
        np.stack([k.body_visible for k in source_seq]), body_tree,
    )
    kwargs = {}
    if mode == "literal":
        kwargs["driving_lengths"] = limb_lengths(
            np.stack([k.body for k in driving_seq]),
            np.stack([k.body_visible for k in driving_seq]), body_tree,
        )
    anchor, ok = body_tree.root_position(anchor_kps.body, anchor_kps.body_visible)
    if not ok:
        raise NeverVisible(("root", anchor_index))
    body = transfer_body(driving, body_lengths, body_tree, anchor, mode, **kwargs)

    hands = np.zeros_like(driving.hands)
    hands_visible = np.zeros(driving.hands.shape[:2], dtype=bool)
    for side, wrist in ((0, LEFT_WRIST), (1, RIGHT_WRIST)):
        hand_lengths = limb_lengths(
            np.stack([k.hands[side] for k in source_seq]),
            np.stack([k.hands_visible[side] for k in source_seq]), hand_tree,
        )
        hkw = {}
        if mode == "literal":
            hkw["driving_lengths"] = limb_lengths(
                np.stack([k.hands[side] for k in driving_seq]),
                np.stack([k.hands_visible[side] for k in driving_seq]), hand_tree,
            )
        res = transfer_hand(driving.hands[side], driving.hands_visible[side],
                            hand_lengths, hand_tree, body.points[wrist], mode, **hkw)
        hands[side] = res.points
        hands_visible[side] = res.visible

    face = transfer_face(
        source_seq[anchor_index].face,
        np.stack([k.face for k in driving_seq]),
        driving.face,
        source_visible=anchor_kps.face_visible,
        sequence_visible=np.stack([k.face_visible for k in driving_seq]),
        metric=face_metric,
    )
    return KeypointSet(
        face=face, body=body.points, hands=hands,
        face_visible=driving.face_visible.copy(),
        body_visible=body.visible, hands_visible=hands_visible,
        timestamp=driving.timestamp,
    )


PALETTE = {
    "face": (0.95, 0.8, 0.25),
    "body": (0.35, 0.85, 0.45),
    "left_hand": (0.9, 0.4, 0.35),
    "right_hand": (0.4, 0.55, 0.95),
}


def _draw_disc(canvas, x, y, radius, color):
    h, w = canvas.shape[:2]
    x0, x1 = max(int(np.floor(x - radius)), 0), min(int(np.ceil(x + radius)), w - 1)
    y0, y1 = max(int(np.floor(y - radius)), 0), min(int(np.ceil(y + radius)), h - 1)
    if x0 > x1 or y0 > y1:
        return
    ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    mask = (xs - x) ** 2 + (ys - y) ** 2 <= radius**2
    canvas[y0:y1 + 1, x0:x1 + 1][mask] = color


def _draw_segment(canvas, a, b, color):
    h, w = canvas.shape[:2]
    steps = int(max(abs(b[0] - a[0]), abs(b[1] - a[1]))) * 2 + 2
    ts = np.linspace(0.0, 1.0, steps)
    xs = np.round(a[0] + ts * (b[0] - a[0])).astype(int)
    ys = np.round(a[1] + ts * (b[1] - a[1])).astype(int)
    keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    canvas[ys[keep], xs[keep]] = color


def rasterize_pose(kps: KeypointSet, canvas_size, palette=None, point_radius=1.5,
                   body_tree=None, hand_tree=None):
    """Deterministic pose image: tree edges plus landmark discs, fixed colors.

    Off-canvas geometry is clipped; identical inputs give identical arrays.
    """
    palette = palette or PALETTE
    body_tree = body_tree or default_body_tree()
    hand_tree = hand_tree or default_hand_tree()
    w, h = canvas_size
    canvas = np.zeros((h, w, 3))

    def draw_part(points, visible, tree, color):
        for p, c in tree.bfs_edges:
            ppos, cpos, ok = _edge_endpoints(points, visible, tree, p, c)
            if ok:
                _draw_segment(canvas, ppos, cpos, color)
        for i, pt in enumerate(points):
            if visible[i]:
                _draw_disc(canvas, pt[0], pt[1], point_radius, color)

    if kps.body.shape[0] == body_tree.landmark_count:
        draw_part(kps.body, kps.body_visible, body_tree, palette["body"])
    for side, key in ((0, "left_hand"), (1, "right_hand")):
        if kps.hands.shape[1] == hand_tree.landmark_count:
            draw_part(kps.hands[side], kps.hands_visible[side], hand_tree, palette[key])
    for i, pt in enumerate(kps.face):
        if kps.face_visible[i]:
            _draw_disc(canvas, pt[0], pt[1], point_radius * 0.7, palette["face"])
    return canvas
