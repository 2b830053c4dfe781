"""Shared helpers for the test suite: camera factories and reference oracles."""

import numpy as np

from mpiforge.geometry import CameraModel, look_at, simple_intrinsics
from mpiforge.mpi import Mpi, init_planes


def identity_camera(size=(8, 8), focal=1.0, centered=False):
    """Camera at the world origin looking down +z.

    With centered=False the principal point is (0, 0) so pixel coordinates
    coincide with normalized image coordinates scaled by `focal`.
    """
    w, h = size
    if centered:
        K = simple_intrinsics(focal, w, h)
    else:
        K = np.array([[focal, 0.0, 0.0], [0.0, focal, 0.0], [0.0, 0.0, 1.0]])
    return CameraModel(K, np.eye(3), np.zeros(3), size)


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_camera(rng, size=(8, 8), focal=None, radius=0.3, depth_mid=2.0):
    """A camera near the origin looking roughly at (0, 0, depth_mid)."""
    w, h = size
    focal = focal if focal is not None else 0.9 * w
    eye = rng.normal(scale=radius, size=3)
    eye[2] = rng.uniform(-0.15, 0.15)
    target = np.array([0.0, 0.0, depth_mid]) + rng.normal(scale=0.05, size=3)
    return look_at(eye, target, (0.0, -1.0, 0.0), simple_intrinsics(focal, w, h), size)


def random_mpi(rng, planes=4, k=2, size=(8, 8), padding=0, near=1.5, far=4.0,
               focal=None, margin=0.1):
    """Random MPI hosted by an identity-pose camera; values in [margin, 1-margin]."""
    cam = identity_camera(size=size, focal=focal or 0.9 * size[0], centered=True)
    w, h = size
    hc, wc = h + 2 * padding, w + 2 * padding
    alphas = rng.uniform(margin, 1.0 - margin, size=(planes, hc, wc))
    textures = rng.uniform(margin, 1.0 - margin, size=(planes // k, hc, wc, 3))
    return Mpi(alphas, textures, init_planes(near, far, planes), cam, k,
               padding=padding)


def scalar_bilinear(layer, u, v):
    """Plain scalar bilinear sample with zero padding; independent of the
    package's sampling code."""
    h, w = layer.shape[:2]
    x0, y0 = int(np.floor(u)), int(np.floor(v))
    fx, fy = u - x0, v - y0
    total = 0.0 if layer.ndim == 2 else np.zeros(layer.shape[2])
    for dx, dy, wt in [(0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)),
                       (0, 1, (1 - fx) * fy), (1, 1, fx * fy)]:
        xx, yy = x0 + dx, y0 + dy
        if 0 <= xx < w and 0 <= yy < h:
            total = total + wt * layer[yy, xx]
    return total


def scalar_over(colors, alphas):
    """Literal back-to-front over sum: sum_i c_i a_i prod_{j in front}(1 - a_j).

    Index 0 is the back layer.
    """
    n = len(alphas)
    out = 0.0 if np.ndim(colors[0]) == 0 else np.zeros(np.shape(colors[0]))
    for i in range(n):
        t = 1.0
        for j in range(i + 1, n):
            t *= 1.0 - alphas[j]
        out = out + np.asarray(colors[i]) * alphas[i] * t
    return out


def raycast_reference(mpi, target):
    """Independent reference renderer: per-pixel ray / plane intersection in
    world space, scalar bilinear sampling, literal over sum. No homography
    code involved.
    """
    w, h = target.image_size
    depths = mpi.current_depths()
    alphas = mpi.alphas
    textures = mpi.textures
    host = mpi.host_camera
    pad = mpi.padding
    kt_inv = np.linalg.inv(target.intrinsics)
    origin_w = -target.rotation.T @ target.translation
    out = np.zeros((h, w, 3))
    for row in range(h):
        for col in range(w):
            dir_w = target.rotation.T @ (kt_inv @ np.array([col, row, 1.0]))
            a_dir = (host.rotation @ dir_w)[2]
            b_org = (host.rotation @ origin_w + host.translation)[2]
            cs, as_ = [], []
            for i in reversed(range(mpi.plane_count)):  # back first
                lam = (depths[i] - b_org) / a_dir
                if lam <= 0:
                    cs.append(np.zeros(3))
                    as_.append(0.0)
                    continue
                x_host = host.rotation @ (origin_w + lam * dir_w) + host.translation
                q = host.intrinsics @ x_host
                u, v = q[0] / q[2] + pad, q[1] / q[2] + pad
                as_.append(scalar_bilinear(alphas[i], u, v))
                cs.append(scalar_bilinear(textures[i // mpi.sharing_factor], u, v))
            out[row, col] = scalar_over(cs, as_)
    return out


def project_through_plane(source, target, depth, pixel):
    """Independent oracle: map a target pixel to source pixels via explicit
    ray / plane intersection in world space (no homography code involved).

    Returns (u, v) in source pixels, or None if the ray meets the plane behind
    the target camera.
    """
    x, y = pixel
    dir_t = np.linalg.inv(target.intrinsics) @ np.array([x, y, 1.0])
    # world-space ray origin and direction
    origin_w = -target.rotation.T @ target.translation
    dir_w = target.rotation.T @ dir_t
    # plane z_source = depth: solve for lambda along the world ray
    a = (source.rotation @ dir_w)[2]
    b = (source.rotation @ origin_w + source.translation)[2]
    lam = (depth - b) / a
    if lam <= 0:
        return None
    X_w = origin_w + lam * dir_w
    X_s = source.rotation @ X_w + source.translation
    q = source.intrinsics @ X_s
    return np.array([q[0] / q[2], q[1] / q[2]])
