"""Pinhole cameras, rigid transforms, and per-plane homographies.

Conventions used throughout the package:
  - World-to-camera poses: x_cam = R @ x_world + t.
  - Pixel coordinates address pixel centers; (0, 0) is the center of the
    top-left pixel. Homogeneous normalization divides by the third coordinate.
  - MPI planes are fronto-parallel in the host ("source") camera frame, i.e.
    the plane normal is the host optical axis (0, 0, 1) and a plane at depth d
    is the locus z_source = d.
  - relative_pose(target, source) returns (R, t) with x_source = R @ x_target + t.

All values are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePlane, InvalidCamera

ROTATION_ATOL = 1e-9
DEGENERACY_EPS = 1e-12


def _as_readonly(a, shape, name):
    arr = np.asarray(a, dtype=np.float64)
    if arr.shape != shape:
        raise InvalidCamera(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidCamera(f"{name} contains non-finite entries")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: upper-triangular intrinsics plus a world-to-camera pose.

    intrinsics: 3x3, pixels; rotation: 3x3 orthonormal (det +1);
    translation: length 3, scene units; image_size: (width, height).
    """

    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    image_size: tuple[int, int]

    def __post_init__(self):
        K = _as_readonly(self.intrinsics, (3, 3), "intrinsics")
        R = _as_readonly(self.rotation, (3, 3), "rotation")
        t = _as_readonly(self.translation, (3,), "translation")
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        w, h = self.image_size
        object.__setattr__(self, "image_size", (int(w), int(h)))
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise InvalidCamera("intrinsics focal entries must be positive")
        if K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0:
            raise InvalidCamera("intrinsics must be upper triangular")
        if K[2, 2] != 1.0:
            raise InvalidCamera("intrinsics[2][2] must be 1")
        with np.errstate(over="ignore", invalid="ignore"):
            if not np.allclose(R.T @ R, np.eye(3), atol=ROTATION_ATOL, rtol=0):
                raise InvalidCamera("rotation is not orthonormal (tol 1e-9)")
            if np.linalg.det(R) < 0:
                raise InvalidCamera("rotation has determinant -1 (reflection)")

    def center(self):
        """Camera center in world coordinates (-R^T t)."""
        return -self.rotation.T @ self.translation

    def world_to_camera(self, points):
        """Map (..., 3) world points into this camera's frame."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def project(self, points_cam):
        """Project (..., 3) camera-frame points to pixel coordinates."""
        pts = np.asarray(points_cam, dtype=np.float64)
        q = pts @ self.intrinsics.T
        return q[..., :2] / q[..., 2:3]

    def with_pose(self, rotation, translation):
        return CameraModel(self.intrinsics, rotation, translation, self.image_size)

    def perturbed(self, twist):
        """Apply a small rigid update exp(twist) on the camera side of the pose."""
        dR, dt = se3_exp(twist)
        return self.with_pose(dR @ self.rotation, dR @ self.translation + dt)


def look_at(eye, target, up, intrinsics, image_size):
    """Build a camera at `eye` whose optical axis points at `target`.

    `up` fixes the roll; image +y points opposite to `up` (image rows grow
    downward).
    """
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    upv = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, upv)
    nrm = np.linalg.norm(right)
    if nrm < 1e-12:
        raise InvalidCamera("up vector is parallel to the viewing direction")
    right /= nrm
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])  # rows: camera axes in world coords
    t = -R @ eye
    return CameraModel(intrinsics, R, t, image_size)


def simple_intrinsics(focal, width, height):
    """Centered principal point, square pixels."""
    return np.array(
        [
            [focal, 0.0, (width - 1) / 2.0],
            [0.0, focal, (height - 1) / 2.0],
            [0.0, 0.0, 1.0],
        ]
    )


def relative_pose(target: CameraModel, source: CameraModel):
    """Rigid transform from target-camera to source-camera coordinates.

    Returns (R, t) such that x_source = R @ x_target + t.
    """
    if np.array_equal(source.rotation, target.rotation) and np.array_equal(
        source.translation, target.translation
    ):
        return np.eye(3), np.zeros(3)  # exact, not up to rounding
    R = source.rotation @ target.rotation.T
    t = source.translation - R @ target.translation
    return R, t


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _homography_terms(source: CameraModel, target: CameraModel, depth: float):
    """Shared pieces of the plane homography and its derivatives."""
    if depth <= 0:
        raise DegeneratePlane(f"plane depth must be positive, got {depth}")
    R, t = relative_pose(target, source)
    den = depth - t[2]  # zero iff the plane contains the target camera center
    if abs(den) < DEGENERACY_EPS:
        raise DegeneratePlane(
            f"plane at depth {depth} passes through the target camera center"
        )
    return R, t, den


def homography_raw(source: CameraModel, target: CameraModel, depth: float):
    """Unnormalized homography from target pixels to source pixels.

    For the plane z_source = depth:  H = K_s (R + t r3^T / (depth - t_z)) K_t^-1
    with r3 the third row of R. The third homogeneous coordinate of H @ p
    equals depth / z_target(p), so a non-positive value flags an intersection
    behind the target camera.
    """
    R, t, den = _homography_terms(source, target, depth)
    M = R + np.outer(t, R[2]) / den
    return source.intrinsics @ M @ np.linalg.inv(target.intrinsics)


def plane_homography(source: CameraModel, target: CameraModel, depth: float):
    """Homography mapping target-view pixels onto the source plane at `depth`.

    Scale-normalized so H[2][2] == 1 whenever that entry is nonzero.
    """
    H = homography_raw(source, target, depth)
    if abs(H[2, 2]) > DEGENERACY_EPS:
        H = H / H[2, 2]
    return H


def homography_depth_derivative(source: CameraModel, target: CameraModel, depth: float):
    """(H, dH/d_depth) for the scale-normalized plane homography."""
    R, t, den = _homography_terms(source, target, depth)
    Kt_inv = np.linalg.inv(target.intrinsics)
    M = R + np.outer(t, R[2]) / den
    dM = -np.outer(t, R[2]) / den**2
    H = source.intrinsics @ M @ Kt_inv
    dH = source.intrinsics @ dM @ Kt_inv
    h22 = H[2, 2]
    if abs(h22) > DEGENERACY_EPS:
        # quotient rule through the H[2][2] normalization
        dH = dH / h22 - H * (dH[2, 2] / h22**2)
        H = H / h22
    return H, dH


@dataclass(frozen=True)
class HomographyJacobians:
    """Unnormalized homography with its depth and target-twist derivatives.

    d_twist[k] is the derivative with respect to component k of a twist
    applied at identity on the camera side of the target pose
    (rotation components 0..2, translation components 3..5).
    """

    H: np.ndarray
    d_depth: np.ndarray
    d_twist: np.ndarray  # (6, 3, 3)


def homography_jacobians(source: CameraModel, target: CameraModel, depth: float):
    """Analytic derivatives of the raw homography for the gradient path."""
    R, t, den = _homography_terms(source, target, depth)
    Ks = source.intrinsics
    Kt_inv = np.linalg.inv(target.intrinsics)
    r3 = R[2]
    M = R + np.outer(t, r3) / den
    H = Ks @ M @ Kt_inv
    d_depth = Ks @ (-np.outer(t, r3) / den**2) @ Kt_inv

    d_twist = np.empty((6, 3, 3))
    for k in range(3):
        S = skew(np.eye(3)[k])
        dR = -R @ S
        dr3 = dR[2]
        dM = dR + np.outer(t, dr3) / den
        d_twist[k] = Ks @ dM @ Kt_inv
    for k in range(3):
        dt = -R[:, k]
        dtz = dt[2]
        # d(1/den)/d_xi = dtz / den^2 because den = depth - t_z
        dM = np.outer(dt, r3) / den + np.outer(t, r3) * (dtz / den**2)
        d_twist[3 + k] = Ks @ dM @ Kt_inv
    return HomographyJacobians(H=H, d_depth=d_depth, d_twist=d_twist)


# ---------------------------------------------------------------------------
# se(3) exponential / logarithm (Rodrigues closed forms)

_SMALL_ANGLE = 1e-8


def se3_exp(twist):
    """Rigid transform exp of a 6-vector (rotation first 3, translation last 3)."""
    xi = np.asarray(twist, dtype=np.float64)
    if xi.shape != (6,):
        raise ValueError(f"twist must have shape (6,), got {xi.shape}")
    w, v = xi[:3], xi[3:]
    theta = np.linalg.norm(w)
    W = skew(w)
    W2 = W @ W
    if theta < _SMALL_ANGLE:
        # second-order series; exact at theta = 0
        A, B, C = 1.0 - theta**2 / 6.0, 0.5 - theta**2 / 24.0, 1.0 / 6.0
    else:
        A = np.sin(theta) / theta
        B = (1.0 - np.cos(theta)) / theta**2
        C = (theta - np.sin(theta)) / theta**3
    R = np.eye(3) + A * W + B * W2
    V = np.eye(3) + B * W + C * W2
    return R, V @ v


def se3_log(rotation, translation):
    """Inverse of se3_exp. Valid for rotation angles < pi.

    Near pi the axis is recovered from the symmetric part (stable branch) with
    correspondingly reduced precision.
    """
    R = np.asarray(rotation, dtype=np.float64)
    t = np.asarray(translation, dtype=np.float64)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta < _SMALL_ANGLE:
        w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    elif np.pi - theta < 1e-6:
        # stable branch: axis from the dominant diagonal of (R + I) / 2
        S = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(S)))
        axis = S[:, k] / np.sqrt(max(S[k, k], DEGENERACY_EPS))
        axis = axis / np.linalg.norm(axis)
        # fix the sign using the skew-symmetric part where it is nonzero
        w_skew = np.array(
            [R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]
        )
        if np.dot(w_skew, axis) < 0:
            axis = -axis
        w = theta * axis
    else:
        w = theta / (2.0 * np.sin(theta)) * np.array(
            [R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]
        )
    W = skew(w)
    W2 = W @ W
    if theta < _SMALL_ANGLE:
        Vinv = np.eye(3) - 0.5 * W + (1.0 / 12.0) * W2
    else:
        coef = (1.0 - theta * np.cos(theta / 2.0) / (2.0 * np.sin(theta / 2.0))) / theta**2
        Vinv = np.eye(3) - 0.5 * W + coef * W2
    return np.concatenate([w, Vinv @ t])
