"""Layered scene representation: alpha planes, shared RGB textures, learnable depths.

An Mpi holds D alpha layers and D/K RGB texture layers on a padded canvas
inside the host camera's frustum. Plane depths are init_depths + depth_deltas;
the deltas are free parameters and a projection step keeps the refined depths
strictly ascending so the back-to-front render order stays well defined.

Alpha and texture parameters are stored unconstrained and clamped to [0, 1]
when read through .alphas / .textures (exact gradients at interior points,
zero gradient in the clamped region).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidRange, MpiForgeError, OutOfRange
from .geometry import CameraModel

# minimum refined-depth gap, as a fraction of mean plane spacing
ORDER_MARGIN_FRACTION = 1e-4


def init_planes(near, far, count, spacing="depth"):
    """Initial plane depths: `count` ascending values covering [near, far].

    spacing="depth" places planes equally in depth (bounded scenes);
    spacing="disparity" places them equally in inverse depth (unbounded).
    """
    if not (0 < near < far):
        raise InvalidRange(f"need 0 < near < far, got near={near} far={far}")
    if count < 2:
        raise InvalidRange(f"need at least 2 planes, got {count}")
    if spacing == "depth":
        return np.linspace(near, far, count)
    if spacing == "disparity":
        return 1.0 / np.linspace(1.0 / near, 1.0 / far, count)
    raise InvalidRange(f"unknown spacing {spacing!r}")


def texture_index(plane, sharing_factor, plane_count=None):
    """Index of the RGB texture layer used by alpha plane `plane`."""
    if sharing_factor < 1:
        raise OutOfRange(f"sharing factor must be >= 1, got {sharing_factor}")
    if plane < 0 or (plane_count is not None and plane >= plane_count):
        raise OutOfRange(f"plane {plane} outside [0, {plane_count})")
    return plane // sharing_factor


def channel_count(plane_count, sharing_factor):
    """Stored channels: D alphas plus 3 per shared texture layer."""
    if plane_count % sharing_factor != 0:
        raise InvalidRange(
            f"plane count {plane_count} not divisible by sharing factor {sharing_factor}"
        )
    return plane_count + 3 * (plane_count // sharing_factor)


@dataclass
class ExposureCoeffs:
    """Per-camera linear exposure model: output = clamp((pixel + beta) * gamma).

    beta: (N, 3) black-level shift per camera; gamma: (N, 3) gain per camera.
    Camera 0 is the gauge reference and stays pinned at beta=0, gamma=1.
    """

    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.beta = np.array(self.beta, dtype=np.float64)
        self.gamma = np.array(self.gamma, dtype=np.float64)
        if self.beta.ndim != 2 or self.beta.shape[1] != 3 or self.beta.shape != self.gamma.shape:
            raise MpiForgeError(
                f"exposure arrays must both be (N, 3), got {self.beta.shape} / {self.gamma.shape}"
            )
        self.validate()

    @classmethod
    def identity(cls, camera_count):
        return cls(np.zeros((camera_count, 3)), np.ones((camera_count, 3)))

    @property
    def camera_count(self):
        return self.beta.shape[0]

    def validate(self):
        if not (np.all(np.isfinite(self.beta)) and np.all(np.isfinite(self.gamma))):
            raise MpiForgeError("exposure coefficients must be finite")
        if np.any(self.gamma <= 0):
            raise MpiForgeError("gamma entries must be positive")
        if not (np.all(self.beta[0] == 0.0) and np.all(self.gamma[0] == 1.0)):
            raise MpiForgeError("reference camera 0 must have beta=0, gamma=1")

    def pin_reference(self):
        self.beta[0] = 0.0
        self.gamma[0] = 1.0

    def copy(self):
        return ExposureCoeffs(self.beta.copy(), self.gamma.copy())


class Mpi:
    """Multiplane image: D alpha planes sharing D/K RGB textures on one canvas.

    raw_alphas: (D, Hc, Wc) unconstrained; raw_textures: (D/K, Hc, Wc, 3)
    unconstrained; init_depths: (D,) ascending; depth_deltas: (D,);
    host_camera: the driving camera whose frustum hosts the planes; padding:
    pixels added on each canvas side beyond the host image, so
    Wc = W + 2*padding and Hc = H + 2*padding.
    """

    def __init__(
        self,
        raw_alphas,
        raw_textures,
        init_depths,
        host_camera: CameraModel,
        sharing_factor,
        depth_deltas=None,
        padding=0,
    ):
        self.raw_alphas = np.asarray(raw_alphas, dtype=np.float64)
        self.raw_textures = np.asarray(raw_textures, dtype=np.float64)
        self.init_depths = np.array(init_depths, dtype=np.float64)
        self.depth_deltas = (
            np.zeros_like(self.init_depths)
            if depth_deltas is None
            else np.array(depth_deltas, dtype=np.float64)
        )
        self.host_camera = host_camera
        self.sharing_factor = int(sharing_factor)
        self.padding = int(padding)
        self._validate_shapes()
        spacing = (self.init_depths[-1] - self.init_depths[0]) / self.plane_count
        self.order_margin = max(ORDER_MARGIN_FRACTION * spacing, 1e-300)

    def _validate_shapes(self):
        D = self.plane_count
        K = self.sharing_factor
        if D < 2:
            raise InvalidRange("an Mpi needs at least 2 planes")
        if D % K != 0:
            raise InvalidRange(f"plane count {D} not divisible by sharing factor {K}")
        if self.raw_alphas.ndim != 3:
            raise MpiForgeError(f"alphas must be (D, Hc, Wc), got {self.raw_alphas.shape}")
        Hc, Wc = self.canvas_size[1], self.canvas_size[0]
        if self.raw_textures.shape != (D // K, Hc, Wc, 3):
            raise MpiForgeError(
                f"textures must be ({D // K}, {Hc}, {Wc}, 3), got {self.raw_textures.shape}"
            )
        if self.depth_deltas.shape != (D,):
            raise MpiForgeError("depth_deltas must match init_depths")
        if np.any(np.diff(self.init_depths) <= 0):
            raise InvalidRange("init_depths must be strictly ascending")
        if self.init_depths[0] <= 0:
            raise InvalidRange("init_depths must be positive")
        w, h = self.host_camera.image_size
        if (w + 2 * self.padding, h + 2 * self.padding) != self.canvas_size:
            raise MpiForgeError(
                f"canvas {self.canvas_size} != host image {self.host_camera.image_size} "
                f"plus padding {self.padding}"
            )

    # -- basic shape accessors -------------------------------------------------

    @property
    def plane_count(self):
        return self.raw_alphas.shape[0]

    @property
    def texture_count(self):
        return self.raw_textures.shape[0]

    @property
    def canvas_size(self):
        """(width, height) of the stored layers."""
        return (self.raw_alphas.shape[2], self.raw_alphas.shape[1])

    @property
    def channel_count(self):
        return channel_count(self.plane_count, self.sharing_factor)

    def texture_index(self, plane):
        return texture_index(plane, self.sharing_factor, self.plane_count)

    # -- [0, 1]-clamped views ---------------------------------------------------

    @property
    def alphas(self):
        return np.clip(self.raw_alphas, 0.0, 1.0)

    @property
    def textures(self):
        return np.clip(self.raw_textures, 0.0, 1.0)

    # -- depths ------------------------------------------------------------------

    def refined_depths(self):
        """Current plane depths with order-preserving clamping applied.

        Clamps the stored depth_deltas in place (the projection is the new
        parameter value) and returns init_depths + depth_deltas, guaranteed
        strictly ascending with gaps of at least the order margin.
        Idempotent: a second call without intervening delta updates is a no-op.
        """
        d = project_ascending(self.init_depths, self.depth_deltas, self.order_margin)
        self.depth_deltas[:] = d - self.init_depths
        return d

    def current_depths(self):
        """init + deltas without projection; raises if order is violated."""
        d = self.init_depths + self.depth_deltas
        if np.any(np.diff(d) <= 0):
            raise InvalidRange("refined depths are not ascending; run refined_depths()")
        return d

    # -- misc ---------------------------------------------------------------------

    def snapshot(self):
        """Deep, independent copy (e.g. a read-only rendering snapshot)."""
        return Mpi(
            self.raw_alphas.copy(),
            self.raw_textures.copy(),
            self.init_depths.copy(),
            self.host_camera,
            self.sharing_factor,
            depth_deltas=self.depth_deltas.copy(),
            padding=self.padding,
        )

    @classmethod
    def zeros(cls, plane_count, sharing_factor, host_camera, near, far,
              spacing="depth", padding=0, alpha=0.0, color=0.5):
        """Blank Mpi on the padded canvas of `host_camera`."""
        w, h = host_camera.image_size
        hc, wc = h + 2 * padding, w + 2 * padding
        depths = init_planes(near, far, plane_count, spacing)
        return cls(
            np.full((plane_count, hc, wc), alpha, dtype=np.float64),
            np.full((plane_count // sharing_factor, hc, wc, 3), color, dtype=np.float64),
            depths,
            host_camera,
            sharing_factor,
            padding=padding,
        )


def project_ascending(init_depths, deltas, margin, max_passes=None):
    """Project init + deltas onto strictly-ascending depths with `margin` gaps.

    When two adjacent planes cross, the one whose delta moved it further is
    clamped against the other (the shifted plane yields, the passive plane
    holds its position); an exact tie splits the violation symmetrically.
    Repeated sweeps resolve cascades; a final monotone sweep guarantees the
    postcondition regardless of input. Returns the projected depths without
    mutating the inputs.
    """
    init = np.asarray(init_depths, dtype=np.float64)
    d = init + np.asarray(deltas, dtype=np.float64)
    n = d.shape[0]
    if max_passes is None:
        max_passes = n + 2
    for _ in range(max_passes):
        changed = False
        for i in range(n - 1):
            if d[i] <= d[i + 1] - margin:
                continue
            changed = True
            lo, hi = abs(d[i] - init[i]), abs(d[i + 1] - init[i + 1])
            if lo > hi:
                d[i] = d[i + 1] - margin
            elif hi > lo:
                d[i + 1] = d[i] + margin
            else:
                mid = 0.5 * (d[i] + d[i + 1])
                d[i] = mid - 0.5 * margin
                d[i + 1] = mid + 0.5 * margin
        if not changed:
            return d
    # pathological cascade: enforce order directly, sweeping front-ward
    for i in range(1, n):
        if d[i] < d[i - 1] + margin:
            d[i] = d[i - 1] + margin
    return d
