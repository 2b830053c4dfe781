"""Forward rendering: warp planes into a target view, composite back to front.

Rendering a view runs, per plane i (depths ascending, index 0 nearest):
  1. the plane homography at refined depth d_i (target pixels -> canvas pixels),
  2. an inverse bilinear warp of alpha layer i and its shared texture layer,
  3. the over operator, iterating planes back to front:
       out = sum_i c_i' a_i' prod_{j in front of i} (1 - a_j').

Samples that fall outside a layer, or whose ray meets the plane behind the
target camera, contribute nothing (transparent black). Degenerate planes
(through the target camera center) are skipped and counted.

Two equivalent paths: a float32 kernel (numba, parallel over rows, used by the
real-time CLI) and a dtype-parameterized numpy path the gradient code builds
on. Warping resamples color and alpha independently (straight alpha, exactly
as the over formula above is written); the usual faint edge haze where a soft
alpha boundary meets a color discontinuity is accepted behavior.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegeneratePlane, MismatchedDims, MismatchedLayerCount
from .geometry import CameraModel, homography_raw
from .mpi import Mpi

_W_EPS = 1e-12


@dataclass
class RenderedImage:
    """pixels: (H, W, 3) in [0, 1]; accumulated_alpha: (H, W) coverage."""

    pixels: np.ndarray
    accumulated_alpha: np.ndarray
    skipped_planes: int = 0


def pixel_grid(width, height, dtype=np.float64):
    """(3, H*W) homogeneous pixel centers, row-major (index = y*W + x)."""
    return _pixel_grid_cached(int(width), int(height), np.dtype(dtype).str)


@lru_cache(maxsize=8)
def _pixel_grid_cached(width, height, dtype_str):
    dtype = np.dtype(dtype_str)
    xs = np.arange(width, dtype=dtype)
    ys = np.arange(height, dtype=dtype)
    gx, gy = np.meshgrid(xs, ys)
    ones = np.ones(width * height, dtype=dtype)
    grid = np.stack([gx.ravel(), gy.ravel(), ones])
    grid.flags.writeable = False
    return grid


@dataclass
class SampleTerms:
    """Per-pixel bilinear footprint into one source layer (shared by channels)."""

    idx: np.ndarray    # (4, N) flat corner indices, clipped into range
    mask: np.ndarray   # (4, N) corner validity (in bounds and w > 0)
    wgt: np.ndarray    # (4, N) bilinear weights
    fx: np.ndarray
    fy: np.ndarray
    valid: np.ndarray  # (N,) sample in front of the target camera


def sample_terms(u, v, src_h, src_w, valid=None):
    x0f = np.floor(u)
    y0f = np.floor(v)
    fx = u - x0f
    fy = v - y0f
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1
    if valid is None:
        valid = np.ones(u.shape, dtype=bool)
    in_x0 = (x0 >= 0) & (x0 < src_w)
    in_x1 = (x1 >= 0) & (x1 < src_w)
    in_y0 = (y0 >= 0) & (y0 < src_h)
    in_y1 = (y1 >= 0) & (y1 < src_h)
    mask = np.stack(
        [in_x0 & in_y0 & valid, in_x1 & in_y0 & valid,
         in_x0 & in_y1 & valid, in_x1 & in_y1 & valid]
    )
    xc0 = np.clip(x0, 0, src_w - 1)
    xc1 = np.clip(x1, 0, src_w - 1)
    yc0 = np.clip(y0, 0, src_h - 1)
    yc1 = np.clip(y1, 0, src_h - 1)
    idx = np.stack([yc0 * src_w + xc0, yc0 * src_w + xc1,
                    yc1 * src_w + xc0, yc1 * src_w + xc1])
    one = np.ones_like(fx)
    wgt = np.stack([(one - fx) * (one - fy), fx * (one - fy),
                    (one - fx) * fy, fx * fy])
    wgt = wgt * mask
    return SampleTerms(idx=idx, mask=mask, wgt=wgt, fx=fx, fy=fy, valid=valid)


def gather_corners(layer, terms):
    """Corner values at a footprint: (4, N) or (4, N, C)."""
    if layer.ndim == 2:
        return layer.reshape(-1)[terms.idx]
    return layer.reshape(-1, layer.shape[2])[terms.idx]


def blend_corners(corners, terms):
    w = terms.wgt
    if corners.ndim == 2:
        return w[0] * corners[0] + w[1] * corners[1] + w[2] * corners[2] + w[3] * corners[3]
    w = w[..., None]
    return w[0] * corners[0] + w[1] * corners[1] + w[2] * corners[2] + w[3] * corners[3]


def sample_with_terms(layer, terms):
    """Gather a (H, W) or (H, W, C) layer at a precomputed footprint."""
    return blend_corners(gather_corners(layer, terms), terms)


def project_pixels(H, grid):
    """Apply a homography to (3, N) pixels; returns (u, v, w, valid)."""
    q = H @ grid
    w = q[2]
    valid = w > _W_EPS
    inv = np.where(valid, 1.0, np.nan)  # keep invalid lanes out of the divide
    with np.errstate(invalid="ignore", divide="ignore"):
        inv = inv / w
    u = np.where(valid, q[0] * inv, -1e9)
    v = np.where(valid, q[1] * inv, -1e9)
    return u, v, w, valid


def warp_plane(layer, homography, out_size, dtype=None):
    """Inverse-warp one layer: output pixel p gets layer sampled at H @ p.

    Out-of-layer samples (and samples behind the camera) are zero.
    """
    H = np.asarray(homography, dtype=np.float64)
    if H.shape != (3, 3):
        raise MismatchedDims(f"homography must be 3x3, got {H.shape}")
    if abs(np.linalg.det(H)) < _W_EPS:
        raise DegeneratePlane("homography is singular")
    layer = np.asarray(layer)
    if dtype is not None:
        layer = layer.astype(dtype, copy=False)
    out_w, out_h = out_size
    grid = pixel_grid(out_w, out_h, dtype=layer.dtype if dtype is None else dtype)
    u, v, _, valid = project_pixels(H, grid)
    terms = sample_terms(u, v, layer.shape[0], layer.shape[1], valid)
    out = sample_with_terms(layer, terms)
    shape = (out_h, out_w) if layer.ndim == 2 else (out_h, out_w, layer.shape[2])
    return out.reshape(shape)


def composite(warped_colors, warped_alphas):
    """Over-composite layer stacks ordered back (index 0) to front (index -1)."""
    colors = np.asarray(warped_colors)
    alphas = np.asarray(warped_alphas)
    if colors.shape[0] != alphas.shape[0]:
        raise MismatchedLayerCount(
            f"{colors.shape[0]} color layers vs {alphas.shape[0]} alpha layers"
        )
    if colors.shape[1:3] != alphas.shape[1:3]:
        raise MismatchedDims(
            f"color layers {colors.shape[1:3]} vs alpha layers {alphas.shape[1:3]}"
        )
    out = np.zeros_like(colors[0])
    keep = np.ones_like(alphas[0])
    for c, a in zip(colors, alphas):
        out = out * (1.0 - a)[..., None] + c * a[..., None]
        keep = keep * (1.0 - a)
    return RenderedImage(pixels=out, accumulated_alpha=1.0 - keep)


def apply_exposure(image, beta, gamma):
    """Per-camera linear exposure: clamp((pixel + beta) * gamma) channelwise."""
    beta = np.asarray(beta, dtype=np.float64).reshape(3)
    gamma = np.asarray(gamma, dtype=np.float64).reshape(3)
    if isinstance(image, RenderedImage):
        return RenderedImage(
            pixels=apply_exposure(image.pixels, beta, gamma),
            accumulated_alpha=image.accumulated_alpha,
            skipped_planes=image.skipped_planes,
        )
    out = (image + beta) * gamma
    return np.clip(out, 0.0, 1.0)


def _canvas_camera(mpi: Mpi):
    """Host camera shifted so its pixels address the padded canvas directly."""
    cam = mpi.host_camera
    if mpi.padding == 0:
        return cam
    K = cam.intrinsics.copy()
    K[0, 2] += mpi.padding
    K[1, 2] += mpi.padding
    return CameraModel(K, cam.rotation, cam.translation, mpi.canvas_size)


def plane_homographies(mpi: Mpi, target: CameraModel, depths=None):
    """Raw homography per plane into the padded canvas; None where degenerate."""
    canvas_cam = _canvas_camera(mpi)
    if depths is None:
        depths = mpi.current_depths()
    out = []
    for d in depths:
        try:
            out.append(homography_raw(canvas_cam, target, float(d)))
        except DegeneratePlane:
            out.append(None)
    return out


def render_view(mpi: Mpi, target: CameraModel, precision="f32",
                threads=0, early_exit=1e-4):
    """Render the MPI into the target camera. Pure function of its inputs.

    precision "f32" uses the parallel kernel; "f64" the numpy reference path.
    early_exit stops accumulating once the remaining transmittance drops below
    the given threshold (0 disables; the bound on the induced error is the
    threshold itself). Identical inputs give bit-identical outputs regardless
    of thread count or row tiling.
    """
    if precision == "f32":
        from . import kernels

        return kernels.render_fast(mpi, target, threads=threads, early_exit=early_exit)
    if precision != "f64":
        raise ValueError(f"precision must be 'f32' or 'f64', got {precision!r}")
    pixels, acc, _tape, skipped = render_forward(mpi, target, want_tape=False)
    w, h = target.image_size
    return RenderedImage(pixels.reshape(h, w, 3), acc.reshape(h, w), skipped)


def render_depth(mpi: Mpi, target: CameraModel, precision="f64"):
    """Composite refined plane depths instead of colors; returns (H, W)."""
    depths = mpi.current_depths()
    alphas = mpi.alphas
    hs = plane_homographies(mpi, target, depths)
    w, h = target.image_size
    grid = pixel_grid(w, h)
    out = np.zeros(w * h)
    for i in reversed(range(mpi.plane_count)):  # back to front
        if hs[i] is None:
            continue
        u, v, _, valid = project_pixels(hs[i], grid)
        terms = sample_terms(u, v, alphas.shape[1], alphas.shape[2], valid)
        a = sample_with_terms(alphas[i], terms)
        out = out * (1.0 - a) + depths[i] * a
    return out.reshape(h, w)


def render_forward(mpi: Mpi, target: CameraModel, want_tape=False, depths=None,
                   clamped=None):
    """Numpy reference forward pass (float64), optionally recording a tape.

    Returns (pixels (N, 3), accumulated_alpha (N,), tape, skipped_planes).
    The tape carries everything the adjoint pass needs: per-plane sample
    footprints, masked corner values, warped results, and the composite
    running state before each plane was applied. `clamped` optionally
    supplies precomputed (alphas, textures) in [0, 1] so repeated renders of
    one snapshot skip the clamp.
    """
    if depths is None:
        depths = mpi.current_depths()
    alphas, textures = clamped if clamped is not None else (mpi.alphas, mpi.textures)
    hs = plane_homographies(mpi, target, depths)
    w, h = target.image_size
    grid = pixel_grid(w, h)
    n = w * h
    ch, cw = alphas.shape[1], alphas.shape[2]

    out = np.zeros((n, 3))
    keep = np.ones(n)
    skipped = sum(1 for H in hs if H is None)
    plane_tapes = [None] * mpi.plane_count
    prefixes = [None] * mpi.plane_count if want_tape else None
    for i in reversed(range(mpi.plane_count)):  # back (largest depth) to front
        if hs[i] is None:
            continue
        u, v, wh, valid = project_pixels(hs[i], grid)
        terms = sample_terms(u, v, ch, cw, valid)
        ac = gather_corners(alphas[i], terms)
        cc = gather_corners(textures[i // mpi.sharing_factor], terms)
        a = blend_corners(ac, terms)
        c = blend_corners(cc, terms)
        if want_tape:
            prefixes[i] = out.copy()
            plane_tapes[i] = PlaneTape(
                terms=terms, a=a, c=c, w=wh, u=u, v=v,
                alpha_corners=ac * terms.mask,
                color_corners=cc * terms.mask[..., None],
            )
        out = out * (1.0 - a)[:, None] + c * a[:, None]
        keep = keep * (1.0 - a)

    tape = None
    if want_tape:
        tape = RenderTape(
            grid=grid, plane_tapes=plane_tapes, prefixes=prefixes,
            depths=depths, out=out,
        )
    return out, 1.0 - keep, tape, skipped


@dataclass
class PlaneTape:
    """Per-plane forward intermediates for the adjoint pass."""

    terms: SampleTerms
    a: np.ndarray              # warped alpha (N,)
    c: np.ndarray              # warped color (N, 3)
    w: np.ndarray              # homogeneous denominators (N,)
    u: np.ndarray
    v: np.ndarray
    alpha_corners: np.ndarray  # (4, N), zero outside the layer
    color_corners: np.ndarray  # (4, N, 3)


@dataclass
class RenderTape:
    """Intermediates of render_forward needed by the adjoint pass."""

    grid: np.ndarray
    plane_tapes: list        # PlaneTape or None per plane
    prefixes: list           # per plane: composite before the plane was applied
    depths: np.ndarray
    out: np.ndarray
