"""Numba kernels for the real-time float32 render path.

The kernel walks planes front to back per output row, accumulating color with
the transmittance form of the over operator. Per (plane, row) it first bounds
the span of output columns that can sample a nonzero-alpha canvas region
(planes are mostly empty in fitted MPIs), then samples only inside that span.
A pixel whose remaining transmittance drops below the early-exit threshold
stops accumulating; whole rows drop out once every pixel is saturated.

Work is parallelized over output rows; every pixel's arithmetic is
self-contained and sequential in plane order, so results are bit-identical
for any thread count or row tiling.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange, set_num_threads

from .geometry import CameraModel
from .mpi import Mpi
from .rendering import RenderedImage, plane_homographies


class PlaneOccupancy:
    """Per-plane nonzero-alpha bounds on the canvas (conservative culling data).

    row_lo/row_hi: (D,) first/last canvas row with any alpha > 0 (hi < lo when
    the plane is empty). col_lo/col_hi: (D, Hc) per-canvas-row column bounds.
    Computed once per Mpi snapshot; stale bounds are only safe if alphas did
    not grow, so recompute after any optimization step.
    """

    def __init__(self, alphas):
        mask = alphas > 0.0
        d, hc, wc = mask.shape
        any_row = mask.any(axis=2)
        self.col_lo = np.where(any_row, mask.argmax(axis=2), wc).astype(np.int64)
        self.col_hi = np.where(
            any_row, wc - 1 - mask[:, :, ::-1].argmax(axis=2), -1
        ).astype(np.int64)
        any_plane = any_row.any(axis=1)
        self.row_lo = np.where(any_plane, any_row.argmax(axis=1), hc).astype(np.int64)
        self.row_hi = np.where(
            any_plane, hc - 1 - any_row[:, ::-1].argmax(axis=1), -1
        ).astype(np.int64)


@njit(parallel=True, fastmath=True, cache=True)
def _composite_kernel(alphas, textures, tex_of_plane, homs, row0,
                      row_lo, row_hi, col_lo, col_hi,
                      out_rgb, out_alpha, early_exit, want_depth, depths):
    D = alphas.shape[0]
    hc = alphas.shape[1]
    wc = alphas.shape[2]
    height, width = out_alpha.shape
    for row in prange(height):
        y = np.float64(row + row0)
        trans = np.ones(width)
        acc = np.zeros((width, 3))
        planes_since_check = 0
        for p in range(D):
            h = homs[p]
            # row-constant projective coefficients: q(col) = base + slope*col
            wb = h[2, 1] * y + h[2, 2]
            ws = h[2, 0]
            ub = h[0, 1] * y + h[0, 2]
            us = h[0, 0]
            vb = h[1, 1] * y + h[1, 2]
            vs = h[1, 0]

            ca = 0
            cb = width - 1
            w_first = wb
            w_last = wb + ws * (width - 1)
            if w_first > 1e-12 and w_last > 1e-12:
                # source v range over the row (Moebius in col, no interior
                # extremum while w keeps its sign)
                v_first = vb / w_first
                v_last = (vb + vs * (width - 1)) / w_last
                vmin = min(v_first, v_last)
                vmax = max(v_first, v_last)
                r0 = max(int(np.floor(vmin)), row_lo[p] - 1)
                r1 = min(int(np.floor(vmax)) + 1, row_hi[p] + 1)
                if r0 > r1:
                    continue
                # union of canvas column bounds over the touched rows
                cl = wc
                chh = -1
                if r1 - r0 > 64:
                    cl = 0
                    chh = wc - 1
                else:
                    for rr in range(max(r0, 0), min(r1, hc - 1) + 1):
                        if col_lo[p, rr] < cl:
                            cl = col_lo[p, rr]
                        if col_hi[p, rr] > chh:
                            chh = col_hi[p, rr]
                if chh < cl:
                    continue
                # invert u(col) in [cl-1, chh+1] (+/- 1px slop for rounding)
                ulo = np.float64(cl) - 1.0001
                uhi = np.float64(chh) + 1.0001
                d1 = us - ulo * ws
                d2 = us - uhi * ws
                if abs(d1) > 1e-12 and abs(d2) > 1e-12:
                    c1 = (ulo * wb - ub) / d1
                    c2 = (uhi * wb - ub) / d2
                    lo = min(c1, c2)
                    hi = max(c1, c2)
                    if lo > -1e8:
                        ca = max(ca, int(np.floor(lo)))
                    if hi < 1e8:
                        cb = min(cb, int(np.ceil(hi)))
                if ca > cb:
                    continue
            tex = tex_of_plane[p]
            for col in range(ca, cb + 1):
                t = trans[col]
                if t < early_exit:
                    continue
                w = wb + ws * col
                if w <= 1e-12:  # plane behind the target camera at this pixel
                    continue
                iw = 1.0 / w
                u = (ub + us * col) * iw
                v = (vb + vs * col) * iw
                x0 = int(np.floor(u))
                y0 = int(np.floor(v))
                if x0 < -1 or x0 >= wc or y0 < -1 or y0 >= hc:
                    continue
                fx = u - x0
                fy = v - y0
                x1 = x0 + 1
                y1 = y0 + 1
                v00 = x0 >= 0 and y0 >= 0
                v10 = x1 < wc and y0 >= 0
                v01 = x0 >= 0 and y1 < hc
                v11 = x1 < wc and y1 < hc
                w00 = (1.0 - fx) * (1.0 - fy)
                w10 = fx * (1.0 - fy)
                w01 = (1.0 - fx) * fy
                w11 = fx * fy
                a = 0.0
                if v00:
                    a += w00 * alphas[p, y0, x0]
                if v10:
                    a += w10 * alphas[p, y0, x1]
                if v01:
                    a += w01 * alphas[p, y1, x0]
                if v11:
                    a += w11 * alphas[p, y1, x1]
                if a <= 0.0:
                    continue
                contrib = a * t
                if want_depth:
                    acc[col, 0] += depths[p] * contrib
                else:
                    cr = 0.0
                    cg = 0.0
                    cbl = 0.0
                    if v00:
                        cr += w00 * textures[tex, y0, x0, 0]
                        cg += w00 * textures[tex, y0, x0, 1]
                        cbl += w00 * textures[tex, y0, x0, 2]
                    if v10:
                        cr += w10 * textures[tex, y0, x1, 0]
                        cg += w10 * textures[tex, y0, x1, 1]
                        cbl += w10 * textures[tex, y0, x1, 2]
                    if v01:
                        cr += w01 * textures[tex, y1, x0, 0]
                        cg += w01 * textures[tex, y1, x0, 1]
                        cbl += w01 * textures[tex, y1, x0, 2]
                    if v11:
                        cr += w11 * textures[tex, y1, x1, 0]
                        cg += w11 * textures[tex, y1, x1, 1]
                        cbl += w11 * textures[tex, y1, x1, 2]
                    acc[col, 0] += cr * contrib
                    acc[col, 1] += cg * contrib
                    acc[col, 2] += cbl * contrib
                trans[col] = t * (1.0 - a)
            planes_since_check += 1
            if early_exit > 0.0 and planes_since_check >= 4:
                planes_since_check = 0
                mx = 0.0
                for col in range(width):
                    if trans[col] > mx:
                        mx = trans[col]
                if mx < early_exit:
                    break
        for col in range(width):
            out_alpha[row, col] = 1.0 - trans[col]
            out_rgb[row, col, 0] = acc[col, 0]
            out_rgb[row, col, 1] = acc[col, 1]
            out_rgb[row, col, 2] = acc[col, 2]


class RenderScratch:
    """Precomputed float32 layer stacks + occupancy for repeated fast renders.

    Build once per Mpi snapshot (orbit paths, benchmarks, the viewer export);
    rebuilding per frame roughly doubles small-scene render cost.
    """

    def __init__(self, mpi: Mpi):
        self.alphas = mpi.alphas.astype(np.float32)
        self.textures = mpi.textures.astype(np.float32)
        self.tex_of_plane = np.arange(mpi.plane_count) // mpi.sharing_factor
        self.occupancy = PlaneOccupancy(self.alphas)
        self.depths = mpi.current_depths()


def render_fast(mpi: Mpi, target: CameraModel, threads=0, early_exit=1e-4,
                row_range=None, scratch=None, want_depth=False):
    """Float32 render of an Mpi snapshot; see rendering.render_view."""
    if threads and threads > 0:
        set_num_threads(threads)
    if scratch is None:
        scratch = RenderScratch(mpi)
    depths = scratch.depths
    hs = plane_homographies(mpi, target, depths)
    valid = [i for i, H in enumerate(hs) if H is not None]
    skipped = mpi.plane_count - len(valid)
    # depths ascend, so plane order is already front to back
    occ = scratch.occupancy
    if skipped:
        alphas = scratch.alphas[valid]
        tex_of_plane = scratch.tex_of_plane[valid]
        homs = np.stack([hs[i] for i in valid]) if valid else np.zeros((0, 3, 3))
        row_lo, row_hi = occ.row_lo[valid], occ.row_hi[valid]
        col_lo, col_hi = occ.col_lo[valid], occ.col_hi[valid]
        pdepths = depths[valid]
    else:
        alphas = scratch.alphas
        tex_of_plane = scratch.tex_of_plane
        homs = np.stack(hs)
        row_lo, row_hi, col_lo, col_hi = occ.row_lo, occ.row_hi, occ.col_lo, occ.col_hi
        pdepths = depths

    w, h = target.image_size
    row0, row1 = (0, h) if row_range is None else row_range
    out_rgb = np.zeros((row1 - row0, w, 3), dtype=np.float32)
    out_alpha = np.zeros((row1 - row0, w), dtype=np.float32)
    _composite_kernel(alphas, scratch.textures, tex_of_plane, homs, row0,
                      row_lo, row_hi, col_lo, col_hi,
                      out_rgb, out_alpha, float(early_exit),
                      want_depth, np.asarray(pdepths, dtype=np.float64))
    if want_depth:
        return RenderedImage(pixels=out_rgb, accumulated_alpha=out_alpha,
                             skipped_planes=skipped)
    return RenderedImage(pixels=out_rgb, accumulated_alpha=out_alpha,
                         skipped_planes=skipped)
