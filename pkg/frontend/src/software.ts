/** CPU reference compositor.
 *
 * Mathematically identical to the GL path (rasterized planar quads under a
 * pinhole camera realize the same per-plane homography): per output pixel,
 * map through each plane's homography, bilinear-sample alpha and shared
 * texture with zero outside, and blend front to back with the transmittance
 * form of the over operator. Used by the test suite for viewer-vs-native
 * parity and by the in-page self-check.
 */

import { Camera, Mat3, planeHomography } from "./math.js";

export interface CpuFrame {
  planes: number;
  sharing: number;
  canvasW: number;
  canvasH: number;
  padding: number;
  depths: number[];
  alphas: Float32Array;   // planes * canvasH * canvasW
  textures: Float32Array; // (planes/sharing) * canvasH * canvasW * 3
}

export interface CpuRenderOptions {
  depthView?: boolean;
  exposure?: { beta: [number, number, number]; gamma: [number, number, number] };
}

function sampleBilinear(
  data: Float32Array, base: number, w: number, h: number, stride: number,
  channel: number, u: number, v: number,
): number {
  const x0 = Math.floor(u);
  const y0 = Math.floor(v);
  if (x0 < -1 || x0 >= w || y0 < -1 || y0 >= h) return 0;
  const fx = u - x0;
  const fy = v - y0;
  let acc = 0;
  for (let dy = 0; dy <= 1; dy++) {
    const yy = y0 + dy;
    if (yy < 0 || yy >= h) continue;
    const wy = dy ? fy : 1 - fy;
    for (let dx = 0; dx <= 1; dx++) {
      const xx = x0 + dx;
      if (xx < 0 || xx >= w) continue;
      const wx = dx ? fx : 1 - fx;
      acc += wx * wy * data[base + (yy * w + xx) * stride + channel];
    }
  }
  return acc;
}

/** Render a frame into an (H*W*3) Float32Array in [0, 1]. */
export function renderCpu(
  frame: CpuFrame, host: Camera, view: Camera, opts: CpuRenderOptions = {},
): Float32Array {
  const { canvasW: cw, canvasH: ch } = frame;
  const width = view.width;
  const height = view.height;
  const homs: (Mat3 | null)[] = frame.depths.map((d) =>
    planeHomography(host, view, d, frame.padding),
  );
  const dmin = frame.depths[0];
  const dmax = frame.depths[frame.depths.length - 1];
  const out = new Float32Array(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      let r = 0, g = 0, b = 0, t = 1;
      for (let p = 0; p < frame.planes; p++) {
        // front to back: depths ascend with plane index
        const hmat = homs[p];
        if (!hmat) continue;
        const w = hmat[6] * x + hmat[7] * y + hmat[8];
        if (w <= 1e-12) continue;
        const u = (hmat[0] * x + hmat[1] * y + hmat[2]) / w;
        const v = (hmat[3] * x + hmat[4] * y + hmat[5]) / w;
        const a = sampleBilinear(frame.alphas, p * ch * cw, cw, ch, 1, 0, u, v);
        if (a <= 0) continue;
        const contrib = a * t;
        if (opts.depthView) {
          const depthNorm = (frame.depths[p] - dmin) / Math.max(dmax - dmin, 1e-9);
          r += depthNorm * contrib;
          g += depthNorm * contrib;
          b += depthNorm * contrib;
        } else {
          const tex = Math.floor(p / frame.sharing);
          const base = tex * ch * cw * 3;
          r += sampleBilinear(frame.textures, base, cw, ch, 3, 0, u, v) * contrib;
          g += sampleBilinear(frame.textures, base, cw, ch, 3, 1, u, v) * contrib;
          b += sampleBilinear(frame.textures, base, cw, ch, 3, 2, u, v) * contrib;
        }
        t *= 1 - a;
        if (t < 1e-4) break;
      }
      const i = (y * width + x) * 3;
      out[i] = r;
      out[i + 1] = g;
      out[i + 2] = b;
    }
  }
  if (opts.exposure) {
    const { beta, gamma } = opts.exposure;
    for (let i = 0; i < out.length; i++) {
      const c = i % 3;
      out[i] = Math.min(1, Math.max(0, (out[i] + beta[c]) * gamma[c]));
    }
  }
  return out;
}

/** Unpack an 8-bit RGBA atlas (as raw pixels) into CpuFrame layer arrays. */
export function unpackAtlases(
  planes: number, sharing: number, canvasW: number, canvasH: number,
  alphaGridCols: number, textureGridCols: number,
  alphaRgba: Uint8Array, alphaWidth: number,
  textureRgba: Uint8Array, textureWidth: number,
): { alphas: Float32Array; textures: Float32Array } {
  const alphas = new Float32Array(planes * canvasH * canvasW);
  for (let p = 0; p < planes; p++) {
    const tileX = (p % alphaGridCols) * canvasW;
    const tileY = Math.floor(p / alphaGridCols) * canvasH;
    for (let y = 0; y < canvasH; y++)
      for (let x = 0; x < canvasW; x++) {
        const src = ((tileY + y) * alphaWidth + tileX + x) * 4;
        alphas[(p * canvasH + y) * canvasW + x] = alphaRgba[src + 3] / 255;
      }
  }
  const groups = planes / sharing;
  const textures = new Float32Array(groups * canvasH * canvasW * 3);
  for (let gIdx = 0; gIdx < groups; gIdx++) {
    const tileX = (gIdx % textureGridCols) * canvasW;
    const tileY = Math.floor(gIdx / textureGridCols) * canvasH;
    for (let y = 0; y < canvasH; y++)
      for (let x = 0; x < canvasW; x++) {
        const src = ((tileY + y) * textureWidth + tileX + x) * 4;
        const dst = ((gIdx * canvasH + y) * canvasW + x) * 3;
        textures[dst] = textureRgba[src] / 255;
        textures[dst + 1] = textureRgba[src + 1] / 255;
        textures[dst + 2] = textureRgba[src + 2] / 255;
      }
  }
  return { alphas, textures };
}
