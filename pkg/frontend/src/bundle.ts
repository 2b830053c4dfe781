/** Bundle loading and validation: index.json plus PNG atlases. */

import type { Camera, Mat3, Vec3 } from "./math.js";

export const SUPPORTED_BUNDLE_VERSION = 1;

export interface FrameEntry {
  name: string;
  depths: number[];
  alphaAtlas: string;
  textureAtlas: string;
}

export interface BundleIndex {
  version: number;
  planes: number;
  sharing: number;
  canvasSize: [number, number];
  renderSize: [number, number];
  padding: number;
  camera: Camera;
  alphaGrid: { cols: number; rows: number };
  textureGrid: { cols: number; rows: number };
  frames: FrameEntry[];
  exposure?: { beta: Vec3; gamma: Vec3 };
}

export class BundleError extends Error {
  constructor(public pointer: string, message: string) {
    super(`${pointer}: ${message}`);
  }
}

function wantNumber(obj: any, key: string, ptr: string): number {
  const v = obj?.[key];
  if (typeof v !== "number" || !Number.isFinite(v))
    throw new BundleError(`${ptr}/${key}`, "expected a finite number");
  return v;
}

function wantMat3(obj: any, key: string, ptr: string): Mat3 {
  const v = obj?.[key];
  if (!Array.isArray(v) || v.length !== 3 || v.some((r) => !Array.isArray(r) || r.length !== 3))
    throw new BundleError(`${ptr}/${key}`, "expected a 3x3 matrix");
  return v.flat().map(Number);
}

/** Validate a parsed index.json document into a typed BundleIndex. */
export function parseIndex(doc: any): BundleIndex {
  if (typeof doc !== "object" || doc === null)
    throw new BundleError("/", "index must be an object");
  const version = wantNumber(doc, "version", "");
  if (version !== SUPPORTED_BUNDLE_VERSION)
    throw new BundleError("/version", `bundle version ${version} unsupported (viewer speaks ${SUPPORTED_BUNDLE_VERSION})`);
  const planes = wantNumber(doc, "planes", "");
  const sharing = wantNumber(doc, "sharing", "");
  if (planes < 1 || sharing < 1 || planes % sharing !== 0)
    throw new BundleError("/planes", `bad plane/sharing counts ${planes}/${sharing}`);
  const canvas = doc.canvas_size;
  const render = doc.render_size;
  if (!Array.isArray(canvas) || canvas.length !== 2)
    throw new BundleError("/canvas_size", "expected [width, height]");
  if (!Array.isArray(render) || render.length !== 2)
    throw new BundleError("/render_size", "expected [width, height]");
  const cam = doc.camera;
  const camera: Camera = {
    intrinsics: wantMat3(cam, "intrinsics", "/camera"),
    rotation: wantMat3(cam, "rotation", "/camera"),
    translation: (cam?.translation ?? []).map(Number) as Vec3,
    width: render[0],
    height: render[1],
  };
  if (camera.translation.length !== 3)
    throw new BundleError("/camera/translation", "expected 3 numbers");
  if (!Array.isArray(doc.frames) || doc.frames.length === 0)
    throw new BundleError("/frames", "bundle has no frames");
  const frames: FrameEntry[] = doc.frames.map((f: any, i: number) => {
    if (!Array.isArray(f?.depths) || f.depths.length !== planes)
      throw new BundleError(`/frames/${i}/depths`, `expected ${planes} depths`);
    const depths = f.depths.map(Number);
    for (let j = 1; j < depths.length; j++)
      if (!(depths[j] > depths[j - 1]))
        throw new BundleError(`/frames/${i}/depths`, "depths must ascend");
    if (typeof f.alpha_atlas !== "string" || typeof f.texture_atlas !== "string")
      throw new BundleError(`/frames/${i}`, "missing atlas paths");
    return {
      name: String(f.name ?? i),
      depths,
      alphaAtlas: f.alpha_atlas,
      textureAtlas: f.texture_atlas,
    };
  });
  const grid = (key: string) => {
    const g = doc[key];
    const cols = wantNumber(g ?? {}, "cols", `/${key}`);
    const rows = wantNumber(g ?? {}, "rows", `/${key}`);
    return { cols, rows };
  };
  const index: BundleIndex = {
    version,
    planes,
    sharing,
    canvasSize: [canvas[0], canvas[1]],
    renderSize: [render[0], render[1]],
    padding: wantNumber(doc, "padding", ""),
    camera,
    alphaGrid: grid("alpha_grid"),
    textureGrid: grid("texture_grid"),
    frames,
  };
  if (doc.exposure) {
    index.exposure = {
      beta: doc.exposure.beta.map(Number) as Vec3,
      gamma: doc.exposure.gamma.map(Number) as Vec3,
    };
  }
  return index;
}

export interface LoadedFrame {
  entry: FrameEntry;
  alphaAtlas: HTMLImageElement;
  textureAtlas: HTMLImageElement;
}

export interface Scene {
  index: BundleIndex;
  frames: LoadedFrame[];
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new BundleError(url, "failed to load atlas image"));
    img.src = url;
  });
}

/** Fetch and decode a whole bundle. Browser only (uses fetch + Image). */
export async function loadBundle(baseUrl: string): Promise<Scene> {
  const url = baseUrl.replace(/\/?$/, "/");
  const resp = await fetch(url + "index.json");
  if (!resp.ok)
    throw new BundleError("/index.json", `HTTP ${resp.status} fetching bundle index`);
  const index = parseIndex(await resp.json());
  const frames = await Promise.all(
    index.frames.map(async (entry) => ({
      entry,
      alphaAtlas: await loadImage(url + entry.alphaAtlas),
      textureAtlas: await loadImage(url + entry.textureAtlas),
    })),
  );
  return { index, frames };
}

/** Back-to-front draw order (indices into the plane list) for one frame.
 *  Depths ascend with plane index, so this is simply reversed index order;
 *  kept as a function so the invariant is assertable in one place. */
export function drawOrder(depths: number[]): number[] {
  const order = depths.map((_, i) => i);
  order.sort((a, b) => depths[b] - depths[a]);
  return order;
}
