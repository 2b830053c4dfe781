/** Small dense linear algebra + the camera math shared by the GL and CPU paths.
 *
 * Conventions mirror the native engine: world-to-camera poses x_cam = R x + t,
 * pixel coordinates address pixel centers, MPI planes are z = depth in the
 * host camera frame.
 */

export type Vec3 = [number, number, number];
export type Mat3 = number[]; // row-major, length 9

export interface Camera {
  intrinsics: Mat3;
  rotation: Mat3; // world -> camera
  translation: Vec3;
  width: number;
  height: number;
}

export function matMul3(a: Mat3, b: Mat3): Mat3 {
  const out = new Array(9).fill(0);
  for (let i = 0; i < 3; i++)
    for (let j = 0; j < 3; j++) {
      let s = 0;
      for (let k = 0; k < 3; k++) s += a[i * 3 + k] * b[k * 3 + j];
      out[i * 3 + j] = s;
    }
  return out;
}

export function matVec3(a: Mat3, v: Vec3): Vec3 {
  return [
    a[0] * v[0] + a[1] * v[1] + a[2] * v[2],
    a[3] * v[0] + a[4] * v[1] + a[5] * v[2],
    a[6] * v[0] + a[7] * v[1] + a[8] * v[2],
  ];
}

export function transpose3(a: Mat3): Mat3 {
  return [a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]];
}

export function inverse3(a: Mat3): Mat3 {
  const [m0, m1, m2, m3, m4, m5, m6, m7, m8] = a;
  const c0 = m4 * m8 - m5 * m7;
  const c1 = m5 * m6 - m3 * m8;
  const c2 = m3 * m7 - m4 * m6;
  const det = m0 * c0 + m1 * c1 + m2 * c2;
  if (Math.abs(det) < 1e-14) throw new Error("singular 3x3 matrix");
  const d = 1 / det;
  return [
    c0 * d, (m2 * m7 - m1 * m8) * d, (m1 * m5 - m2 * m4) * d,
    c1 * d, (m0 * m8 - m2 * m6) * d, (m2 * m3 - m0 * m5) * d,
    c2 * d, (m1 * m6 - m0 * m7) * d, (m0 * m4 - m1 * m3) * d,
  ];
}

export function addV(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function subV(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function scaleV(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

export function normalize(a: Vec3): Vec3 {
  return scaleV(a, 1 / norm(a));
}

export function cameraCenter(cam: Camera): Vec3 {
  // -R^T t
  return scaleV(matVec3(transpose3(cam.rotation), cam.translation), -1);
}

/** Relative pose (R, t) with x_source = R x_target + t. */
export function relativePose(target: Camera, source: Camera): { r: Mat3; t: Vec3 } {
  const r = matMul3(source.rotation, transpose3(target.rotation));
  const t = subV(source.translation, matVec3(r, target.translation));
  return { r, t };
}

/** Homography from target pixels to source-canvas pixels for the plane
 *  z_source = depth; identical formula to the native renderer. `pad` shifts
 *  the source principal point onto the padded canvas. */
export function planeHomography(
  source: Camera, target: Camera, depth: number, pad: number,
): Mat3 | null {
  const { r, t } = relativePose(target, source);
  const den = depth - t[2];
  if (Math.abs(den) < 1e-12) return null; // plane through the target center
  const r3 = [r[6], r[7], r[8]];
  const m: Mat3 = new Array(9);
  for (let i = 0; i < 3; i++)
    for (let j = 0; j < 3; j++) m[i * 3 + j] = r[i * 3 + j] + (t[i] * r3[j]) / den;
  const ks = source.intrinsics.slice();
  ks[2] += pad;
  ks[5] += pad;
  return matMul3(ks, matMul3(m, inverse3(target.intrinsics)));
}

/** World-space corners of the padded canvas quad at `depth` in the host
 *  frustum, ordered (0,0), (W,0), (0,H), (W,H) in canvas coordinates.
 *  Corners sit half a pixel beyond the outer pixel centers. */
export function planeCorners(
  host: Camera, depth: number, pad: number, canvasW: number, canvasH: number,
): Vec3[] {
  const kInv = inverse3(host.intrinsics);
  const rInv = transpose3(host.rotation);
  const corners: Vec3[] = [];
  for (const [cx, cy] of [
    [-0.5, -0.5],
    [canvasW - 0.5, -0.5],
    [-0.5, canvasH - 0.5],
    [canvasW - 0.5, canvasH - 0.5],
  ]) {
    const px = cx - pad; // canvas -> host pixel coordinates
    const py = cy - pad;
    const dir = matVec3(kInv, [px, py, 1]);
    const camPt = scaleV(dir, depth / dir[2]);
    corners.push(matVec3(rInv, subV(camPt, host.translation)));
  }
  return corners;
}

/** Orbit camera parametrization around a world target point. */
export interface OrbitState {
  yaw: number;    // radians around the world up axis
  pitch: number;  // radians, clamped short of the poles
  radius: number;
  target: Vec3;
  frame: number;
  depthView: boolean;
  exposureOn: boolean;
}

const PITCH_LIMIT = 1.45;

export function clampOrbit(s: OrbitState): OrbitState {
  return {
    ...s,
    pitch: Math.min(PITCH_LIMIT, Math.max(-PITCH_LIMIT, s.pitch)),
    radius: Math.min(50, Math.max(1e-3, s.radius)),
  };
}

/** Camera for an orbit state; host supplies intrinsics and image size.
 *  The viewer's world frame is the host camera frame (host pose identity in
 *  exported bundles keeps this exact). Up axis is -y (image rows grow down).
 */
export function orbitCamera(state: OrbitState, host: Camera): Camera {
  const cy = Math.cos(state.yaw), sy = Math.sin(state.yaw);
  const cp = Math.cos(state.pitch), sp = Math.sin(state.pitch);
  const offset: Vec3 = [
    state.radius * sy * cp,
    state.radius * sp,
    -state.radius * cy * cp,
  ];
  const eye = addV(state.target, offset);
  const fwd = normalize(subV(state.target, eye));
  const upHint: Vec3 = [0, -1, 0];
  let right = cross(fwd, upHint);
  const n = norm(right);
  right = n < 1e-9 ? [1, 0, 0] : scaleV(right, 1 / n);
  const down = cross(fwd, right);
  const rotation: Mat3 = [
    right[0], right[1], right[2],
    down[0], down[1], down[2],
    fwd[0], fwd[1], fwd[2],
  ];
  const translation = scaleV(matVec3(rotation, eye), -1);
  return {
    intrinsics: host.intrinsics.slice(),
    rotation,
    translation,
    width: host.width,
    height: host.height,
  };
}

export function defaultOrbit(midDepth: number): OrbitState {
  return {
    yaw: 0,
    pitch: 0,
    radius: midDepth,
    target: [0, 0, midDepth],
    frame: 0,
    depthView: false,
    exposureOn: true,
  };
}

/** URL-hash round trip for shareable viewpoints. */
export function formatHash(s: OrbitState): string {
  const f = (x: number) => x.toFixed(5).replace(/\.?0+$/, "");
  return (
    `#y=${f(s.yaw)}&p=${f(s.pitch)}&r=${f(s.radius)}` +
    `&tx=${f(s.target[0])}&ty=${f(s.target[1])}&tz=${f(s.target[2])}` +
    `&fr=${s.frame}&d=${s.depthView ? 1 : 0}&e=${s.exposureOn ? 1 : 0}`
  );
}

export function parseHash(hash: string, fallback: OrbitState): OrbitState {
  if (!hash.startsWith("#")) return fallback;
  const params = new Map<string, string>();
  for (const part of hash.slice(1).split("&")) {
    const [k, v] = part.split("=");
    if (k && v !== undefined) params.set(k, v);
  }
  const num = (key: string, dflt: number) => {
    const raw = params.get(key);
    const val = raw === undefined ? NaN : Number(raw);
    return Number.isFinite(val) ? val : dflt;
  };
  return clampOrbit({
    yaw: num("y", fallback.yaw),
    pitch: num("p", fallback.pitch),
    radius: num("r", fallback.radius),
    target: [
      num("tx", fallback.target[0]),
      num("ty", fallback.target[1]),
      num("tz", fallback.target[2]),
    ],
    frame: Math.max(0, Math.round(num("fr", fallback.frame))),
    depthView: num("d", fallback.depthView ? 1 : 0) === 1,
    exposureOn: num("e", fallback.exposureOn ? 1 : 0) === 1,
  });
}
