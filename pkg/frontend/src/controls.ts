/** Pointer/touch/wheel camera controls: drag to orbit, shift-drag or
 * two-finger drag to pan, wheel or pinch to dolly. Pure state transitions
 * live here so they stay unit-testable; DOM wiring is at the bottom.
 */

import { OrbitState, Vec3, addV, clampOrbit, cross, matVec3, normalize, orbitCamera, scaleV, subV, transpose3 } from "./math.js";
import type { Camera } from "./math.js";

export function orbitBy(s: OrbitState, dxPixels: number, dyPixels: number,
                        viewportW: number): OrbitState {
  const scale = (2 * Math.PI) / Math.max(viewportW, 1);
  return clampOrbit({
    ...s,
    yaw: s.yaw - dxPixels * scale,
    pitch: s.pitch + dyPixels * scale,
  });
}

export function dollyBy(s: OrbitState, wheelDelta: number): OrbitState {
  return clampOrbit({ ...s, radius: s.radius * Math.exp(wheelDelta * 0.001) });
}

export function panBy(s: OrbitState, dxPixels: number, dyPixels: number,
                      host: Camera): OrbitState {
  const cam = orbitCamera(s, host);
  const rInv = transpose3(cam.rotation);
  const focal = host.intrinsics[0];
  const perPixel = s.radius / Math.max(focal, 1e-6);
  const right = matVec3(rInv, [1, 0, 0]) as Vec3;
  const down = matVec3(rInv, [0, 1, 0]) as Vec3;
  const shift = addV(scaleV(right, -dxPixels * perPixel), scaleV(down, -dyPixels * perPixel));
  return { ...s, target: addV(s.target, shift) };
}

export interface ControlCallbacks {
  getState(): OrbitState;
  setState(next: OrbitState): void;
}

/** Attach listeners to the canvas; returns a detach function. */
export function attachControls(canvas: HTMLCanvasElement, host: Camera,
                               cb: ControlCallbacks): () => void {
  let dragging = false;
  let panning = false;
  let lastX = 0, lastY = 0;
  let pinchDist = 0;

  const down = (e: PointerEvent) => {
    dragging = true;
    panning = e.shiftKey || e.button === 2;
    lastX = e.clientX;
    lastY = e.clientY;
    canvas.setPointerCapture(e.pointerId);
  };
  const move = (e: PointerEvent) => {
    if (!dragging) return;
    const dx = e.clientX - lastX;
    const dy = e.clientY - lastY;
    lastX = e.clientX;
    lastY = e.clientY;
    const s = cb.getState();
    cb.setState(panning ? panBy(s, dx, dy, host) : orbitBy(s, dx, dy, canvas.clientWidth));
  };
  const up = () => { dragging = false; };
  const wheel = (e: WheelEvent) => {
    e.preventDefault();
    cb.setState(dollyBy(cb.getState(), e.deltaY));
  };
  const touchStart = (e: TouchEvent) => {
    if (e.touches.length === 2) {
      pinchDist = Math.hypot(
        e.touches[0].clientX - e.touches[1].clientX,
        e.touches[0].clientY - e.touches[1].clientY,
      );
    }
  };
  const touchMove = (e: TouchEvent) => {
    if (e.touches.length === 2 && pinchDist > 0) {
      e.preventDefault();
      const d = Math.hypot(
        e.touches[0].clientX - e.touches[1].clientX,
        e.touches[0].clientY - e.touches[1].clientY,
      );
      cb.setState(dollyBy(cb.getState(), (pinchDist - d) * 4));
      pinchDist = d;
    }
  };
  const contextMenu = (e: Event) => e.preventDefault();

  canvas.addEventListener("pointerdown", down);
  canvas.addEventListener("pointermove", move);
  canvas.addEventListener("pointerup", up);
  canvas.addEventListener("pointercancel", up);
  canvas.addEventListener("wheel", wheel, { passive: false });
  canvas.addEventListener("touchstart", touchStart, { passive: true });
  canvas.addEventListener("touchmove", touchMove, { passive: false });
  canvas.addEventListener("contextmenu", contextMenu);
  return () => {
    canvas.removeEventListener("pointerdown", down);
    canvas.removeEventListener("pointermove", move);
    canvas.removeEventListener("pointerup", up);
    canvas.removeEventListener("pointercancel", up);
    canvas.removeEventListener("wheel", wheel);
    canvas.removeEventListener("touchstart", touchStart);
    canvas.removeEventListener("touchmove", touchMove);
    canvas.removeEventListener("contextmenu", contextMenu);
  };
}
