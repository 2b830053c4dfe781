/** Viewer entry point: load the bundle named by ?bundle=, start the render
 * loop, wire controls, scrubber, toggles, and the URL-hash viewpoint. */

import { loadBundle, Scene } from "./bundle.js";
import { attachControls } from "./controls.js";
import { PlaneRenderer } from "./gl.js";
import {
  OrbitState,
  defaultOrbit,
  formatHash,
  orbitCamera,
  parseHash,
} from "./math.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showError(message: string) {
  const banner = el<HTMLDivElement>("error-banner");
  banner.textContent = message;
  banner.style.display = "block";
}

async function start() {
  const params = new URLSearchParams(location.search);
  const bundleUrl = params.get("bundle") ?? "bundle";
  let scene: Scene;
  try {
    scene = await loadBundle(bundleUrl);
  } catch (err) {
    showError(String(err));
    return;
  }
  const { index } = scene;
  const canvas = el<HTMLCanvasElement>("view");
  canvas.width = index.renderSize[0];
  canvas.height = index.renderSize[1];

  const depths = index.frames[0].depths;
  const mid = depths[Math.floor(depths.length / 2)];
  let state: OrbitState = parseHash(location.hash, defaultOrbit(mid));
  state.frame = Math.min(state.frame, index.frames.length - 1);

  let renderer: PlaneRenderer;
  try {
    renderer = new PlaneRenderer(canvas, scene);
  } catch (err) {
    showError(String(err));
    return;
  }
  canvas.addEventListener("webglcontextlost", (e) => {
    e.preventDefault();
    showError("WebGL context lost; reload the page to continue.");
  });

  const scrubber = el<HTMLInputElement>("frame");
  scrubber.max = String(index.frames.length - 1);
  scrubber.value = String(state.frame);
  const frameLabel = el<HTMLSpanElement>("frame-label");
  const playButton = el<HTMLButtonElement>("play");
  const depthToggle = el<HTMLInputElement>("depth-toggle");
  const exposureToggle = el<HTMLInputElement>("exposure-toggle");
  const fpsLabel = el<HTMLSpanElement>("fps");
  depthToggle.checked = state.depthView;
  exposureToggle.checked = state.exposureOn;
  exposureToggle.disabled = !index.exposure;
  let playing = false;
  let lastHashWrite = 0;

  const setState = (next: OrbitState) => {
    state = next;
    scrubber.value = String(state.frame);
    const now = performance.now();
    if (now - lastHashWrite > 250) {  // keep history usable while dragging
      history.replaceState(null, "", formatHash(state));
      lastHashWrite = now;
    }
  };
  attachControls(canvas, index.camera, {
    getState: () => state,
    setState,
  });
  scrubber.addEventListener("input", () => {
    setState({ ...state, frame: Number(scrubber.value) });
  });
  playButton.addEventListener("click", () => {
    playing = !playing;
    playButton.textContent = playing ? "pause" : "play";
  });
  depthToggle.addEventListener("change", () => {
    setState({ ...state, depthView: depthToggle.checked });
  });
  exposureToggle.addEventListener("change", () => {
    setState({ ...state, exposureOn: exposureToggle.checked });
  });
  window.addEventListener("hashchange", () => {
    state = parseHash(location.hash, state);
    scrubber.value = String(state.frame);
    depthToggle.checked = state.depthView;
    exposureToggle.checked = state.exposureOn;
  });

  let frames = 0;
  let windowStart = performance.now();
  let lastAdvance = performance.now();
  const loop = () => {
    const snapshot = state; // frame-coherent camera state
    const now = performance.now();
    if (playing && now - lastAdvance > 1000 / 24) {
      lastAdvance = now;
      setState({ ...snapshot, frame: (snapshot.frame + 1) % index.frames.length });
    }
    const camera = orbitCamera(snapshot, index.camera);
    const exposure = snapshot.exposureOn && index.exposure ? index.exposure : null;
    renderer.render(snapshot.frame, camera, snapshot.depthView, exposure);
    frameLabel.textContent = `${snapshot.frame + 1}/${index.frames.length}`;
    frames += 1;
    if (now - windowStart > 1000) {
      fpsLabel.textContent = `${((frames * 1000) / (now - windowStart)).toFixed(0)} fps`;
      frames = 0;
      windowStart = now;
    }
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);
}

start();
