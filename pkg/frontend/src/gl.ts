/** WebGL2 renderer: one textured quad per plane, drawn back to front with
 * standard over blending. Perspective-correct rasterization of a planar quad
 * under a pinhole camera realizes exactly the per-plane homography the native
 * renderer samples, so the two paths agree up to texture filtering precision.
 * Texture sharing is honored on the GPU: one texture tile is bound per K
 * planes via atlas coordinates.
 */

import type { Scene } from "./bundle.js";
import { drawOrder } from "./bundle.js";
import { Camera, Vec3, matVec3, planeCorners } from "./math.js";

const VERT = `#version 300 es
precision highp float;
layout(location=0) in vec3 worldPos;
layout(location=1) in vec2 alphaUv;
layout(location=2) in vec2 texUv;
uniform mat3 uRotation;   // world -> view camera
uniform vec3 uTranslation;
uniform mat3 uIntrinsics;
uniform vec2 uViewport;   // render width, height in pixels
out vec2 vAlphaUv;
out vec2 vTexUv;
void main() {
  vec3 cam = uRotation * worldPos + uTranslation;
  vec3 pix = uIntrinsics * cam;          // pixel * depth homogeneous coords
  // pixel centers -> NDC: x_ndc = (x + 0.5) / W * 2 - 1, y flipped
  float zn = cam.z;
  vec2 ndc = vec2(
    (pix.x + 0.5 * zn) / (uViewport.x * zn) * 2.0 - 1.0,
    1.0 - (pix.y + 0.5 * zn) / (uViewport.y * zn) * 2.0
  );
  gl_Position = vec4(ndc * zn, 0.0, zn);
  vAlphaUv = alphaUv;
  vTexUv = texUv;
}`;

const FRAG = `#version 300 es
precision highp float;
in vec2 vAlphaUv;
in vec2 vTexUv;
uniform sampler2D uAlphaAtlas;
uniform sampler2D uTexAtlas;
uniform float uDepthShade;   // < 0: color mode, else normalized plane depth
uniform vec3 uBeta;
uniform vec3 uGamma;
out vec4 color;
void main() {
  float a = texture(uAlphaAtlas, vAlphaUv).a;
  vec3 rgb = uDepthShade >= 0.0 ? vec3(uDepthShade) : texture(uTexAtlas, vTexUv).rgb;
  rgb = clamp((rgb + uBeta) * uGamma, 0.0, 1.0);
  color = vec4(rgb, a);
}`;

function compile(gl: WebGL2RenderingContext, kind: number, src: string): WebGLShader {
  const sh = gl.createShader(kind)!;
  gl.shaderSource(sh, src);
  gl.compileShader(sh);
  if (!gl.getShaderParameter(sh, gl.COMPILE_STATUS))
    throw new Error("shader compile failed: " + gl.getShaderInfoLog(sh));
  return sh;
}

export class PlaneRenderer {
  private gl: WebGL2RenderingContext;
  private program: WebGLProgram;
  private vao: WebGLVertexArrayObject;
  private vertexBuf: WebGLBuffer;
  private frameTextures: { alpha: WebGLTexture; tex: WebGLTexture }[] = [];
  private scene: Scene;
  private uniforms: Record<string, WebGLUniformLocation | null> = {};
  /** Draw order of the last rendered frame (front-most last); debug overlay data. */
  lastDrawOrder: number[] = [];

  constructor(canvas: HTMLCanvasElement, scene: Scene) {
    const gl = canvas.getContext("webgl2", {
      alpha: false, antialias: false, preserveDrawingBuffer: true,
    });
    if (!gl) throw new Error("WebGL2 is unavailable");
    this.gl = gl;
    this.scene = scene;
    const program = gl.createProgram()!;
    gl.attachShader(program, compile(gl, gl.VERTEX_SHADER, VERT));
    gl.attachShader(program, compile(gl, gl.FRAGMENT_SHADER, FRAG));
    gl.linkProgram(program);
    if (!gl.getProgramParameter(program, gl.LINK_STATUS))
      throw new Error("program link failed: " + gl.getProgramInfoLog(program));
    this.program = program;
    for (const name of ["uRotation", "uTranslation", "uIntrinsics", "uViewport",
                        "uAlphaAtlas", "uTexAtlas", "uDepthShade", "uBeta", "uGamma"])
      this.uniforms[name] = gl.getUniformLocation(program, name);
    this.vao = gl.createVertexArray()!;
    this.vertexBuf = gl.createBuffer()!;
    gl.bindVertexArray(this.vao);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.vertexBuf);
    const stride = 7 * 4;
    gl.enableVertexAttribArray(0);
    gl.vertexAttribPointer(0, 3, gl.FLOAT, false, stride, 0);
    gl.enableVertexAttribArray(1);
    gl.vertexAttribPointer(1, 2, gl.FLOAT, false, stride, 12);
    gl.enableVertexAttribArray(2);
    gl.vertexAttribPointer(2, 2, gl.FLOAT, false, stride, 20);
    gl.bindVertexArray(null);
    this.uploadTextures();
    gl.disable(gl.DEPTH_TEST);
    gl.enable(gl.BLEND);
    // straight-alpha over operator, back to front
    gl.blendFuncSeparate(gl.SRC_ALPHA, gl.ONE_MINUS_SRC_ALPHA, gl.ONE, gl.ONE_MINUS_SRC_ALPHA);
  }

  private uploadTextures() {
    const gl = this.gl;
    for (const frame of this.scene.frames) {
      const make = (img: HTMLImageElement) => {
        const tex = gl.createTexture()!;
        gl.bindTexture(gl.TEXTURE_2D, tex);
        gl.pixelStorei(gl.UNPACK_PREMULTIPLY_ALPHA_WEBGL, false);
        gl.pixelStorei(gl.UNPACK_COLORSPACE_CONVERSION_WEBGL, gl.NONE);
        gl.texImage2D(gl.TEXTURE_2D, 0, gl.RGBA8, gl.RGBA, gl.UNSIGNED_BYTE, img);
        gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MIN_FILTER, gl.LINEAR);
        gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MAG_FILTER, gl.LINEAR);
        gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_S, gl.CLAMP_TO_EDGE);
        gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_T, gl.CLAMP_TO_EDGE);
        return tex;
      };
      this.frameTextures.push({
        alpha: make(frame.alphaAtlas),
        tex: make(frame.textureAtlas),
      });
    }
  }

  /** Interleaved quad vertices for every plane of one frame (two triangles
   *  each): world position + alpha/texture atlas UVs. */
  buildVertices(frameIndex: number): Float32Array {
    const { index } = this.scene;
    const host = index.camera;
    const [cw, chh] = index.canvasSize;
    const depths = index.frames[frameIndex].depths;
    const data: number[] = [];
    const aCols = index.alphaGrid.cols;
    const aRows = index.alphaGrid.rows;
    const tCols = index.textureGrid.cols;
    const tRows = index.textureGrid.rows;
    for (let p = 0; p < index.planes; p++) {
      const corners = planeCorners(host, depths[p], index.padding, cw, chh);
      const aU0 = (p % aCols) / aCols, aV0 = Math.floor(p / aCols) / aRows;
      const g = Math.floor(p / index.sharing);
      const tU0 = (g % tCols) / tCols, tV0 = Math.floor(g / tCols) / tRows;
      const corner = (ci: number, fu: number, fv: number) => {
        const w: Vec3 = corners[ci];
        data.push(
          w[0], w[1], w[2],
          aU0 + fu / aCols, aV0 + fv / aRows,
          tU0 + fu / tCols, tV0 + fv / tRows,
        );
      };
      // two triangles: (0,1,2) and (2,1,3) with corners ordered TL,TR,BL,BR
      corner(0, 0, 0); corner(1, 1, 0); corner(2, 0, 1);
      corner(2, 0, 1); corner(1, 1, 0); corner(3, 1, 1);
    }
    return new Float32Array(data);
  }

  render(frameIndex: number, camera: Camera, depthView: boolean,
         exposure: { beta: Vec3; gamma: Vec3 } | null) {
    const gl = this.gl;
    const { index } = this.scene;
    const depths = index.frames[frameIndex].depths;
    this.lastDrawOrder = drawOrder(depths);
    gl.viewport(0, 0, camera.width, camera.height);
    gl.clearColor(0, 0, 0, 1);
    gl.clear(gl.COLOR_BUFFER_BIT);
    gl.useProgram(this.program);
    gl.uniformMatrix3fv(this.uniforms.uRotation, true, camera.rotation);
    gl.uniform3fv(this.uniforms.uTranslation, camera.translation);
    gl.uniformMatrix3fv(this.uniforms.uIntrinsics, true, camera.intrinsics);
    gl.uniform2f(this.uniforms.uViewport, camera.width, camera.height);
    gl.uniform3fv(this.uniforms.uBeta, exposure ? exposure.beta : [0, 0, 0]);
    gl.uniform3fv(this.uniforms.uGamma, exposure ? exposure.gamma : [1, 1, 1]);
    gl.activeTexture(gl.TEXTURE0);
    gl.bindTexture(gl.TEXTURE_2D, this.frameTextures[frameIndex].alpha);
    gl.uniform1i(this.uniforms.uAlphaAtlas, 0);
    gl.activeTexture(gl.TEXTURE1);
    gl.bindTexture(gl.TEXTURE_2D, this.frameTextures[frameIndex].tex);
    gl.uniform1i(this.uniforms.uTexAtlas, 1);

    gl.bindVertexArray(this.vao);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.vertexBuf);
    gl.bufferData(gl.ARRAY_BUFFER, this.buildVertices(frameIndex), gl.DYNAMIC_DRAW);
    const dmin = depths[0];
    const dmax = depths[depths.length - 1];
    for (const p of this.lastDrawOrder) {
      const shade = depthView
        ? (depths[p] - dmin) / Math.max(dmax - dmin, 1e-9)
        : -1.0;
      gl.uniform1f(this.uniforms.uDepthShade, shade);
      gl.drawArrays(gl.TRIANGLES, p * 6, 6);
    }
    gl.bindVertexArray(null);
  }
}
