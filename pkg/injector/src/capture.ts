/**
 * Canvas bitmap capture and dataset-convention file naming.
 *
 * Capture prefers the extract plugin's pixel readback and falls back to
 * a raw gl.readPixels of the current framebuffer. Filenames follow the
 * harness convention `<app_id>__<label>.png`, with COR dumps stored
 * alongside as `<app_id>__<label>.json`.
 */

import { InjectionError, InjectionTarget, resolveRenderer } from "./injector.js";

export const CAPTURE_WIDTH = 1280;
export const CAPTURE_HEIGHT = 720;

export type CaptureLabel = "bugfree" | "state" | "rendering" | "layout" | "appearance";

export const CAPTURE_LABELS: CaptureLabel[] = [
  "bugfree",
  "state",
  "rendering",
  "layout",
  "appearance",
];

export interface CaptureResult {
  width: number;
  height: number;
  /** RGBA8, rows top to bottom. */
  pixels: Uint8Array;
}

export function captureFilename(appId: string, label: CaptureLabel): string {
  if (!appId || appId.includes("/")) {
    throw new InjectionError(`invalid app id for capture filename: ${appId}`);
  }
  return `${appId}__${label}.png`;
}

export function corFilename(appId: string, label: CaptureLabel): string {
  return captureFilename(appId, label).replace(/\.png$/, ".json");
}

function rendererSize(target: InjectionTarget): { width: number; height: number } {
  const renderer = resolveRenderer(target);
  const width = renderer.width ?? renderer.view?.width;
  const height = renderer.height ?? renderer.view?.height;
  if (typeof width !== "number" || typeof height !== "number") {
    throw new InjectionError("renderer does not expose its canvas size");
  }
  return { width, height };
}

export function capture(target: InjectionTarget): CaptureResult {
  const renderer = resolveRenderer(target);
  const { width, height } = rendererSize(target);

  const extract = renderer.extract;
  if (extract?.pixels) {
    const pixels = extract.pixels();
    return { width, height, pixels: new Uint8Array(pixels) };
  }

  const gl = renderer.gl;
  if (gl) {
    const bottomUp = new Uint8Array(width * height * 4);
    gl.readPixels(0, 0, width, height, gl.RGBA, gl.UNSIGNED_BYTE, bottomUp);
    const pixels = new Uint8Array(width * height * 4);
    const stride = width * 4;
    for (let y = 0; y < height; y += 1) {
      pixels.set(
        bottomUp.subarray((height - 1 - y) * stride, (height - y) * stride),
        y * stride,
      );
    }
    return { width, height, pixels };
  }

  throw new InjectionError("canvas not found: renderer exposes neither extract nor gl");
}
