/**
 * Node-side output helpers: write captures and COR dumps into a dataset
 * directory using the harness naming convention. The browser runtime
 * never imports this module; the driver calls it after pulling pixels
 * out of the page.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { CaptureLabel, CaptureResult, captureFilename, corFilename } from "./capture.js";
import { CorDump, serializeCor } from "./cor.js";
import { InjectionError } from "./injector.js";
import { encodePng } from "./png.js";

export function saveCapture(
  result: CaptureResult,
  appId: string,
  label: CaptureLabel,
  outDir: string,
): string {
  mkdirSync(outDir, { recursive: true });
  const path = join(outDir, captureFilename(appId, label));
  try {
    writeFileSync(path, encodePng(result.pixels, result.width, result.height));
  } catch (error) {
    throw new InjectionError(`failed to write capture ${path}: ${String(error)}`);
  }
  return path;
}

export function saveCor(
  dump: CorDump,
  appId: string,
  label: CaptureLabel,
  outDir: string,
): string {
  mkdirSync(outDir, { recursive: true });
  const path = join(outDir, corFilename(appId, label));
  writeFileSync(path, serializeCor(dump));
  return path;
}
