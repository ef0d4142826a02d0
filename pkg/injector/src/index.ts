export {
  APP_GLOBAL_NAMES,
  InjectionError,
  InjectionTarget,
  MARKER_PROPERTY,
  SUPPORTED_MAJORS,
  SceneNode,
  inject,
  install,
  resolveRenderer,
  resolveStage,
  walk,
} from "./injector.js";
export {
  APPEARANCE_ALPHA_SCALE,
  BUG_SHADERS,
  BUG_TYPES,
  BugShaderSpec,
  BugType,
  DEFAULT_FRAGMENT_TEMPLATE,
  DEFAULT_VERTEX_SRC,
  LAYOUT_POSITION_SCALE,
  RENDERING_BAND_PERIOD_PX,
  RENDERING_BAND_SCALE,
  RENDERING_BAND_WIDTH_PX,
  STATE_ALPHA_SCALE,
} from "./shaders.js";
export { CorDump, CorNode, dumpCor, serializeCor } from "./cor.js";
export {
  CAPTURE_HEIGHT,
  CAPTURE_LABELS,
  CAPTURE_WIDTH,
  CaptureLabel,
  CaptureResult,
  capture,
  captureFilename,
  corFilename,
} from "./capture.js";
export { DecodedPng, decodePng, encodePng } from "./png.js";
export { saveCapture, saveCor } from "./files.js";
