/**
 * Runtime hooks into a live PixiJS v6/v7 application.
 *
 * install() locates either the PIXI namespace object or a
 * PIXI.Application instance in the page's global scope. The
 * application-instance path hands us the renderer and stage directly;
 * the namespace path patches Renderer.prototype.render so the next
 * rendered frame reveals them.
 *
 * inject() swaps the batch renderer's shader generator for a
 * bug-injected pair and regenerates the active shader, then marks every
 * node currently in the scene graph. Only the bitmap output changes;
 * scene-graph properties are left untouched.
 */

import { BugShaderSpec } from "./shaders.js";

export const MARKER_PROPERTY = "__injected_by_pixi_visual_bugger__";

/** Global names commonly used to expose the application instance. */
export const APP_GLOBAL_NAMES = ["__PIXI_APP__", "pixiApp", "app"];

export const SUPPORTED_MAJORS = [6, 7];

export class InjectionError extends Error {}

export interface SceneNode {
  children?: SceneNode[];
  [key: string]: unknown;
}

interface ApplicationLike {
  stage: SceneNode;
  renderer: RendererLike;
}

interface RendererLike {
  width?: number;
  height?: number;
  view?: { width?: number; height?: number };
  plugins?: { batch?: BatchRendererLike };
  extract?: { pixels?: (target?: unknown) => Uint8Array | Uint8ClampedArray };
  gl?: WebGLRenderingContext;
}

interface BatchRendererLike {
  shaderGenerator?: {
    constructor: new (vertexSrc: string, fragTemplate: string) => unknown;
    vertexSrc?: string;
    fragTemplate?: string;
  };
  contextChange?: () => void;
  maxTextures?: number;
  _shader?: unknown;
}

export interface InjectionTarget {
  kind: "application" | "framework";
  pixi?: Record<string, unknown>;
  app?: ApplicationLike;
  /** Filled lazily on the framework path, once a frame has rendered. */
  renderer?: RendererLike;
  stage?: SceneNode;
  injected?: BugShaderSpec;
}

const isApplicationLike = (value: unknown): value is ApplicationLike =>
  typeof value === "object" &&
  value !== null &&
  "stage" in value &&
  "renderer" in value;

const isPixiNamespace = (value: unknown): value is Record<string, unknown> =>
  typeof value === "object" &&
  value !== null &&
  ("Application" in value || "Renderer" in value || "VERSION" in value);

function checkVersion(pixi: Record<string, unknown>): void {
  const version = pixi.VERSION;
  if (typeof version !== "string") return; // undiscoverable: proceed
  const major = Number.parseInt(version.split(".")[0], 10);
  if (!SUPPORTED_MAJORS.includes(major)) {
    throw new InjectionError(
      `unsupported PixiJS version ${version}; supported majors: ${SUPPORTED_MAJORS.join(", ")}`,
    );
  }
}

/**
 * Locate the instrumentation globals and return an injection handle.
 * Rendering behaviour is not changed by install() itself.
 */
export function install(
  scope: Record<string, unknown>,
  appGlobalNames: string[] = APP_GLOBAL_NAMES,
): InjectionTarget {
  for (const name of appGlobalNames) {
    const candidate = scope[name];
    if (isApplicationLike(candidate)) {
      const target: InjectionTarget = {
        kind: "application",
        app: candidate,
        renderer: candidate.renderer,
        stage: candidate.stage,
      };
      const pixi = scope.PIXI;
      if (isPixiNamespace(pixi)) {
        checkVersion(pixi);
        target.pixi = pixi;
      }
      return target;
    }
  }

  const pixi = scope.PIXI;
  if (isPixiNamespace(pixi)) {
    checkVersion(pixi);
    const target: InjectionTarget = { kind: "framework", pixi };
    hookRenderer(pixi, target);
    return target;
  }

  throw new InjectionError(
    "not instrumented: no PIXI object or PIXI.Application instance found in the global scope",
  );
}

function hookRenderer(pixi: Record<string, unknown>, target: InjectionTarget): void {
  const Renderer = pixi.Renderer as
    | { prototype: { render: (...args: unknown[]) => unknown } }
    | undefined;
  if (!Renderer?.prototype?.render) {
    throw new InjectionError(
      "not instrumented: PIXI.Renderer is unavailable on the framework object",
    );
  }
  const original = Renderer.prototype.render;
  Renderer.prototype.render = function (this: RendererLike, ...args: unknown[]) {
    target.renderer = this;
    const first = args[0];
    if (typeof first === "object" && first !== null) {
      target.stage = first as SceneNode;
    }
    return original.apply(this, args);
  };
}

export function resolveRenderer(target: InjectionTarget): RendererLike {
  if (target.renderer) return target.renderer;
  throw new InjectionError(
    "no renderer available yet; render at least one frame before injecting or capturing",
  );
}

export function resolveStage(target: InjectionTarget): SceneNode {
  if (target.stage) return target.stage;
  throw new InjectionError(
    "no stage available yet; render at least one frame before dumping or capturing",
  );
}

export function* walk(node: SceneNode): Generator<SceneNode> {
  yield node;
  for (const child of node.children ?? []) {
    yield* walk(child);
  }
}

/**
 * Override the batch shader pair with the spec's sources and mark every
 * node currently in the scene graph. Scene-graph values are unchanged.
 */
export function inject(target: InjectionTarget, spec: BugShaderSpec): void {
  const renderer = resolveRenderer(target);
  const batch = renderer.plugins?.batch;
  if (!batch?.shaderGenerator) {
    throw new InjectionError("batch renderer plugin with a shader generator not found");
  }
  const Generator = batch.shaderGenerator.constructor;
  batch.shaderGenerator = new Generator(
    spec.vertexSource,
    spec.fragmentSource,
  ) as BatchRendererLike["shaderGenerator"];
  try {
    batch.contextChange?.();
  } catch (error) {
    throw new InjectionError(
      `bug-injected shader failed to compile or link: ${String(error)}`,
    );
  }

  for (const node of walk(resolveStage(target))) {
    (node as Record<string, unknown>)[MARKER_PROPERTY] = true;
  }
  target.injected = spec;
}
