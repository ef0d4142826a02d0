/**
 * Bug-injected replacements for the PixiJS v6/v7 batch shader pair.
 *
 * Each spec keeps the default shader structure and changes exactly one
 * thing, so the injected bug is purely a bitmap effect: scene-graph
 * values (positions, opacities, tints) are never touched.
 *
 * The fragment source is a PixiJS batch *template*: `%count%` and
 * `%forloop%` are expanded by the BatchShaderGenerator at compile time.
 */

export type BugType = "state" | "rendering" | "layout" | "appearance";

/** Multiplier applied to vColor for State bugs: opacity effectively zero. */
export const STATE_ALPHA_SCALE = 0.001;

/** Multiplier applied to vColor for Appearance bugs: halves the opacity. */
export const APPEARANCE_ALPHA_SCALE = 0.5;

/** Clip-space multiplier for Layout bugs: shrinks and displaces objects. */
export const LAYOUT_POSITION_SCALE = 0.5;

/** Rendering bugs: screen-space row bands repeat with this period (px). */
export const RENDERING_BAND_PERIOD_PX = 8;

/** Rendering bugs: rows in the first half of each period are scaled. */
export const RENDERING_BAND_WIDTH_PX = 4;

/** Rendering bugs: color multiplier inside affected bands. */
export const RENDERING_BAND_SCALE = 0.2;

const glslFloat = (value: number): string =>
  Number.isInteger(value) ? value.toFixed(1) : String(value);

const vertexSource = (positionScale: number, colorScale: number): string => {
  const position =
    positionScale === 1
      ? "(projectionMatrix * translationMatrix * vec3(aVertexPosition, 1.0)).xy"
      : `(projectionMatrix * translationMatrix * vec3(aVertexPosition, 1.0)).xy * ${glslFloat(positionScale)}`;
  const color =
    colorScale === 1
      ? "aColor * tint"
      : `aColor * tint * ${glslFloat(colorScale)}`;
  return `precision highp float;
attribute vec2 aVertexPosition;
attribute vec2 aTextureCoord;
attribute vec4 aColor;
attribute float aTextureId;

uniform mat3 projectionMatrix;
uniform mat3 translationMatrix;
uniform vec4 tint;

varying vec2 vTextureCoord;
varying vec4 vColor;
varying float vTextureId;

void main(void){
    gl_Position = vec4(${position}, 0.0, 1.0);

    vTextureCoord = aTextureCoord;
    vTextureId = aTextureId;
    vColor = ${color};
}
`;
};

const fragmentSource = (banded: boolean): string => {
  const banding = banded
    ? `
    if (mod(gl_FragCoord.y, ${glslFloat(RENDERING_BAND_PERIOD_PX)}) < ${glslFloat(RENDERING_BAND_WIDTH_PX)}) {
        gl_FragColor *= ${glslFloat(RENDERING_BAND_SCALE)};
    }`
    : "";
  return `varying vec2 vTextureCoord;
varying vec4 vColor;
varying float vTextureId;
uniform sampler2D uSamplers[%count%];

void main(void){
    vec4 color;
    %forloop%
    gl_FragColor = color * vColor;${banding}
}
`;
};

export const DEFAULT_VERTEX_SRC = vertexSource(1, 1);
export const DEFAULT_FRAGMENT_TEMPLATE = fragmentSource(false);

export interface BugShaderSpec {
  bugType: BugType;
  vertexSource: string;
  fragmentSource: string;
  parameters: {
    alpha_scale?: number;
    band_period_px?: number;
    band_scale?: number;
    position_scale?: number;
  };
}

export const BUG_SHADERS: Record<BugType, BugShaderSpec> = {
  state: {
    bugType: "state",
    vertexSource: vertexSource(1, STATE_ALPHA_SCALE),
    fragmentSource: fragmentSource(false),
    parameters: { alpha_scale: STATE_ALPHA_SCALE },
  },
  rendering: {
    bugType: "rendering",
    vertexSource: vertexSource(1, 1),
    fragmentSource: fragmentSource(true),
    parameters: {
      band_period_px: RENDERING_BAND_PERIOD_PX,
      band_scale: RENDERING_BAND_SCALE,
    },
  },
  layout: {
    bugType: "layout",
    vertexSource: vertexSource(LAYOUT_POSITION_SCALE, 1),
    fragmentSource: fragmentSource(false),
    parameters: { position_scale: LAYOUT_POSITION_SCALE },
  },
  appearance: {
    bugType: "appearance",
    vertexSource: vertexSource(1, APPEARANCE_ALPHA_SCALE),
    fragmentSource: fragmentSource(false),
    parameters: { alpha_scale: APPEARANCE_ALPHA_SCALE },
  },
};

export const BUG_TYPES = Object.keys(BUG_SHADERS) as BugType[];
