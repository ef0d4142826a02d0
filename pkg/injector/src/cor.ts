/**
 * Canvas objects representation (COR) dumps: a flat JSON array of
 * scene-graph node records, one per displayable object.
 *
 * Only a fixed set of well-known properties is read, so cyclic custom
 * fields on application objects can never enter the dump; a field that
 * throws on access is recorded as null with a notice.
 */

import { InjectionTarget, MARKER_PROPERTY, SceneNode, resolveStage, walk } from "./injector.js";

export interface CorNode {
  type: string;
  x: number | null;
  y: number | null;
  width: number | null;
  height: number | null;
  alpha: number | null;
  tint: number | null;
  visible: boolean | null;
  marker: boolean;
}

export interface CorDump {
  nodes: CorNode[];
  notices: string[];
}

function readNumber(node: SceneNode, key: string, notices: string[], index: number): number | null {
  try {
    const value = (node as Record<string, unknown>)[key];
    return typeof value === "number" && Number.isFinite(value) ? value : null;
  } catch (error) {
    notices.push(`node ${index}: skipped ${key}: ${String(error)}`);
    return null;
  }
}

export function dumpCor(target: InjectionTarget): CorDump {
  const notices: string[] = [];
  const nodes: CorNode[] = [];
  let index = 0;
  for (const node of walk(resolveStage(target))) {
    const record: CorNode = {
      type: node.constructor?.name ?? "Object",
      x: readNumber(node, "x", notices, index),
      y: readNumber(node, "y", notices, index),
      width: readNumber(node, "width", notices, index),
      height: readNumber(node, "height", notices, index),
      alpha: readNumber(node, "alpha", notices, index),
      tint: readNumber(node, "tint", notices, index),
      visible:
        typeof node.visible === "boolean" ? (node.visible as boolean) : null,
      marker: (node as Record<string, unknown>)[MARKER_PROPERTY] === true,
    };
    nodes.push(record);
    index += 1;
  }
  return { nodes, notices };
}

export function serializeCor(dump: CorDump): string {
  return JSON.stringify(dump.nodes, null, 2) + "\n";
}
