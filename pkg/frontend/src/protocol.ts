/**
 * Wire protocol (v=1) shared with the simulation server.
 *
 * Every server message is a JSON object with a `kind` discriminator:
 * geometry | frame | ack | error | end.  Clients send `command` messages.
 * Parsing is strict about the fields rendering depends on, so a malformed
 * stream surfaces as a typed error instead of a crash mid-draw.
 */

export const PROTOCOL_VERSION = 1;

export interface GeometryNode {
  id: string;
  x: number;
  y: number;
  signalized: boolean;
  n_phases: number;
  sig: number;
}

export interface GeometryLink {
  id: string;
  from: string;
  to: string;
  lanes: number;
  cells: [number, number]; // inclusive first/last cell index
  polyline: [number, number][];
}

export interface GeometryMsg {
  kind: "geometry";
  v: number;
  scenario: string;
  mode: "live" | "replay";
  dt: number;
  n_cells: number;
  nodes: GeometryNode[];
  links: GeometryLink[];
  controllers?: string[];
  scenarios?: string[];
  controller?: string;
  speed?: number;
  paused?: boolean;
}

export interface SignalState {
  phase: number;
  interim: number; // 0 green, 1 yellow, 2 all-red
}

export interface FrameMsg {
  kind: "frame";
  v: number;
  t: number;
  densities: number[];
  signals: SignalState[];
  metrics: {
    queue: number;
    throughput_cum: number;
    mean_speed: number;
    delay_cum: number;
  };
}

export interface AckMsg {
  kind: "ack";
  v: number;
  ok: boolean;
  cmd: string;
  applied_at_t: number;
}

export interface ErrorMsg {
  kind: "error";
  v: number;
  message: string;
}

export interface EndMsg {
  kind: "end";
  v: number;
  t: number;
}

export type ServerMsg = GeometryMsg | FrameMsg | AckMsg | ErrorMsg | EndMsg;

export type CommandName =
  | "pause"
  | "resume"
  | "set_speed"
  | "set_controller"
  | "set_scenario"
  | "reset";

export interface CommandMsg {
  v: number;
  kind: "command";
  cmd: CommandName;
  value?: number | string;
}

export class ProtocolError extends Error {}

function need(obj: Record<string, unknown>, field: string): unknown {
  if (!(field in obj)) {
    throw new ProtocolError(`message missing '${field}'`);
  }
  return obj[field];
}

/** Parse one raw socket payload into a typed server message. */
export function parseMessage(raw: string): ServerMsg {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    throw new ProtocolError("payload is not valid JSON");
  }
  if (typeof obj !== "object" || obj === null) {
    throw new ProtocolError("payload is not an object");
  }
  const msg = obj as Record<string, unknown>;
  const kind = msg["kind"];
  switch (kind) {
    case "geometry": {
      need(msg, "nodes");
      need(msg, "links");
      need(msg, "n_cells");
      return msg as unknown as GeometryMsg;
    }
    case "frame": {
      const densities = need(msg, "densities");
      if (!Array.isArray(densities)) {
        throw new ProtocolError("frame densities must be an array");
      }
      need(msg, "signals");
      need(msg, "metrics");
      need(msg, "t");
      return msg as unknown as FrameMsg;
    }
    case "ack":
      need(msg, "cmd");
      return msg as unknown as AckMsg;
    case "error":
      need(msg, "message");
      return msg as unknown as ErrorMsg;
    case "end":
      return msg as unknown as EndMsg;
    default:
      throw new ProtocolError(`unknown message kind '${String(kind)}'`);
  }
}

export function command(cmd: CommandName, value?: number | string): CommandMsg {
  const msg: CommandMsg = { v: PROTOCOL_VERSION, kind: "command", cmd };
  if (value !== undefined) {
    msg.value = value;
  }
  return msg;
}

/** A frame is renderable only against the geometry it was produced for. */
export function frameMatchesGeometry(
  frame: FrameMsg,
  geometry: GeometryMsg,
): boolean {
  return frame.densities.length === geometry.n_cells;
}
