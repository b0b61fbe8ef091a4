/** Wire protocol (schema v1): JSON text messages over one websocket plus a
 * static scenario fetch. Every snapshot is self-contained. */

export const SCHEMA_VERSION = 1;

export interface AgentMsg {
  id: string;
  kind: string;
  x: number;
  y: number;
  theta: number;
  vx: number;
  vy: number;
  omega: number;
  radius: number;
  activity: string | null;
}

export interface BandMsg {
  id?: string;
  /** [x, y, theta] per band pose. */
  poses: [number, number, number][];
  /** Seconds from the band start, one entry per pose. */
  times: number[];
}

export interface SnapshotMsg {
  v: number;
  type: "snapshot";
  t: number;
  mode: string;
  backoff_phase: string;
  agents: AgentMsg[];
  bands: { robot: BandMsg | null; humans: BandMsg[] };
  metrics: { path_length: number; hr_distances: Record<string, number> };
  transitions: unknown[];
}

export interface AckMsg {
  v: number;
  type: "ack";
  id: string;
  vx: number;
  vy: number;
  clamped: boolean;
}

export interface ErrorMsg {
  v: number;
  type: "error";
  error: string;
}

export type ServerMsg = SnapshotMsg | AckMsg | ErrorMsg;

export interface ScenarioMsg {
  v: number;
  type: "scenario";
  name: string;
  map: {
    resolution: number;
    origin: [number, number];
    width: number;
    height: number;
    /** '#' occupied, '.' free; row 0 is the southernmost row. */
    rows: string[];
  };
  robot_start: [number, number];
  robot_goal: [number, number];
  external_humans: string[];
}

/** Parse one incoming websocket message; null for anything that is not a
 * well-formed schema-v1 message of a known type. */
export function parseServerMessage(text: string): ServerMsg | null {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof raw !== "object" || raw === null) return null;
  const msg = raw as Record<string, unknown>;
  if (msg.v !== SCHEMA_VERSION) return null;
  if (msg.type === "snapshot" || msg.type === "ack" || msg.type === "error") {
    return msg as unknown as ServerMsg;
  }
  return null;
}

/** Serialize a steering command for an externally controlled human. */
export function humanCommand(
  id: string,
  vx: number,
  vy: number,
  stamp: number,
): string {
  return JSON.stringify({
    v: SCHEMA_VERSION,
    type: "human_command",
    id,
    vx,
    vy,
    stamp,
  });
}
