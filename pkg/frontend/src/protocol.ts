// Wire format for the simulation service. The protocol is lockstep: every
// JSON command gets exactly one JSON reply, and a "frame" reply is followed
// by exactly one binary message carrying the frame body.

export type Stats = {
  sim_ms: number;
  render_ms: number;
  fps: number;
  gaussians: number;
  nodes: number;
  disp_max: number;
  // present only while a force has been applied this session
  disp_center?: number;
  disp_far?: number;
};

export type FrameHeader = {
  type: "frame";
  seq: number;
  encoding: "png" | "jpeg" | "positions";
  width: number;
  height: number;
  stats: Stats;
};

export type SessionCreated = {
  type: "session_created";
  id: string;
  node_count: number;
  gaussian_count: number;
  anchored: number;
};

export type DepthReply = {
  type: "depth";
  valid: boolean;
  reason?: string;
  x?: number;
  y?: number;
  depth?: number;
  alpha?: number;
  point?: [number, number, number];
};

export type FaultReply = {
  type: "fault";
  message: string;
  diagnostics: Record<string, unknown>;
};

export type ErrorReply = { type: "error"; code: string; message: string };

export type ServerMessage =
  | FrameHeader
  | SessionCreated
  | DepthReply
  | FaultReply
  | ErrorReply
  | { type: string; [key: string]: unknown };

export function parseServerMessage(raw: string): ServerMessage {
  const msg = JSON.parse(raw);
  if (typeof msg !== "object" || msg === null || typeof msg.type !== "string") {
    throw new Error(`malformed server message: ${raw.slice(0, 80)}`);
  }
  return msg as ServerMessage;
}

/** Strip and validate the little-endian uint32 length prefix. */
export function decodeFrameBlob(buf: ArrayBuffer): Uint8Array {
  if (buf.byteLength < 4) {
    throw new Error(`frame blob too short (${buf.byteLength} bytes)`);
  }
  const declared = new DataView(buf).getUint32(0, true);
  const body = new Uint8Array(buf, 4);
  if (declared !== body.byteLength) {
    throw new Error(`frame length prefix ${declared} != body length ${body.byteLength}`);
  }
  return body;
}

/** Floats per gaussian in a "positions" frame: xyz, upper-triangle covariance, rgb. */
export const FLOATS_PER_GAUSSIAN = 12;

export type PositionsFrame = {
  count: number;
  /** flat (count*3) world positions */
  positions: Float32Array;
  /** flat (count*6) covariance entries xx, xy, xz, yy, yz, zz */
  covariances: Float32Array;
  /** flat (count*3) linear rgb in [0, 1] */
  colors: Float32Array;
};

export function parsePositionsFrame(body: Uint8Array): PositionsFrame {
  const stride = 4 * FLOATS_PER_GAUSSIAN;
  if (body.byteLength % stride !== 0) {
    throw new Error(`positions frame of ${body.byteLength} bytes is not a whole number of gaussians`);
  }
  const count = body.byteLength / stride;
  // copy first: the body view may sit at an arbitrary byte offset
  const flat = new Float32Array(count * FLOATS_PER_GAUSSIAN);
  new Uint8Array(flat.buffer).set(body);
  const positions = new Float32Array(count * 3);
  const covariances = new Float32Array(count * 6);
  const colors = new Float32Array(count * 3);
  for (let i = 0; i < count; i++) {
    const base = i * FLOATS_PER_GAUSSIAN;
    for (let k = 0; k < 3; k++) positions[i * 3 + k] = flat[base + k];
    for (let k = 0; k < 6; k++) covariances[i * 6 + k] = flat[base + 3 + k];
    for (let k = 0; k < 3; k++) colors[i * 3 + k] = flat[base + 9 + k];
  }
  return { count, positions, covariances, colors };
}

/** Rejects out-of-order or missing frame sequence numbers. */
export class SeqTracker {
  last = 0;

  accept(seq: number): void {
    if (seq !== this.last + 1) {
      throw new Error(`frame gap: expected seq ${this.last + 1}, got ${seq}`);
    }
    this.last = seq;
  }

  reset(): void {
    this.last = 0;
  }
}
