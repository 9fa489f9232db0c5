// Session client for the lockstep protocol. Replies are matched to commands
// in FIFO order, which the server guarantees by processing one message at a
// time; a frame reply resolves only once its binary body has arrived.

import {
  DepthReply,
  FrameHeader,
  ServerMessage,
  SessionCreated,
  SeqTracker,
  decodeFrameBlob,
  parseServerMessage,
} from "./protocol.js";
import type { CameraPose } from "./camera.js";
import type { PokeForce } from "./drag.js";

export class ServiceError extends Error {
  constructor(public code: string, message: string) {
    super(message);
    this.name = "ServiceError";
  }
}

export class SimulationFaultError extends Error {
  constructor(message: string, public diagnostics: Record<string, unknown>) {
    super(message);
    this.name = "SimulationFaultError";
  }
}

/** Transport the client drives; adapters exist for browser and ws sockets. */
export interface WireSocket {
  send(data: string): void;
  close(): void;
  onText: ((data: string) => void) | null;
  onBinary: ((data: ArrayBuffer) => void) | null;
  onClose: (() => void) | null;
}

/** Structural subset shared by browser WebSocket and the ws package. */
export type WebSocketLike = {
  binaryType: string;
  readyState: number;
  send(data: string): void;
  close(): void;
  // handler params stay loose so both socket flavors are assignable
  onopen: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
};

/** Resolve to a WireSocket once the underlying socket is open. */
export function openWebSocket(ws: WebSocketLike): Promise<WireSocket> {
  ws.binaryType = "arraybuffer";
  const wire: WireSocket = {
    send: (data) => ws.send(data),
    close: () => ws.close(),
    onText: null,
    onBinary: null,
    onClose: null,
  };
  ws.onmessage = (ev: { data: unknown }) => {
    if (typeof ev.data === "string") wire.onText?.(ev.data);
    else wire.onBinary?.(ev.data as ArrayBuffer);
  };
  ws.onclose = () => wire.onClose?.();
  return new Promise((resolve, reject) => {
    if (ws.readyState === 1) {
      resolve(wire);
      return;
    }
    ws.onopen = () => resolve(wire);
    ws.onerror = (ev) => reject(ev instanceof Error ? ev : new Error("websocket error"));
  });
}

export type Frame = { header: FrameHeader; body: Uint8Array };

export type CreateSessionOptions = {
  cloud: string;
  nodes?: number;
  seed?: number;
  params?: Record<string, unknown>;
  anchor_margin?: number;
  anchor_axes?: number[];
  encoding?: "png" | "jpeg" | "positions";
};

type Pending = {
  resolve: (msg: ServerMessage | Frame) => void;
  reject: (err: Error) => void;
};

export class SessionClient {
  private queue: Pending[] = [];
  private pendingHeader: FrameHeader | null = null;
  private seq = new SeqTracker();
  lastFrame: Frame | null = null;
  onProtocolError: ((err: Error) => void) | null = null;

  constructor(private socket: WireSocket) {
    socket.onText = (data) => this.handleText(data);
    socket.onBinary = (data) => this.handleBinary(data);
    socket.onClose = () => this.flush(new Error("connection closed"));
  }

  get lastSeq(): number {
    return this.seq.last;
  }

  close(): void {
    this.socket.close();
  }

  private flush(err: Error): void {
    const waiting = this.queue;
    this.queue = [];
    this.pendingHeader = null;
    for (const p of waiting) p.reject(err);
  }

  private violation(message: string): void {
    const err = new Error(message);
    if (this.onProtocolError) this.onProtocolError(err);
    else this.flush(err);
  }

  private handleText(data: string): void {
    let msg: ServerMessage;
    try {
      msg = parseServerMessage(data);
    } catch (err) {
      this.violation((err as Error).message);
      return;
    }
    const head = this.queue[0];
    if (!head) {
      this.violation(`unsolicited server message of type ${msg.type}`);
      return;
    }
    if (msg.type === "frame") {
      // body follows as one binary message; resolve when it lands
      this.pendingHeader = msg as FrameHeader;
      return;
    }
    this.queue.shift();
    if (msg.type === "error") {
      const e = msg as { code: string; message: string };
      head.reject(new ServiceError(e.code, e.message));
    } else {
      head.resolve(msg);
    }
  }

  private handleBinary(data: ArrayBuffer): void {
    const header = this.pendingHeader;
    this.pendingHeader = null;
    if (!header) {
      this.violation("binary message without a frame header");
      return;
    }
    const head = this.queue.shift();
    if (!head) {
      this.violation("binary frame with no pending request");
      return;
    }
    try {
      const frame = { header, body: decodeFrameBlob(data) };
      this.seq.accept(header.seq);
      this.lastFrame = frame;
      head.resolve(frame);
    } catch (err) {
      head.reject(err as Error);
    }
  }

  private request(msg: Record<string, unknown>): Promise<ServerMessage | Frame> {
    return new Promise((resolve, reject) => {
      this.queue.push({ resolve, reject });
      this.socket.send(JSON.stringify(msg));
    });
  }

  async createSession(opts: CreateSessionOptions): Promise<SessionCreated> {
    const reply = await this.request({ type: "create_session", ...opts });
    this.seq.reset();
    return reply as SessionCreated;
  }

  async step(): Promise<Frame> {
    const reply = await this.request({ type: "step" });
    if ("header" in reply && "body" in reply) return reply as Frame;
    if (reply.type === "fault") {
      const f = reply as { message: string; diagnostics: Record<string, unknown> };
      throw new SimulationFaultError(f.message, f.diagnostics);
    }
    throw new Error(`expected a frame, got ${reply.type}`);
  }

  async applyForce(force: PokeForce): Promise<{ warning?: string }> {
    const reply = await this.request({
      type: "apply_force",
      position: force.position,
      direction: force.direction,
      magnitude: force.magnitude,
      radius: force.radius,
    });
    return reply as { warning?: string };
  }

  async releaseForce(): Promise<void> {
    await this.request({ type: "release_force" });
  }

  async setCamera(pose: CameraPose): Promise<void> {
    await this.request({
      type: "set_camera",
      qvec: pose.qvec,
      tvec: pose.tvec,
      width: pose.width,
      height: pose.height,
      focal: pose.focal,
    });
  }

  async setParams(params: Record<string, unknown>): Promise<void> {
    await this.request({ type: "set_params", ...params });
  }

  async reset(): Promise<void> {
    await this.request({ type: "reset" });
    this.seq.reset();
  }

  async queryDepth(x: number, y: number): Promise<DepthReply> {
    return (await this.request({ type: "query_depth", x, y })) as DepthReply;
  }
}
