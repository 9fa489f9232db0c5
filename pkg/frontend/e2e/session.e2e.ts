// Scripted end-to-end session against a real server: build a cloud, serve it,
// connect over the wire protocol, poke the body with a drag, and check the
// streamed frames and displacement stats. Runs headless, so the browser entry
// point is exercised via the same client modules it is built from.

import { ChildProcess, execFileSync, spawn } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { Vec3, cameraBasis, lookAt } from "../src/camera.js";
import { Frame, SessionClient, WebSocketLike, openWebSocket } from "../src/client.js";
import { dragToForce } from "../src/drag.js";
import { parsePositionsFrame } from "../src/protocol.js";

const PYTHON = process.env.PYTHON ?? "python3";
const PORT = 18700 + Math.floor(Math.random() * 900);
const BASE = `http://127.0.0.1:${PORT}`;

const MAKE_CLOUD = `
import sys
import numpy as np
from splatsim.io import save_cloud
from splatsim.scene import GaussianCloud

rng = np.random.default_rng(1)
n = 4000
p = rng.uniform(-1.0, 1.0, (4 * n, 3))
p = p[(p ** 2).sum(axis=1) <= 1.0][:n] * 0.065
assert p.shape[0] == n
rot = np.zeros((n, 4))
rot[:, 0] = 1.0
cloud = GaussianCloud(
    positions=p,
    rotations=rot,
    scales=np.full((n, 3), 0.065 / 20),
    opacities=np.full(n, 0.9),
    sh=np.full((n, 3, 1), 0.5),
)
save_cloud(cloud, sys.argv[1])
`;

let workdir: string;
let server: ChildProcess;

async function waitForHealth(timeoutMs = 60_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastErr: unknown = null;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/healthz`);
      if (res.ok) return;
    } catch (err) {
      lastErr = err;
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error(`server never became healthy: ${lastErr}`);
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "viewer-e2e-"));
  execFileSync(PYTHON, ["-c", MAKE_CLOUD, join(workdir, "ball.gsc")], { stdio: "inherit" });
  server = spawn(
    PYTHON,
    ["-m", "splatsim.cli", "serve", "--clouds", workdir, "--port", String(PORT)],
    { stdio: ["ignore", "inherit", "inherit"] },
  );
  await waitForHealth();
});

afterAll(() => {
  server?.kill("SIGTERM");
  rmSync(workdir, { recursive: true, force: true });
});

describe("scripted drag session", () => {
  it("streams ordered frames and displaces locally around the poke", async () => {
    const res = await fetch(`${BASE}/clouds`);
    const listing = (await res.json()) as { clouds: { name: string; gaussians: number }[] };
    expect(listing.clouds).toEqual([{ name: "ball", gaussians: 4000 }]);

    const socket = await openWebSocket(new WebSocket(`ws://127.0.0.1:${PORT}/ws`) as unknown as WebSocketLike);
    const client = new SessionClient(socket);
    const created = await client.createSession({
      cloud: "ball",
      nodes: 1024,
      seed: 0,
      encoding: "positions",
      anchor_margin: 0.15,
      anchor_axes: [2],
      params: {
        youngs_modulus: 10_000,
        damping: 8.0,
        substeps: 20,
        grid_resolution: 14,
        gravity: [0, 0, 0],
      },
    });
    expect(created.gaussian_count).toBe(4000);
    expect(created.node_count).toBe(1024);
    expect(created.anchored).toBeGreaterThan(0);

    const frames: Frame[] = [];
    const step = async () => {
      const frame = await client.step();
      frames.push(frame);
      return frame;
    };

    // rest frame in positions encoding so the viewer can frame the scene
    const rest = await step();
    expect(rest.header.seq).toBe(1);
    const pts = parsePositionsFrame(rest.body);
    expect(pts.count).toBe(4000);
    const lo: Vec3 = [Infinity, Infinity, Infinity];
    const hi: Vec3 = [-Infinity, -Infinity, -Infinity];
    for (let i = 0; i < pts.count; i++) {
      for (let k = 0; k < 3; k++) {
        lo[k] = Math.min(lo[k], pts.positions[i * 3 + k]);
        hi[k] = Math.max(hi[k], pts.positions[i * 3 + k]);
      }
    }
    const center: Vec3 = [(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2];
    const extent = Math.max(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]);
    expect(extent).toBeGreaterThan(0.1);
    expect(extent).toBeLessThan(0.2);

    // look at the ball from +x so the poke digs into its near face
    const eye: Vec3 = [center[0] + 2.5 * extent, center[1], center[2]];
    const pose = lookAt(eye, center, 256, 256, 450);
    await client.setCamera(pose);
    await step();

    const hit = await client.queryDepth(128, 128);
    expect(hit.valid).toBe(true);
    expect(hit.point).toBeDefined();
    const anchor = hit.point as Vec3;
    // the near face sits a whole radius toward the camera from the centroid
    expect(anchor[0] - center[0]).toBeGreaterThan(0.2 * extent);

    // scripted drag: press at the anchor, pull 40 px right with a push bias
    const force = dragToForce(anchor, 40, 0, cameraBasis(pose.qvec), {
      gain: 0.0125,
      maxMagnitude: 0.5,
      push: 3,
      radius: 0.1 * extent,
    });
    expect(force.magnitude).toBeCloseTo(0.5, 12);
    const ack = await client.applyForce(force);
    expect(ack.warning).toBeUndefined();

    let peak = 0;
    for (let i = 0; i < 34; i++) {
      const frame = await step();
      peak = Math.max(peak, frame.header.stats.disp_max);
    }
    expect(frames.length).toBeGreaterThanOrEqual(30);
    // SeqTracker already rejects gaps; double-check the collected order
    frames.forEach((f, i) => expect(f.header.seq).toBe(i + 1));

    const held = frames[frames.length - 1].header.stats;
    expect(held.disp_center).toBeDefined();
    expect(held.disp_far).toBeDefined();
    expect(held.disp_center!).toBeGreaterThan(0);
    expect(held.disp_center!).toBeGreaterThan(3 * held.disp_far!);

    await client.releaseForce();
    for (let i = 0; i < 10; i++) await step();
    const settled = frames[frames.length - 1].header.stats;
    expect(settled.disp_max).toBeLessThan(peak);

    client.close();
  });
});
