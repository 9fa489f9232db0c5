// Browser viewer: connects to the simulation service, steps frames in
// lockstep, and turns pointer drags into pokes on the simulated cloud.

import { CameraPose, Vec3, cameraBasis, orbitPose, project } from "./camera.js";
import { SessionClient, Frame, openWebSocket, ServiceError, SimulationFaultError } from "./client.js";
import { dragToForce } from "./drag.js";
import { PositionsFrame, parsePositionsFrame } from "./protocol.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const canvas = $<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d")!;
const statsBox = $<HTMLElement>("stats");
const statusBox = $<HTMLElement>("status");
const cloudSelect = $<HTMLSelectElement>("cloud");
const nodesInput = $<HTMLInputElement>("nodes");
const encodingSelect = $<HTMLSelectElement>("encoding");
const connectBtn = $<HTMLButtonElement>("connect");
const runBtn = $<HTMLButtonElement>("run");
const resetBtn = $<HTMLButtonElement>("reset");

let client: SessionClient | null = null;
let running = false;
let stepping = false;

// orbit state; pivot updates to the cloud centroid after the first frame
const orbit = { pivot: [0, 0, 0] as Vec3, azimuth: 0.8, elevation: 0.7, distance: 2.0 };
let pose: CameraPose = orbitPose(orbit.pivot, orbit.azimuth, orbit.elevation, orbit.distance, 512, 512, 600);
let cameraDirty = true;
let sceneExtent = 1.0;

type Poke = { anchor: Vec3; startX: number; startY: number; active: boolean };
let poke: Poke | null = null;
let pendingForce: ReturnType<typeof dragToForce> | null = null;

function setStatus(text: string) {
  statusBox.textContent = text;
}

function drawPositions(frame: PositionsFrame) {
  ctx.fillStyle = "#111";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const n = frame.count;
  const order: number[] = [];
  const depth = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    const p: Vec3 = [frame.positions[i * 3], frame.positions[i * 3 + 1], frame.positions[i * 3 + 2]];
    const pr = project(pose, p);
    depth[i] = pr.z;
    if (pr.z > 0) order.push(i);
  }
  order.sort((a, b) => depth[b] - depth[a]);
  for (const i of order) {
    const p: Vec3 = [frame.positions[i * 3], frame.positions[i * 3 + 1], frame.positions[i * 3 + 2]];
    const pr = project(pose, p);
    // isotropic radius from the covariance trace, clamped to something visible
    const tr = frame.covariances[i * 6] + frame.covariances[i * 6 + 3] + frame.covariances[i * 6 + 5];
    const r = Math.min(12, Math.max(1, (pose.focal * Math.sqrt(Math.max(tr, 0) / 3)) / pr.z));
    const c = frame.colors;
    ctx.fillStyle = `rgb(${c[i * 3] * 255}, ${c[i * 3 + 1] * 255}, ${c[i * 3 + 2] * 255})`;
    ctx.beginPath();
    ctx.arc(pr.u, pr.v, r, 0, Math.PI * 2);
    ctx.fill();
  }
}

async function drawImageFrame(frame: Frame) {
  const mime = frame.header.encoding === "jpeg" ? "image/jpeg" : "image/png";
  const bitmap = await createImageBitmap(new Blob([frame.body.slice()], { type: mime }));
  ctx.drawImage(bitmap, 0, 0, canvas.width, canvas.height);
  bitmap.close();
}

async function drawFrame(frame: Frame) {
  if (frame.header.encoding === "positions") {
    drawPositions(parsePositionsFrame(frame.body));
  } else {
    await drawImageFrame(frame);
  }
  const s = frame.header.stats;
  const parts = [
    `frame ${frame.header.seq}`,
    `${s.fps} fps (sim ${s.sim_ms} ms, render ${s.render_ms} ms)`,
    `${s.gaussians} gaussians / ${s.nodes} nodes`,
    `disp max ${s.disp_max.toExponential(2)}`,
  ];
  if (s.disp_center !== undefined) {
    parts.push(`center ${s.disp_center.toExponential(2)} far ${(s.disp_far ?? 0).toExponential(2)}`);
  }
  statsBox.textContent = parts.join("  |  ");
}

async function stepOnce() {
  if (!client || stepping) return;
  stepping = true;
  try {
    if (cameraDirty) {
      await client.setCamera(pose);
      cameraDirty = false;
    }
    if (pendingForce) {
      await client.applyForce(pendingForce);
      pendingForce = null;
    }
    const frame = await client.step();
    await drawFrame(frame);
  } catch (err) {
    running = false;
    runBtn.textContent = "run";
    if (err instanceof SimulationFaultError) {
      setStatus(`simulation fault: ${err.message} (reset to recover)`);
    } else if (err instanceof ServiceError) {
      setStatus(`${err.code}: ${err.message}`);
    } else {
      setStatus(String(err));
    }
  } finally {
    stepping = false;
  }
  if (running) requestAnimationFrame(() => void stepOnce());
}

async function connect() {
  const url = `ws://${location.host}/ws`;
  setStatus(`connecting to ${url}`);
  const socket = await openWebSocket(new WebSocket(url));
  client = new SessionClient(socket);
  const created = await client.createSession({
    cloud: cloudSelect.value,
    nodes: Number(nodesInput.value),
    encoding: encodingSelect.value as "png" | "jpeg" | "positions",
  });
  setStatus(`session ${created.id}: ${created.gaussian_count} gaussians, ${created.node_count} nodes (${created.anchored} anchored)`);
  // one throwaway frame in positions encoding to find the cloud and frame it
  await client.setParams({ encoding: "positions" });
  const first = await client.step();
  const pts = parsePositionsFrame(first.body);
  const lo: Vec3 = [Infinity, Infinity, Infinity];
  const hi: Vec3 = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < pts.count; i++) {
    for (let k = 0; k < 3; k++) {
      lo[k] = Math.min(lo[k], pts.positions[i * 3 + k]);
      hi[k] = Math.max(hi[k], pts.positions[i * 3 + k]);
    }
  }
  orbit.pivot = [(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2];
  sceneExtent = Math.max(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2], 1e-3);
  orbit.distance = 2.2 * sceneExtent;
  refreshPose();
  await client.setParams({ encoding: encodingSelect.value });
  await client.reset();
  runBtn.disabled = false;
  resetBtn.disabled = false;
}

function refreshPose() {
  pose = orbitPose(orbit.pivot, orbit.azimuth, orbit.elevation, orbit.distance, canvas.width, canvas.height, 1.2 * canvas.width);
  cameraDirty = true;
}

connectBtn.onclick = () => {
  connect().catch((err) => setStatus(`connect failed: ${err}`));
};

runBtn.onclick = () => {
  running = !running;
  runBtn.textContent = running ? "pause" : "run";
  if (running) void stepOnce();
};

resetBtn.onclick = () => {
  if (!client) return;
  client.reset().then(
    () => setStatus("session reset"),
    (err) => setStatus(String(err)),
  );
};

canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());

let lastOrbit: [number, number] | null = null;

canvas.addEventListener("pointerdown", (ev) => {
  if (!client) return;
  canvas.setPointerCapture(ev.pointerId);
  if (ev.button !== 0) {
    poke = null;
    lastOrbit = [ev.offsetX, ev.offsetY];
    return;
  }
  client.queryDepth(ev.offsetX, ev.offsetY).then((reply) => {
    if (reply.valid && reply.point) {
      poke = { anchor: reply.point, startX: ev.offsetX, startY: ev.offsetY, active: true };
      setStatus(`poking at depth ${reply.depth?.toFixed(3)}`);
    } else {
      setStatus(`nothing to poke (${reply.reason})`);
    }
  });
});

canvas.addEventListener("pointermove", (ev) => {
  if (lastOrbit) {
    orbit.azimuth -= (ev.offsetX - lastOrbit[0]) * 0.01;
    orbit.elevation = Math.min(1.5, Math.max(-1.5, orbit.elevation + (ev.offsetY - lastOrbit[1]) * 0.01));
    lastOrbit = [ev.offsetX, ev.offsetY];
    refreshPose();
    return;
  }
  if (!poke?.active) return;
  pendingForce = dragToForce(
    poke.anchor,
    ev.offsetX - poke.startX,
    ev.offsetY - poke.startY,
    cameraBasis(pose.qvec),
    { gain: 0.01 * sceneExtent, maxMagnitude: 1.0, radius: 0.1 * sceneExtent },
  );
});

canvas.addEventListener("pointerup", () => {
  lastOrbit = null;
  if (poke?.active && client) {
    poke = null;
    pendingForce = null;
    void client.releaseForce();
  }
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  orbit.distance = Math.max(0.2 * sceneExtent, orbit.distance * Math.exp(ev.deltaY * 0.001));
  refreshPose();
});

async function loadClouds() {
  const res = await fetch("/clouds");
  const doc = (await res.json()) as { clouds: { name: string; gaussians?: number }[] };
  cloudSelect.innerHTML = "";
  for (const c of doc.clouds) {
    const opt = document.createElement("option");
    opt.value = c.name;
    opt.textContent = c.gaussians ? `${c.name} (${c.gaussians})` : c.name;
    cloudSelect.appendChild(opt);
  }
  setStatus(doc.clouds.length ? "pick a cloud and connect" : "no clouds on the server");
}

void loadClouds();
