// Camera math matching the server's COLMAP-style convention:
// x_cam = R @ x_world + t, quaternions stored (w, x, y, z), image y down.

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number];
export type Mat3 = [Vec3, Vec3, Vec3];

export type CameraPose = {
  qvec: Quat;
  tvec: Vec3;
  width: number;
  height: number;
  focal: number;
};

export const add = (a: Vec3, b: Vec3): Vec3 => [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
export const sub = (a: Vec3, b: Vec3): Vec3 => [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
export const scale = (a: Vec3, s: number): Vec3 => [a[0] * s, a[1] * s, a[2] * s];
export const dot = (a: Vec3, b: Vec3): number => a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
export const norm = (a: Vec3): number => Math.hypot(a[0], a[1], a[2]);

export const cross = (a: Vec3, b: Vec3): Vec3 => [
  a[1] * b[2] - a[2] * b[1],
  a[2] * b[0] - a[0] * b[2],
  a[0] * b[1] - a[1] * b[0],
];

export function normalize(a: Vec3): Vec3 {
  const n = norm(a);
  if (n === 0) throw new Error("cannot normalize a zero vector");
  return scale(a, 1 / n);
}

export function quatToRotmat(q: Quat): Mat3 {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  const [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
  return [
    [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
    [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
    [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
  ];
}

export function rotmatToQuat(R: Mat3): Quat {
  const tr = R[0][0] + R[1][1] + R[2][2];
  let q: Quat;
  if (tr > 0) {
    const s = Math.sqrt(tr + 1) * 2;
    q = [s / 4, (R[2][1] - R[1][2]) / s, (R[0][2] - R[2][0]) / s, (R[1][0] - R[0][1]) / s];
  } else if (R[0][0] > R[1][1] && R[0][0] > R[2][2]) {
    const s = Math.sqrt(1 + R[0][0] - R[1][1] - R[2][2]) * 2;
    q = [(R[2][1] - R[1][2]) / s, s / 4, (R[0][1] + R[1][0]) / s, (R[0][2] + R[2][0]) / s];
  } else if (R[1][1] > R[2][2]) {
    const s = Math.sqrt(1 + R[1][1] - R[0][0] - R[2][2]) * 2;
    q = [(R[0][2] - R[2][0]) / s, (R[0][1] + R[1][0]) / s, s / 4, (R[1][2] + R[2][1]) / s];
  } else {
    const s = Math.sqrt(1 + R[2][2] - R[0][0] - R[1][1]) * 2;
    q = [(R[1][0] - R[0][1]) / s, (R[0][2] + R[2][0]) / s, (R[1][2] + R[2][1]) / s, s / 4];
  }
  // canonical sign so equal rotations compare equal
  return q[0] < 0 ? (q.map((v) => -v) as Quat) : q;
}

export function matVec(R: Mat3, v: Vec3): Vec3 {
  return [dot(R[0], v), dot(R[1], v), dot(R[2], v)];
}

/** Pose at `eye` looking toward `target`, world +z up, principal point centered. */
export function lookAt(eye: Vec3, target: Vec3, width: number, height: number, focal: number): CameraPose {
  const fwd = normalize(sub(target, eye));
  let right = cross(fwd, [0, 0, 1]);
  const nr = norm(right);
  right = nr < 1e-9 ? [1, 0, 0] : scale(right, 1 / nr);
  const down = cross(fwd, right);
  const R: Mat3 = [right, down, fwd];
  const tvec = scale(matVec(R, eye), -1);
  return { qvec: rotmatToQuat(R), tvec, width, height, focal };
}

export type ViewBasis = {
  /** world direction of screen +x */
  right: Vec3;
  /** world direction of screen +y (down) */
  down: Vec3;
  /** world direction into the screen */
  forward: Vec3;
};

/** World-space camera axes: rows of the world-to-camera rotation. */
export function cameraBasis(qvec: Quat): ViewBasis {
  const R = quatToRotmat(qvec);
  return { right: R[0], down: R[1], forward: R[2] };
}

/** Pixel coordinates plus camera depth; callers must cull z <= 0 themselves. */
export function project(pose: CameraPose, p: Vec3): { u: number; v: number; z: number } {
  const R = quatToRotmat(pose.qvec);
  const c = add(matVec(R, p), pose.tvec);
  return {
    u: (pose.focal * c[0]) / c[2] + pose.width / 2,
    v: (pose.focal * c[1]) / c[2] + pose.height / 2,
    z: c[2],
  };
}

/** Orbit state -> pose, azimuth/elevation in radians around a pivot. */
export function orbitPose(
  pivot: Vec3,
  azimuth: number,
  elevation: number,
  distance: number,
  width: number,
  height: number,
  focal: number,
): CameraPose {
  const ce = Math.cos(elevation);
  const eye = add(pivot, [
    distance * ce * Math.cos(azimuth),
    distance * ce * Math.sin(azimuth),
    distance * Math.sin(elevation),
  ]);
  return lookAt(eye, pivot, width, height, focal);
}
