// Pointer drags become poke forces. The anchor comes from a depth query at
// the press pixel; the drag vector lives in the view plane, with a push
// component along the camera axis so the poke digs into the surface rather
// than only skating across it.

import { add, normalize, norm, scale, Vec3, ViewBasis } from "./camera.js";

export type PokeForce = {
  position: Vec3;
  direction: Vec3;
  magnitude: number;
  radius: number;
};

export type DragOptions = {
  /** newtons per pixel of drag travel */
  gain?: number;
  /** clamp on the force magnitude in newtons */
  maxMagnitude?: number;
  /** forward component added per pixel of travel, relative to the view plane part */
  push?: number;
  /** poke radius in world units */
  radius: number;
};

const DEFAULTS = { gain: 0.01, maxMagnitude: 1.0, push: 1.0 };

/**
 * Map a drag of (dx, dy) pixels (y down) from an anchored press to a force.
 * A zero-length drag returns magnitude 0 so callers can skip sending it.
 */
export function dragToForce(
  anchor: Vec3,
  dx: number,
  dy: number,
  basis: ViewBasis,
  opts: DragOptions,
): PokeForce {
  const { gain, maxMagnitude, push } = { ...DEFAULTS, ...opts };
  const travel = Math.hypot(dx, dy);
  if (travel === 0) {
    return { position: anchor, direction: basis.forward, magnitude: 0, radius: opts.radius };
  }
  const planar = add(scale(basis.right, dx), scale(basis.down, dy));
  const direction = normalize(add(planar, scale(basis.forward, push * travel)));
  if (norm(direction) === 0) {
    throw new Error("degenerate view basis");
  }
  return {
    position: anchor,
    direction,
    magnitude: Math.min(maxMagnitude, gain * travel),
    radius: opts.radius,
  };
}
