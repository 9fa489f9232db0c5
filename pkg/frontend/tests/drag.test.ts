import { describe, expect, it } from "vitest";

import { Vec3, ViewBasis, dot, norm } from "../src/camera.js";
import { dragToForce } from "../src/drag.js";

// camera on +x looking at the origin: screen x is world +y, screen y is world -z
const BASIS: ViewBasis = {
  right: [0, 1, 0],
  down: [0, 0, -1],
  forward: [-1, 0, 0],
};

const ANCHOR: Vec3 = [0.9, 0.0, 0.1];

describe("dragToForce", () => {
  it("returns a unit direction and gain-scaled magnitude", () => {
    const f = dragToForce(ANCHOR, 30, 40, BASIS, { gain: 0.002, radius: 0.05, push: 0 });
    expect(f.position).toEqual(ANCHOR);
    expect(Math.abs(norm(f.direction) - 1)).toBeLessThan(1e-12);
    // pure view-plane drag when push is 0: 30 px right, 40 px down
    expect(f.direction[0]).toBeCloseTo(0.0, 12);
    expect(f.direction[1]).toBeCloseTo(0.6, 12);
    expect(f.direction[2]).toBeCloseTo(-0.8, 12);
    expect(f.magnitude).toBeCloseTo(0.1, 12);
    expect(f.radius).toBe(0.05);
  });

  it("leans into the screen by the push factor", () => {
    const f = dragToForce(ANCHOR, 10, 0, BASIS, { gain: 0.01, radius: 0.1, push: 3 });
    // planar part has length 10, forward part 30
    const travel = Math.hypot(10, 0);
    const expected = Math.hypot(travel, 3 * travel);
    expect(f.direction[0]).toBeCloseTo(-3 * travel / expected, 12);
    expect(f.direction[1]).toBeCloseTo(travel / expected, 12);
    expect(f.direction[2]).toBeCloseTo(0, 12);
    expect(dot(f.direction, BASIS.forward)).toBeGreaterThan(0.9);
  });

  it("clamps the magnitude", () => {
    const f = dragToForce(ANCHOR, 300, 400, BASIS, { gain: 0.01, maxMagnitude: 0.5, radius: 0.1 });
    expect(f.magnitude).toBe(0.5);
  });

  it("maps a zero-length drag to a zero-magnitude forward poke", () => {
    const f = dragToForce(ANCHOR, 0, 0, BASIS, { radius: 0.1 });
    expect(f.magnitude).toBe(0);
    expect(f.direction).toEqual(BASIS.forward);
  });
});
