import { describe, expect, it } from "vitest";

import {
  RING_COLORS,
  interpolatedRingModel,
  posToAngle,
  ringModel,
} from "../src/ringview.js";
import { tickMsg, vehicles } from "./fixtures.js";

describe("angle mapping", () => {
  it("maps position 0 to angle 0 on the unit circle", () => {
    expect(posToAngle(0, 250)).toBe(0);
    const m = ringModel(tickMsg(), 250)[0]!;
    expect(m.angle).toBe(0);
    expect(m.x).toBeCloseTo(1, 12);
    expect(m.y).toBeCloseTo(0, 12);
  });

  it("maps half the circumference to the opposite side", () => {
    expect(posToAngle(125, 250)).toBeCloseTo(Math.PI, 12);
    const vs = vehicles(2, 250);
    vs[1]!.pos_m = 125;
    const m = ringModel(tickMsg({ vehicles: vs }), 250)[1]!;
    expect(m.x).toBeCloseTo(-1, 12);
    expect(m.y).toBeCloseTo(0, 12);
  });

  it("places 22 markers for the default ring", () => {
    const markers = ringModel(tickMsg(), 250);
    expect(markers).toHaveLength(22);
  });

  it("keeps the ego red and everyone else green", () => {
    const markers = ringModel(tickMsg(), 250);
    const egos = markers.filter((m) => m.role === "ego");
    expect(egos).toHaveLength(1);
    expect(egos[0]!.id).toBe(0);
    expect(RING_COLORS.ego).not.toBe(RING_COLORS.idm);
    expect(RING_COLORS.ego).toBe("#ff3b30");
    expect(RING_COLORS.idm).toBe("#27c93f");
  });
});

describe("one-tick interpolation", () => {
  const prev = tickMsg({ tick: 10, vehicles: vehicles(3, 250, 4) });
  const cur = tickMsg({ tick: 11, vehicles: vehicles(3, 250, 4) });
  cur.vehicles[0]!.pos_m = 2.0;

  it("moves a marker linearly between consecutive ticks", () => {
    const half = interpolatedRingModel(prev, cur, 0.5, 250)[0]!;
    expect(half.posM).toBeCloseTo(1.0, 12);
    const done = interpolatedRingModel(prev, cur, 1, 250)[0]!;
    expect(done.posM).toBeCloseTo(2.0, 12);
  });

  it("never extrapolates beyond one tick", () => {
    const capped = interpolatedRingModel(prev, cur, 3.7, 250)[0]!;
    expect(capped.posM).toBeCloseTo(2.0, 12);
    const floor = interpolatedRingModel(prev, cur, -1, 250)[0]!;
    expect(floor.posM).toBeCloseTo(0.0, 12);
  });

  it("takes the short way around the seam", () => {
    const a = tickMsg({ tick: 5, vehicles: vehicles(1, 250) });
    a.vehicles[0]!.pos_m = 249.5;
    const b = tickMsg({ tick: 6, vehicles: vehicles(1, 250) });
    b.vehicles[0]!.pos_m = 0.5;
    const mid = interpolatedRingModel(a, b, 0.5, 250)[0]!;
    expect(mid.posM).toBeCloseTo(0.0, 12);
  });

  it("snaps when ticks are not consecutive or prev is missing", () => {
    const gap = tickMsg({ tick: 15, vehicles: vehicles(3, 250) });
    gap.vehicles[0]!.pos_m = 40;
    expect(interpolatedRingModel(prev, gap, 0.5, 250)[0]!.posM).toBe(40);
    expect(interpolatedRingModel(null, gap, 0.5, 250)[0]!.posM).toBe(40);
  });
});
