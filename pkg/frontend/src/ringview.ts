/**
 * Top-down view of the ring: every vehicle is a marker on a circle, placed
 * by arc angle 2*pi*pos/L. The ego is red, everyone else green. Between
 * authoritative ticks, markers move by at most one tick of linear
 * interpolation toward the latest positions; they snap whenever ticks are
 * not consecutive (coalesced frames) or no previous tick exists.
 */

import type { TickMsg, VehicleDoc } from "./protocol.js";

export interface Marker {
  id: number;
  role: "ego" | "idm";
  posM: number;
  angle: number;
  /** unit-circle coordinates (canvas convention: y grows downward) */
  x: number;
  y: number;
}

export function posToAngle(posM: number, circumferenceM: number): number {
  return (2 * Math.PI * posM) / circumferenceM;
}

function marker(id: number, role: "ego" | "idm", posM: number, L: number): Marker {
  const angle = posToAngle(posM, L);
  return { id, role, posM, angle, x: Math.cos(angle), y: Math.sin(angle) };
}

export function ringModel(tick: TickMsg, circumferenceM: number): Marker[] {
  return tick.vehicles.map((v) => marker(v.id, v.role, v.pos_m, circumferenceM));
}

function wrapDelta(fromM: number, toM: number, L: number): number {
  // shortest signed arc from -> to on a ring of length L
  return ((((toM - fromM) % L) + 1.5 * L) % L) - 0.5 * L;
}

/**
 * Positions interpolated a fraction of one tick from prev toward cur.
 * frac is clamped to [0, 1]; anything that breaks the one-tick assumption
 * (missing prev, non-consecutive ticks, changed vehicle count) snaps to cur.
 */
export function interpolatedRingModel(
  prev: TickMsg | null,
  cur: TickMsg,
  frac: number,
  circumferenceM: number,
): Marker[] {
  if (
    prev === null ||
    prev.tick !== cur.tick - 1 ||
    prev.vehicles.length !== cur.vehicles.length
  ) {
    return ringModel(cur, circumferenceM);
  }
  const f = Math.min(Math.max(frac, 0), 1);
  const L = circumferenceM;
  return cur.vehicles.map((v: VehicleDoc, i: number) => {
    const p = prev.vehicles[i]!;
    const d = wrapDelta(p.pos_m, v.pos_m, L);
    const pos = (((p.pos_m + f * d) % L) + L) % L;
    return marker(v.id, v.role, pos, L);
  });
}

export const RING_COLORS = {
  ego: "#ff3b30",
  idm: "#27c93f",
  road: "#2a2e38",
  edge: "#464c5a",
};

export interface RingPlacement {
  cx: number;
  cy: number;
  radius: number;
}

export function drawRing(
  ctx: CanvasRenderingContext2D,
  markers: Marker[],
  place: RingPlacement,
): void {
  const { cx, cy, radius } = place;

  ctx.beginPath();
  ctx.arc(cx, cy, radius, 0, 2 * Math.PI);
  ctx.strokeStyle = RING_COLORS.road;
  ctx.lineWidth = radius * 0.12;
  ctx.stroke();
  for (const r of [radius * 0.94, radius * 1.06]) {
    ctx.beginPath();
    ctx.arc(cx, cy, r, 0, 2 * Math.PI);
    ctx.strokeStyle = RING_COLORS.edge;
    ctx.lineWidth = 1;
    ctx.stroke();
  }

  for (const m of markers) {
    ctx.save();
    ctx.translate(cx + radius * m.x, cy + radius * m.y);
    // heading is tangent to the circle at the marker
    ctx.rotate(m.angle + Math.PI / 2);
    ctx.fillStyle = RING_COLORS[m.role];
    const w = radius * 0.05;
    const h = radius * 0.09;
    ctx.fillRect(-w / 2, -h / 2, w, h);
    ctx.restore();
  }
}
