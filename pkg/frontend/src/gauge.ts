/**
 * Speedometer model and rendering.
 *
 * The model is a pure function of the latest tick message: needle at the
 * server-supplied display speed, a red radial line at the advised target,
 * a green arc spanning [target - half, target + half], and the numeric
 * speed in the center. The center text is green exactly when the server's
 * in_range flag says so; the gauge never recomputes range membership from
 * the displayed numbers.
 */

import type { TickMsg } from "./protocol.js";

/** Canvas angle convention: 0 along +x, positive clockwise (y grows down). */
export interface GaugeGeometry {
  minMph: number;
  maxMph: number;
  startAngle: number;
  endAngle: number;
}

// 270 degree dial from lower-left, through 12 o'clock, to lower-right
export const DEFAULT_GAUGE: GaugeGeometry = {
  minMph: 0,
  maxMph: 50,
  startAngle: 0.75 * Math.PI,
  endAngle: 2.25 * Math.PI,
};

export type TextColor = "green" | "white";

export interface GaugeModel {
  speedMph: number;
  needleAngle: number;
  text: string;
  textColor: TextColor;
  targetLine: { targetMph: number; angle: number } | null;
  rangeArc: {
    lowMph: number;
    highMph: number;
    startAngle: number;
    endAngle: number;
  } | null;
}

export function mphToAngle(
  mph: number,
  geom: GaugeGeometry = DEFAULT_GAUGE,
): number {
  const clamped = Math.min(Math.max(mph, geom.minMph), geom.maxMph);
  const frac = (clamped - geom.minMph) / (geom.maxMph - geom.minMph);
  return geom.startAngle + frac * (geom.endAngle - geom.startAngle);
}

export function gaugeModel(
  tick: TickMsg,
  geom: GaugeGeometry = DEFAULT_GAUGE,
): GaugeModel {
  const speedMph = tick.display.speed_mph;
  const advice = tick.advice;
  const model: GaugeModel = {
    speedMph,
    needleAngle: mphToAngle(speedMph, geom),
    text: String(Math.round(speedMph)),
    // the server flag is the only authority on compliance color
    textColor: advice !== null && advice.in_range ? "green" : "white",
    targetLine: null,
    rangeArc: null,
  };
  if (advice !== null && advice.display !== null) {
    const d = advice.display;
    model.targetLine = {
      targetMph: d.target_mph,
      angle: mphToAngle(d.target_mph, geom),
    };
    const low = d.target_mph - d.half_mph;
    const high = d.target_mph + d.half_mph;
    model.rangeArc = {
      lowMph: low,
      highMph: high,
      startAngle: mphToAngle(low, geom),
      endAngle: mphToAngle(high, geom),
    };
  }
  return model;
}

export const COLORS = {
  green: "#27c93f",
  white: "#f4f4f4",
  dial: "#3a3f4a",
  needle: "#e8e8e8",
  target: "#ff3b30",
  range: "#27c93f",
  face: "#14161c",
};

export interface GaugePlacement {
  cx: number;
  cy: number;
  radius: number;
}

export function drawGauge(
  ctx: CanvasRenderingContext2D,
  model: GaugeModel,
  place: GaugePlacement,
  geom: GaugeGeometry = DEFAULT_GAUGE,
): void {
  const { cx, cy, radius } = place;

  ctx.beginPath();
  ctx.arc(cx, cy, radius, 0, 2 * Math.PI);
  ctx.fillStyle = COLORS.face;
  ctx.fill();

  ctx.beginPath();
  ctx.arc(cx, cy, radius * 0.92, geom.startAngle, geom.endAngle);
  ctx.strokeStyle = COLORS.dial;
  ctx.lineWidth = radius * 0.04;
  ctx.stroke();

  if (model.rangeArc !== null) {
    ctx.beginPath();
    ctx.arc(cx, cy, radius * 0.92, model.rangeArc.startAngle, model.rangeArc.endAngle);
    ctx.strokeStyle = COLORS.range;
    ctx.lineWidth = radius * 0.07;
    ctx.stroke();
  }

  ctx.strokeStyle = COLORS.dial;
  ctx.fillStyle = COLORS.white;
  ctx.textAlign = "center";
  ctx.textBaseline = "middle";
  ctx.font = `${Math.round(radius * 0.11)}px system-ui, sans-serif`;
  for (let mph = geom.minMph; mph <= geom.maxMph; mph += 5) {
    const a = mphToAngle(mph, geom);
    const major = mph % 10 === 0;
    const r0 = radius * (major ? 0.8 : 0.85);
    ctx.beginPath();
    ctx.moveTo(cx + r0 * Math.cos(a), cy + r0 * Math.sin(a));
    ctx.lineTo(cx + radius * 0.88 * Math.cos(a), cy + radius * 0.88 * Math.sin(a));
    ctx.lineWidth = major ? 3 : 1.5;
    ctx.stroke();
    if (major) {
      ctx.fillText(
        String(mph),
        cx + radius * 0.68 * Math.cos(a),
        cy + radius * 0.68 * Math.sin(a),
      );
    }
  }

  if (model.targetLine !== null) {
    const a = model.targetLine.angle;
    ctx.beginPath();
    ctx.moveTo(cx + radius * 0.55 * Math.cos(a), cy + radius * 0.55 * Math.sin(a));
    ctx.lineTo(cx + radius * 0.96 * Math.cos(a), cy + radius * 0.96 * Math.sin(a));
    ctx.strokeStyle = COLORS.target;
    ctx.lineWidth = radius * 0.03;
    ctx.stroke();
  }

  const na = model.needleAngle;
  ctx.beginPath();
  ctx.moveTo(cx - radius * 0.08 * Math.cos(na), cy - radius * 0.08 * Math.sin(na));
  ctx.lineTo(cx + radius * 0.82 * Math.cos(na), cy + radius * 0.82 * Math.sin(na));
  ctx.strokeStyle = COLORS.needle;
  ctx.lineWidth = radius * 0.025;
  ctx.stroke();
  ctx.beginPath();
  ctx.arc(cx, cy, radius * 0.05, 0, 2 * Math.PI);
  ctx.fillStyle = COLORS.needle;
  ctx.fill();

  ctx.fillStyle = COLORS[model.textColor];
  ctx.font = `bold ${Math.round(radius * 0.3)}px system-ui, sans-serif`;
  ctx.fillText(model.text, cx, cy + radius * 0.45);
  ctx.fillStyle = COLORS.white;
  ctx.font = `${Math.round(radius * 0.1)}px system-ui, sans-serif`;
  ctx.fillText("mph", cx, cy + radius * 0.62);
}
