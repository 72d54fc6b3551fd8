/**
 * Browser entry point. Wires the session client, pedal input, and the
 * canvas renderers into a single animation loop. All logic with behavior
 * worth testing lives in the imported modules; this file is DOM glue.
 *
 * Query parameters: ?host=...&port=...&name=...
 * Defaults: page host (or localhost) and port 8765.
 */

import { COLORS, DEFAULT_GAUGE, drawGauge, gaugeModel } from "./gauge.js";
import { hudModel } from "./hud.js";
import { ControlScheduler, PedalTracker } from "./pedals.js";
import { drawRing, interpolatedRingModel } from "./ringview.js";
import { CockpitClient } from "./session.js";
import type { SocketLike } from "./session.js";

const params = new URLSearchParams(window.location.search);
const host = params.get("host") ?? (window.location.hostname || "localhost");
const port = params.get("port") ?? "8765";
const name = params.get("name") ?? "cockpit";
const url = `ws://${host}:${port}/`;

const canvas = document.getElementById("cockpit") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;

const tracker = new PedalTracker();
const scheduler = new ControlScheduler(100);

const client = new CockpitClient(
  url,
  (u: string) => new WebSocket(u) as unknown as SocketLike,
  name,
  {
    onTick: () => {
      const period = client.tickPeriodMs();
      if (period !== null) {
        scheduler.setPeriod(period);
      }
      maybeSendControl();
    },
  },
);

function maybeSendControl(): void {
  if (client.state.status !== "driving") {
    return;
  }
  const frame = scheduler.offer(tracker.sample(), performance.now());
  if (frame !== null) {
    client.sendControl(frame);
  }
}

window.addEventListener("keydown", (ev) => {
  if (!ev.repeat && tracker.keydown(ev.code)) {
    ev.preventDefault();
  }
});
window.addEventListener("keyup", (ev) => {
  tracker.keyup(ev.code);
});

function pollGamepad(): void {
  if (typeof navigator.getGamepads !== "function") {
    return;
  }
  const pads = navigator.getGamepads();
  tracker.readGamepad(pads ? pads[0] : null);
}

function draw(): void {
  const w = canvas.width;
  const h = canvas.height;
  ctx.fillStyle = "#0c0e12";
  ctx.fillRect(0, 0, w, h);

  const st = client.state;
  const hud = hudModel(st);
  const tick = st.tick;
  const circumference =
    st.banner?.segment.circumference_m ??
    st.config?.segments[0]?.circumference_m ??
    250;

  if (tick !== null) {
    const period = client.tickPeriodMs() ?? 100;
    const frac = (performance.now() - st.tickArrivedMs) / period;
    drawRing(ctx, interpolatedRingModel(st.prevTick, tick, frac, circumference), {
      cx: w * 0.72,
      cy: h * 0.48,
      radius: Math.min(w * 0.24, h * 0.38),
    });
    drawGauge(ctx, gaugeModel(tick, DEFAULT_GAUGE), {
      cx: w * 0.27,
      cy: h * 0.48,
      radius: Math.min(w * 0.22, h * 0.4),
    });
  }

  if (hud.showControls && tick !== null) {
    const pedals = tracker.sample();
    drawPedalBars(pedals.throttle, pedals.brake, w, h);
  }

  ctx.fillStyle = COLORS.white;
  ctx.textAlign = "left";
  ctx.textBaseline = "alphabetic";
  ctx.font = "13px ui-monospace, monospace";
  ctx.fillText(hud.statusLine, 12, h - 12);

  if (hud.countdown !== null) {
    ctx.textAlign = "center";
    ctx.font = "bold 28px ui-monospace, monospace";
    ctx.fillText(hud.countdown, w * 0.5, 40);
  }

  if (hud.banner !== null) {
    ctx.fillStyle = "rgba(6, 8, 12, 0.82)";
    ctx.fillRect(0, 0, w, h);
    ctx.fillStyle = COLORS.white;
    ctx.textAlign = "center";
    ctx.font = "bold 34px system-ui, sans-serif";
    ctx.fillText(hud.banner.title, w / 2, h / 2 - 14);
    ctx.font = "18px system-ui, sans-serif";
    ctx.fillText(hud.banner.subtitle, w / 2, h / 2 + 22);
  }
}

function drawPedalBars(throttle: number, brake: number, w: number, h: number): void {
  const barW = 16;
  const barH = h * 0.3;
  const y0 = h * 0.62;
  const bars: Array<[number, number, string, string]> = [
    [w * 0.485, throttle, "#27c93f", "T"],
    [w * 0.515, brake, "#ff3b30", "B"],
  ];
  for (const [x, value, color, label] of bars) {
    ctx.strokeStyle = "#464c5a";
    ctx.lineWidth = 1;
    ctx.strokeRect(x - barW / 2, y0 - barH, barW, barH);
    ctx.fillStyle = color;
    ctx.fillRect(x - barW / 2, y0 - value * barH, barW, value * barH);
    ctx.fillStyle = COLORS.white;
    ctx.textAlign = "center";
    ctx.font = "12px ui-monospace, monospace";
    ctx.fillText(label, x, y0 + 16);
  }
}

function frame(): void {
  pollGamepad();
  maybeSendControl();
  draw();
  requestAnimationFrame(frame);
}

client.connect();
requestAnimationFrame(frame);
