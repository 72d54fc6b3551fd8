/**
 * Text overlays: segment banners, the between-segment break screen, the
 * remaining-time countdown, and the one-line status strip. Pure functions
 * of CockpitState so they can be tested without a canvas.
 */

import type { CockpitState } from "./session.js";

export interface HudModel {
  /** full-screen card shown while not actively driving, else null */
  banner: { title: string; subtitle: string } | null;
  /** m:ss remaining in the current segment while driving, else null */
  countdown: string | null;
  statusLine: string;
  /** pedals are only rendered while a segment is live */
  showControls: boolean;
}

export function formatCountdown(seconds: number): string {
  const s = Math.max(0, Math.ceil(seconds));
  const m = Math.floor(s / 60);
  const r = s % 60;
  return `${m}:${String(r).padStart(2, "0")}`;
}

function segmentTitle(state: CockpitState): string {
  const b = state.banner;
  if (b === null) {
    return "";
  }
  const pos = `${b.trial + 1} of ${b.of}`;
  return b.segment.kind === "familiarization"
    ? `familiarization (${pos})`
    : `trial ${pos}: ${b.segment.name}`;
}

export function hudModel(state: CockpitState): HudModel {
  const model: HudModel = {
    banner: null,
    countdown: null,
    statusLine: "",
    showControls: false,
  };
  switch (state.status) {
    case "connecting":
      model.banner = { title: "connecting", subtitle: "waiting for the session server" };
      break;
    case "waiting":
      model.banner = { title: "connected", subtitle: "session starting" };
      break;
    case "driving": {
      model.showControls = true;
      const tick = state.tick;
      const seg = state.banner?.segment ?? null;
      if (tick === null) {
        // segment announced but no state yet: show the card
        model.banner = { title: segmentTitle(state), subtitle: "get ready" };
        model.showControls = false;
      } else if (seg !== null) {
        model.countdown = formatCountdown((seg.ticks - tick.tick) * seg.dt_s);
      }
      break;
    }
    case "break": {
      const summary = state.banner?.summary;
      const mean = summary?.["mean_speed_mps"];
      model.banner = {
        title: `${segmentTitle(state)} complete`,
        subtitle:
          typeof mean === "number"
            ? `mean speed ${mean.toFixed(2)} m/s, take a short break`
            : "take a short break",
      };
      break;
    }
    case "ended":
      model.banner = {
        title: "session complete",
        subtitle: `${state.endSummary?.length ?? 0} segments recorded, thanks for driving`,
      };
      break;
    case "refused": {
      const err = state.errors[state.errors.length - 1];
      model.banner = {
        title: "connection refused",
        subtitle: err ? err.message : "server unavailable",
      };
      break;
    }
    case "closed":
      model.banner = { title: "disconnected", subtitle: "connection lost" };
      break;
  }
  model.statusLine = statusLine(state);
  return model;
}

function statusLine(state: CockpitState): string {
  const parts: string[] = [state.status];
  const tick = state.tick;
  const seg = state.banner?.segment ?? null;
  if (tick !== null) {
    parts.push(seg !== null ? `tick ${tick.tick}/${seg.ticks}` : `tick ${tick.tick}`);
    parts.push(`mean ${tick.metrics.mean_speed_mps.toFixed(2)} m/s`);
    if (tick.metrics.collision_events > 0) {
      parts.push(`collisions ${tick.metrics.collision_events}`);
    }
    parts.push(`applied seq ${tick.applied.seq}`);
  }
  if (state.controlsSent > 0) {
    parts.push(`sent ${state.controlsSent}`);
  }
  return parts.join("  |  ");
}
