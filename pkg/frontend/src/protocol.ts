/**
 * Wire protocol between the cockpit and the session server.
 *
 * Text frames, JSON payloads, discriminated by "type". The server is the
 * single source of truth for every rendered value; this module only names
 * the fields and narrows raw JSON into them. Unknown frame types are
 * surfaced as UnknownMsg so callers can ignore them; unknown fields inside
 * known frames are simply not looked at.
 */

export const PROTOCOL_VERSION = 1;

export interface AdviceDisplay {
  target_mph: number;
  half_mph: number;
  speed_mph: number;
}

export interface AdviceDoc {
  mode: string;
  target: number;
  half: number;
  issued_tick: number;
  hold_delta: number;
  in_range: boolean;
  /** null when the advice is not a speed target (nothing to put on a speedometer) */
  display: AdviceDisplay | null;
}

export interface EgoDoc {
  speed_mps: number;
  pos_m: number;
  lead_speed_mps: number;
  lead_gap_m: number;
  accel_cmd: number;
}

export interface VehicleDoc {
  id: number;
  pos_m: number;
  speed_mps: number;
  role: "ego" | "idm";
}

export interface TickMsg {
  type: "tick";
  tick: number;
  sim_time_s: number;
  advice: AdviceDoc | null;
  ego: EgoDoc;
  display: { speed_mph: number };
  vehicles: VehicleDoc[];
  metrics: { mean_speed_mps: number; collision_events: number };
  applied: { seq: number; throttle: number; brake: number };
}

export interface SegmentAdviceDoc {
  mode: string;
  hold_delta: number;
  range_halfwidth: number;
}

export interface SegmentDoc {
  name: string;
  kind: "familiarization" | "trial";
  ticks: number;
  dt_s: number;
  circumference_m: number;
  n_vehicles: number;
  vehicle_length_m: number;
  advice: SegmentAdviceDoc | null;
}

export interface ConfigMsg {
  type: "config";
  protocol: number;
  tick_rate_hz: number;
  pedal_map: { max_throttle_accel: number; max_brake_decel: number };
  display_units: string;
  segments: SegmentDoc[];
}

export interface TrialEventMsg {
  type: "trial_event";
  kind: "start" | "end";
  trial: number;
  of: number;
  segment: SegmentDoc;
  /** present on kind "end": the finished segment's summary record */
  summary?: Record<string, unknown>;
}

export interface EndMsg {
  type: "end";
  summary: Record<string, unknown>[];
}

export interface ErrorMsg {
  type: "error";
  code: string;
  message: string;
}

export interface UnknownMsg {
  type: "unknown";
  raw: unknown;
}

export type ServerMsg =
  | ConfigMsg
  | TickMsg
  | TrialEventMsg
  | EndMsg
  | ErrorMsg
  | UnknownMsg;

export interface ControlMsg {
  type: "control";
  seq: number;
  throttle: number;
  brake: number;
  t_ms: number;
}

export interface HelloMsg {
  type: "hello";
  protocol: number;
  name: string;
}

export function helloFrame(name: string): HelloMsg {
  return { type: "hello", protocol: PROTOCOL_VERSION, name };
}

export function controlFrame(
  seq: number,
  throttle: number,
  brake: number,
  t_ms: number,
): ControlMsg {
  return { type: "control", seq, throttle, brake, t_ms };
}

/**
 * Narrow one raw server frame. Malformed JSON throws; a JSON document
 * whose "type" is not recognized comes back as {type: "unknown"} so the
 * caller can drop it without dropping the connection.
 */
export function parseServerFrame(raw: string): ServerMsg {
  const doc = JSON.parse(raw) as Record<string, unknown>;
  switch (doc["type"]) {
    case "config":
      return doc as unknown as ConfigMsg;
    case "tick":
      return doc as unknown as TickMsg;
    case "trial_event":
      return doc as unknown as TrialEventMsg;
    case "end":
      return doc as unknown as EndMsg;
    case "error":
      return doc as unknown as ErrorMsg;
    default:
      return { type: "unknown", raw: doc };
  }
}
