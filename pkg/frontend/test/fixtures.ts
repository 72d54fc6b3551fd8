/** Message builders mirroring what the session server puts on the wire. */

import type {
  AdviceDoc,
  ConfigMsg,
  SegmentDoc,
  TickMsg,
  VehicleDoc,
} from "../src/protocol.js";

export const MPS_PER_MPH = 0.44704;

export function vehicles(n = 22, L = 250, speed = 4.0): VehicleDoc[] {
  const spacing = L / n;
  return Array.from({ length: n }, (_, i) => ({
    id: i,
    pos_m: (i * spacing) % L,
    speed_mps: speed,
    role: i === 0 ? ("ego" as const) : ("idm" as const),
  }));
}

export function speedAdvice(
  targetMph: number,
  halfMph: number,
  speedMph: number,
  inRange: boolean,
): AdviceDoc {
  return {
    mode: "speed",
    target: targetMph * MPS_PER_MPH,
    half: halfMph * MPS_PER_MPH,
    issued_tick: 1,
    hold_delta: 50,
    in_range: inRange,
    display: { target_mph: targetMph, half_mph: halfMph, speed_mph: speedMph },
  };
}

export function tickMsg(over: Partial<TickMsg> = {}): TickMsg {
  const vs = over.vehicles ?? vehicles();
  const ego = vs[0]!;
  const lead = vs[1 % vs.length]!;
  const speedMph = ego.speed_mps / MPS_PER_MPH;
  return {
    type: "tick",
    tick: 1,
    sim_time_s: 0.1,
    advice: null,
    ego: {
      speed_mps: ego.speed_mps,
      pos_m: ego.pos_m,
      lead_speed_mps: lead.speed_mps,
      lead_gap_m: 250 / vs.length - 5,
      accel_cmd: 0,
    },
    display: { speed_mph: speedMph },
    vehicles: vs,
    metrics: { mean_speed_mps: ego.speed_mps, collision_events: 0 },
    applied: { seq: 0, throttle: 0, brake: 0 },
    ...over,
  };
}

/** Tick whose gauge-facing numbers all agree with one advised display. */
export function advisedTick(
  targetMph: number,
  halfMph: number,
  speedMph: number,
  inRange: boolean,
  over: Partial<TickMsg> = {},
): TickMsg {
  return tickMsg({
    advice: speedAdvice(targetMph, halfMph, speedMph, inRange),
    display: { speed_mph: speedMph },
    ...over,
  });
}

export function segmentDoc(over: Partial<SegmentDoc> = {}): SegmentDoc {
  return {
    name: "wide",
    kind: "trial",
    ticks: 3000,
    dt_s: 0.1,
    circumference_m: 250,
    n_vehicles: 22,
    vehicle_length_m: 5,
    advice: { mode: "speed", hold_delta: 50, range_halfwidth: 5 * MPS_PER_MPH },
    ...over,
  };
}

export function configMsg(over: Partial<ConfigMsg> = {}): ConfigMsg {
  return {
    type: "config",
    protocol: 1,
    tick_rate_hz: 10,
    pedal_map: { max_throttle_accel: 3, max_brake_decel: 6 },
    display_units: "mph",
    segments: [segmentDoc({ name: "warmup", kind: "familiarization", advice: null }), segmentDoc()],
    ...over,
  };
}
