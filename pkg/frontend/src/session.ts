/**
 * Cockpit-side session state machine.
 *
 * One WebSocket, one latest-tick slot. Network receive only updates state;
 * rendering reads it on its own schedule. The client owns no physics: every
 * displayed quantity comes out of the most recent server frame, so a
 * reconnect resumes cleanly from whatever tick arrives next.
 */

import type {
  ConfigMsg,
  ControlMsg,
  ErrorMsg,
  SegmentDoc,
  TickMsg,
  TrialEventMsg,
} from "./protocol.js";
import { helloFrame, parseServerFrame } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(code?: number, reason?: string): void;
  addEventListener(type: string, listener: (ev: any) => void): void;
}

export type SocketFactory = (url: string) => SocketLike;

export type ConnectionStatus =
  | "connecting"
  | "waiting"
  | "driving"
  | "break"
  | "ended"
  | "refused"
  | "closed";

export interface BannerState {
  kind: "start" | "end";
  trial: number;
  of: number;
  segment: SegmentDoc;
  summary: Record<string, unknown> | null;
}

export interface CockpitState {
  status: ConnectionStatus;
  config: ConfigMsg | null;
  tick: TickMsg | null;
  prevTick: TickMsg | null;
  /** wall-clock ms when the latest tick arrived (for interpolation) */
  tickArrivedMs: number;
  banner: BannerState | null;
  endSummary: Record<string, unknown>[] | null;
  errors: ErrorMsg[];
  controlsSent: number;
}

export interface CockpitEvents {
  /** fires on every tick frame, after state is updated */
  onTick?: (tick: TickMsg) => void;
  /** fires on any state change; hook a render request here */
  onChange?: () => void;
}

function freshState(): CockpitState {
  return {
    status: "connecting",
    config: null,
    tick: null,
    prevTick: null,
    tickArrivedMs: 0,
    banner: null,
    endSummary: null,
    errors: [],
    controlsSent: 0,
  };
}

export class CockpitClient {
  readonly state: CockpitState = freshState();
  private ws: SocketLike | null = null;

  constructor(
    private readonly url: string,
    private readonly factory: SocketFactory,
    private readonly name: string = "cockpit",
    private readonly events: CockpitEvents = {},
    private readonly now: () => number = () =>
      typeof performance !== "undefined" ? performance.now() : Date.now(),
  ) {}

  connect(): void {
    // interpolating across a reconnect would mix two connections' frames
    this.state.prevTick = null;
    this.state.status = "connecting";
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.addEventListener("open", () => {
      ws.send(JSON.stringify(helloFrame(this.name)));
      this.changed();
    });
    ws.addEventListener("message", (ev: { data: unknown }) => {
      const text = typeof ev.data === "string" ? ev.data : String(ev.data);
      this.handleFrame(text);
    });
    ws.addEventListener("close", () => {
      if (this.state.status !== "ended" && this.state.status !== "refused") {
        this.state.status = "closed";
      }
      this.changed();
    });
    ws.addEventListener("error", () => {
      // the close event carries the terminal state; nothing to do here
    });
  }

  /** Tick period in ms once the config frame has arrived, else null. */
  tickPeriodMs(): number | null {
    const cfg = this.state.config;
    return cfg === null ? null : 1000 / cfg.tick_rate_hz;
  }

  sendControl(msg: ControlMsg): boolean {
    if (this.ws === null) {
      return false;
    }
    try {
      this.ws.send(JSON.stringify(msg));
    } catch {
      return false;
    }
    this.state.controlsSent += 1;
    return true;
  }

  close(): void {
    this.ws?.close();
  }

  private handleFrame(text: string): void {
    let msg;
    try {
      msg = parseServerFrame(text);
    } catch {
      return; // not JSON; nothing a cockpit can do with it
    }
    const st = this.state;
    switch (msg.type) {
      case "config":
        st.config = msg;
        st.status = "waiting";
        break;
      case "tick": {
        const tick = msg;
        st.prevTick = st.tick;
        st.tick = tick;
        st.tickArrivedMs = this.now();
        st.status = "driving";
        st.banner = st.banner?.kind === "start" ? st.banner : null;
        this.events.onTick?.(tick);
        break;
      }
      case "trial_event":
        st.banner = bannerFromEvent(msg);
        st.status = msg.kind === "start" ? "driving" : "break";
        break;
      case "end":
        st.endSummary = msg.summary;
        st.status = "ended";
        break;
      case "error":
        st.errors.push(msg);
        if (msg.code === "busy" || msg.code === "protocol") {
          st.status = "refused";
        }
        break;
      case "unknown":
        return; // forward compatibility: drop silently
    }
    this.changed();
  }

  private changed(): void {
    this.events.onChange?.();
  }
}

function bannerFromEvent(ev: TrialEventMsg): BannerState {
  return {
    kind: ev.kind,
    trial: ev.trial,
    of: ev.of,
    segment: ev.segment,
    summary: ev.summary ?? null,
  };
}
