/**
 * Pedal input: keyboard state plus optional gamepad triggers, sampled into
 * a {throttle, brake} pair, and a scheduler that turns samples into
 * control frames at most once per server tick period with a strictly
 * increasing sequence number.
 */

import type { ControlMsg } from "./protocol.js";
import { controlFrame } from "./protocol.js";

export interface PedalState {
  throttle: number;
  brake: number;
}

const THROTTLE_KEYS = new Set(["ArrowUp", "KeyW"]);
const BRAKE_KEYS = new Set(["ArrowDown", "KeyS"]);

export class PedalTracker {
  private throttleDown = new Set<string>();
  private brakeDown = new Set<string>();
  private padThrottle = 0;
  private padBrake = 0;

  /** Returns true when the key is one of ours (caller preventDefaults). */
  keydown(code: string): boolean {
    if (THROTTLE_KEYS.has(code)) {
      this.throttleDown.add(code);
      return true;
    }
    if (BRAKE_KEYS.has(code)) {
      this.brakeDown.add(code);
      return true;
    }
    return false;
  }

  keyup(code: string): void {
    this.throttleDown.delete(code);
    this.brakeDown.delete(code);
  }

  /**
   * Analog triggers from a standard-mapping gamepad: button 7 is the right
   * trigger (throttle), button 6 the left (brake). Pass null when no pad
   * is connected.
   */
  readGamepad(
    pad: { buttons?: ReadonlyArray<{ value: number }> } | null | undefined,
  ): void {
    const value = (i: number) => {
      const b = pad?.buttons?.[i];
      return b ? Math.min(Math.max(b.value, 0), 1) : 0;
    };
    this.padThrottle = value(7);
    this.padBrake = value(6);
  }

  sample(): PedalState {
    return {
      throttle: Math.max(this.throttleDown.size > 0 ? 1 : 0, this.padThrottle),
      brake: Math.max(this.brakeDown.size > 0 ? 1 : 0, this.padBrake),
    };
  }
}

export class ControlScheduler {
  private seq = 0;
  private lastSendMs = -Infinity;

  constructor(private periodMs: number) {}

  setPeriod(periodMs: number): void {
    this.periodMs = periodMs;
  }

  /**
   * Offer the current pedal sample; returns a control frame when one is
   * due (at least periodMs since the last send), null otherwise. Frames
   * go out every period even when the pedals are idle so the server's
   * latest-wins mailbox always holds fresh input.
   */
  offer(state: PedalState, nowMs: number): ControlMsg | null {
    if (nowMs - this.lastSendMs < this.periodMs) {
      return null;
    }
    this.lastSendMs = nowMs;
    this.seq += 1;
    return controlFrame(this.seq, state.throttle, state.brake, Math.round(nowMs));
  }
}
