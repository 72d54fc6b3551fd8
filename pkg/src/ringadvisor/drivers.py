"""Driver compliance models: how an ego turns advice into acceleration.

All models fall back to plain IDM when no advice is in effect (warmup, or an
advisory-free baseline). IDM-based compliance substitutes the advised speed
for the free-flow speed v0, which keeps the gap term and therefore collision
avoidance against the real leader fully active.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .advisory import Advice, AdviceMode, Observation, accel_to_speed_advice, in_range
from .ring import DEFAULT_IDM, GAP_EPS_M, IdmParams, idm_accel

# advised target substituted for v0 is floored here so (v/v0)^delta stays finite
ADVISED_V0_FLOOR_MPS = 0.1
DRIVER_ACCEL_BOUND = 3.0  # m/s^2, bound on deliberate (non-IDM) commands


class DriverKind(str, Enum):
    PERFECT = "perfect_compliance"
    IDM_TRANSITION = "idm_transition"
    DELAYED_IDM_TRANSITION = "delayed_idm_transition"


@dataclass(frozen=True)
class DriverParams:
    kind: DriverKind = DriverKind.PERFECT
    reaction_delay_steps: int = 0
    compliance_idm: IdmParams = DEFAULT_IDM
    accel_bound: float = DRIVER_ACCEL_BOUND

    def __post_init__(self):
        if self.reaction_delay_steps < 0:
            raise ValueError("reaction_delay_steps must be >= 0")
        if (self.kind is not DriverKind.DELAYED_IDM_TRANSITION
                and self.reaction_delay_steps != 0):
            raise ValueError(
                "reaction_delay_steps only applies to delayed_idm_transition")
        if not self.accel_bound > 0:
            raise ValueError("accel_bound must be positive")

    def to_doc(self) -> dict:
        return {"kind": self.kind.value,
                "reaction_delay_steps": self.reaction_delay_steps}


def _effective_advice(advices, tick: int, delay: int) -> Advice | None:
    """Latest advice already issued as of tick - delay."""
    cutoff = tick - delay
    for adv in reversed(advices):
        if adv.issued_tick <= cutoff:
            return adv
    return None


def drive(params: DriverParams, advices, obs: Observation, tick: int,
          dt_s: float) -> float:
    """Ego acceleration command for the step leaving `tick`.

    `advices` is the chronological list of fresh advice issues (held repeats
    excluded). Accel-mode advice is rendered as a speed target over its hold
    window against the current ego speed before IDM compliance.
    """
    delay = (params.reaction_delay_steps
             if params.kind is DriverKind.DELAYED_IDM_TRANSITION else 0)
    adv = _effective_advice(advices, tick, delay)
    idm = params.compliance_idm
    gap = max(obs.lead_gap_m, GAP_EPS_M)
    if adv is None:
        return idm_accel(idm, obs.ego_speed_mps, obs.lead_speed_mps, gap)

    if params.kind is DriverKind.PERFECT:
        if adv.mode is AdviceMode.SPEED:
            want = (adv.target - obs.ego_speed_mps) / dt_s
        else:
            want = adv.target
        return min(max(want, -params.accel_bound), params.accel_bound)

    if adv.mode is AdviceMode.ACCEL:
        adv = accel_to_speed_advice(adv, obs.ego_speed_mps, adv.hold_delta, dt_s)
    advised = replace(idm, v0=max(adv.target, ADVISED_V0_FLOOR_MPS))
    return idm_accel(advised, obs.ego_speed_mps, obs.lead_speed_mps, gap)


@dataclass(frozen=True)
class ComplianceEvent:
    """Per-advice latency: ticks from issue until the measurement first
    enters the band, or None when it never does within the advice window."""

    advice: Advice
    latency_steps: int | None
    first_in_range_tick: int | None

    @property
    def reached(self) -> bool:
        return self.latency_steps is not None


def compliance_latency(records, advices) -> list[ComplianceEvent]:
    """Latency per fresh advice, measured on a tick-record log.

    The measurement is the ego speed for speed-mode advice and the applied
    ego acceleration for accel-mode advice, matching in_range semantics.
    Each advice's window runs until the next advice is issued.
    """
    by_tick = {r.tick: r for r in records}
    last_tick = max(by_tick) if by_tick else 0
    events = []
    ordered = sorted(advices, key=lambda a: a.issued_tick)
    for k, adv in enumerate(ordered):
        end = ordered[k + 1].issued_tick if k + 1 < len(ordered) else last_tick + 1
        hit = None
        for t in range(adv.issued_tick, end):
            rec = by_tick.get(t)
            if rec is None:
                continue
            measurement = (rec.speeds_mps[0] if adv.mode is AdviceMode.SPEED
                           else rec.accel_cmd_ego)
            if in_range(adv, measurement):
                hit = t
                break
        events.append(ComplianceEvent(
            advice=adv,
            latency_steps=None if hit is None else hit - adv.issued_tick,
            first_in_range_tick=hit,
        ))
    return events
