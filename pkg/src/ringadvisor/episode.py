"""The tick pipeline shared by headless runs and the live session server.

Order within one tick: commit the physics step with the ego command, refresh
or hold the advice against the new state, then record. The advice that a
record carries is therefore the advice in effect at that state, and the
command it carries is the one that produced the state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .advisory import (
    SPEED_CAP_FACTOR,
    Advice,
    AdviceSettings,
    Policy,
    advise,
    episode_reward,
    observe,
    policy_to_doc,
)
from .drivers import DriverParams, drive
from .metrics import RunSummary, TickRecord, make_header, summarize
from .ring import (
    DEFAULT_IDM,
    IdmParams,
    JamDensityError,
    RingConfig,
    SimState,
    SpawnMode,
    equilibrium_speed,
    spawn_ring,
    step,
)

WAVE_THRESHOLD_FACTOR = 0.5  # a tick shows a wave if some speed < 0.5 * v_eq


def default_advice_settings(idm: IdmParams, **kwargs) -> AdviceSettings:
    kwargs.setdefault("speed_cap_mps", SPEED_CAP_FACTOR * idm.v0)
    return AdviceSettings(**kwargs)


def wave_threshold(idm: IdmParams, config: RingConfig) -> float:
    try:
        return WAVE_THRESHOLD_FACTOR * equilibrium_speed(idm, config)
    except JamDensityError:
        return math.nan


class TickPipeline:
    """Stateful per-tick loop: step, advise, record.

    The session server feeds human commands into advance(); headless runs use
    driver_command() to close the loop with a driver model. With no driver and
    no command the ego follows plain noiseless IDM.
    """

    def __init__(self, config: RingConfig, idm: IdmParams = DEFAULT_IDM, *,
                 policy: Policy | None = None,
                 advice_settings: AdviceSettings | None = None,
                 driver: DriverParams | None = None,
                 spawn_mode: SpawnMode = SpawnMode.EQUILIBRIUM,
                 perturb_offset_m: float = 0.0,
                 ego_source: str | None = None,
                 keep_records: bool = True):
        self.config = config
        self.idm = idm
        self.policy = policy
        self.settings = (advice_settings if advice_settings is not None
                         else default_advice_settings(idm))
        self.driver = driver
        self.keep_records = keep_records
        if ego_source is None:
            ego_source = f"driver:{driver.kind.value}" if driver else "idm"
        self.ego_source = ego_source
        self.state = spawn_ring(config, idm, spawn_mode, perturb_offset_m)
        self.spawn_mode = spawn_mode
        self.perturb_offset_m = perturb_offset_m
        self.advices: list[Advice] = []  # fresh issues only, chronological
        self.current_advice: Advice | None = None
        self.records: list[TickRecord] = []
        self.mean_trace: list[float] = []
        # with no warmup the first advice applies from the spawn state on
        if self.policy is not None and config.warmup_steps == 0:
            self.current_advice = advise(self.policy, observe(self.state), 0,
                                         self.settings)
            self.advices.append(self.current_advice)

    def driver_command(self) -> float | None:
        if self.driver is None:
            return None
        return drive(self.driver, self.advices, observe(self.state),
                     self.state.tick, self.config.dt_s)

    def advance(self, ego_cmd: float | None) -> TickRecord | None:
        """Run one tick; returns the record, or None when not keeping them."""
        self.state = step(self.state, self.config, self.idm, ego_cmd)
        tick = self.state.tick
        if self.policy is not None and tick >= self.config.warmup_steps:
            if tick % self.settings.hold_delta == 0 or self.current_advice:
                self.current_advice = advise(
                    self.policy, observe(self.state), tick, self.settings,
                    prev=self.current_advice)
                if not self.advices or self.advices[-1] is not self.current_advice:
                    self.advices.append(self.current_advice)
        self.mean_trace.append(float(np.mean(self.state.speeds)))
        if not self.keep_records:
            return None
        rec = TickRecord.from_state(self.state, self.config.dt_s,
                                    self.current_advice, self.ego_source)
        self.records.append(rec)
        return rec

    def run(self, n_steps: int | None = None) -> None:
        for _ in range(n_steps if n_steps is not None else self.config.horizon_steps):
            self.advance(self.driver_command())

    def header(self, label: str | None = None) -> dict:
        return make_header(
            self.config, self.idm,
            spawn_mode=self.spawn_mode,
            perturb_offset_m=self.perturb_offset_m,
            ego_source=self.ego_source,
            advice=(
                {"mode": self.settings.mode.value,
                 "hold_delta": self.settings.hold_delta,
                 "range_halfwidth": self.settings.range_halfwidth}
                if self.policy is not None else None),
            policy=policy_to_doc(self.policy) if self.policy is not None else None,
            driver=self.driver.to_doc() if self.driver is not None else None,
            label=label,
        )

    def summary_meta(self, label: str | None = None) -> dict:
        has_policy = self.policy is not None
        return {
            "label": label or "",
            "seed": self.config.seed,
            "n_vehicles": self.config.n_vehicles,
            "hold_delta": self.settings.hold_delta if has_policy else "",
            "range_halfwidth": self.settings.range_halfwidth if has_policy else "",
            "advice_mode": self.settings.mode.value if has_policy else "",
            "policy": self.policy.kind if has_policy else "",
            "driver": self.driver.kind.value if self.driver else "",
            "accel_noise_std": self.config.accel_noise_std,
        }


@dataclass(frozen=True)
class EpisodeResult:
    header: dict
    records: list
    summary: RunSummary | None
    mean_speed_trace: np.ndarray
    advices: list
    final_state: SimState
    reward_mps: float

    def __post_init__(self):
        self.mean_speed_trace.setflags(write=False)


def run_episode(config: RingConfig, idm: IdmParams = DEFAULT_IDM, *,
                policy: Policy | None = None,
                advice_settings: AdviceSettings | None = None,
                driver: DriverParams | None = None,
                spawn_mode: SpawnMode = SpawnMode.EQUILIBRIUM,
                perturb_offset_m: float = 0.0,
                label: str | None = None,
                keep_records: bool = True) -> EpisodeResult:
    """Run the full horizon headlessly and aggregate.

    Advice begins once the warmup has elapsed (on the first tick that is a
    multiple of hold_delta); until then drivers fall back to plain IDM, which
    doubles as the no-advisory baseline when there is no policy at all.
    """
    pipe = TickPipeline(
        config, idm, policy=policy, advice_settings=advice_settings,
        driver=driver, spawn_mode=spawn_mode, perturb_offset_m=perturb_offset_m,
        keep_records=keep_records)
    pipe.run()
    trace = np.asarray(pipe.mean_trace)
    reward = episode_reward(trace, config.warmup_steps)
    summary = None
    if keep_records:
        summary = summarize(
            pipe.records, config.warmup_steps, wave_threshold(idm, config),
            meta=pipe.summary_meta(label))
    return EpisodeResult(
        header=pipe.header(label),
        records=pipe.records,
        summary=summary,
        mean_speed_trace=trace,
        advices=pipe.advices,
        final_state=pipe.state,
        reward_mps=reward,
    )
