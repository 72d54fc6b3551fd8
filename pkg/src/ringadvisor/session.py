"""Real-time driver-in-the-loop session server.

One WebSocket client drives the ego through a planned sequence of segments
(a familiarization without advice, then advised trials). The simulation runs
in lockstep at the configured tick rate against absolute deadlines; client
pedal input is latest-wins, and a tick with no fresh input holds the last
one. State frames coalesce in the outbox so a slow reader never stalls the
tick loop; trial events, config, errors, and the end frame are never dropped.
"""

from __future__ import annotations

import asyncio
import collections
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from websockets.asyncio.server import serve
from websockets.exceptions import ConnectionClosed

from . import __version__
from .advisory import AdviceMode
from .episode import TickPipeline, wave_threshold
from .metrics import RunSummary, summarize, write_log, write_summary_csv
from .scenario import Scenario, ScenarioError, scenario_from_doc
from .units import mps_to_mph

PROTOCOL_VERSION = 1
SAFETY_STOP_DECEL = -2.0  # m/s^2 applied after a mid-trial disconnect
SAFETY_STOP_MAX_TICKS = 100


class SessionConfigError(ValueError):
    pass


class SessionAborted(Exception):
    """Client went away mid-plan; carries what completed so far."""


@dataclass(frozen=True)
class PedalMap:
    max_throttle_accel: float = 3.0  # m/s^2 at full throttle
    max_brake_decel: float = 6.0  # m/s^2 at full brake

    def __post_init__(self):
        if not (self.max_throttle_accel > 0 and self.max_brake_decel > 0):
            raise SessionConfigError("pedal map gains must be positive")

    def accel(self, throttle: float, brake: float) -> float:
        throttle = min(max(float(throttle), 0.0), 1.0)
        brake = min(max(float(brake), 0.0), 1.0)
        return throttle * self.max_throttle_accel - brake * self.max_brake_decel

    def pedals(self, accel: float) -> tuple[float, float]:
        """Inverse map, saturating at full pedal travel."""
        if accel >= 0:
            return min(accel / self.max_throttle_accel, 1.0), 0.0
        return 0.0, min(-accel / self.max_brake_decel, 1.0)

    def to_doc(self) -> dict:
        return {"max_throttle_accel": self.max_throttle_accel,
                "max_brake_decel": self.max_brake_decel}


@dataclass(frozen=True)
class SegmentPlan:
    name: str
    kind: str  # "familiarization" | "trial"
    scenario: Scenario

    def __post_init__(self):
        if self.kind not in ("familiarization", "trial"):
            raise SessionConfigError(f"unknown segment kind {self.kind!r}")
        if self.kind == "familiarization" and self.scenario.policy_doc is not None:
            raise SessionConfigError(
                f"segment {self.name!r}: familiarization must not carry a policy")

    @property
    def ticks(self) -> int:
        return self.scenario.config.horizon_steps


@dataclass(frozen=True)
class SessionConfig:
    segments: tuple
    host: str = "127.0.0.1"
    port: int = 8765
    tick_rate_hz: float = 10.0
    pedal_map: PedalMap = PedalMap()
    hello_timeout_s: float = 10.0
    pacing: bool = True
    log_dir: Path | None = None

    def __post_init__(self):
        if not self.segments:
            raise SessionConfigError("session needs at least one segment")
        if not self.tick_rate_hz > 0:
            raise SessionConfigError("tick_rate_hz must be positive")
        if self.pacing:
            for seg in self.segments:
                if abs(self.tick_rate_hz * seg.scenario.config.dt_s - 1.0) > 1e-6:
                    raise SessionConfigError(
                        f"segment {seg.name!r}: paced sessions need"
                        " tick_rate_hz * dt_s == 1")

    @property
    def tick_period_s(self) -> float:
        return 1.0 / self.tick_rate_hz


def load_session_config(path) -> SessionConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SessionConfigError(f"cannot load session config: {exc}") from exc
    return session_config_from_doc(doc, base_dir=path.parent)


def session_config_from_doc(doc: dict, base_dir=None) -> SessionConfig:
    segments = []
    for k, seg in enumerate(doc.get("segments", [])):
        try:
            scenario = scenario_from_doc(seg.get("scenario", {}), base_dir)
        except ScenarioError as exc:
            raise SessionConfigError(f"segment {k}: {exc}") from exc
        segments.append(SegmentPlan(
            name=str(seg.get("name", f"segment-{k}")),
            kind=str(seg.get("kind", "trial")),
            scenario=scenario,
        ))
    pedal_doc = doc.get("pedal_map", {})
    log_dir = doc.get("log_dir")
    return SessionConfig(
        segments=tuple(segments),
        host=str(doc.get("host", "127.0.0.1")),
        port=int(doc.get("port", 8765)),
        tick_rate_hz=float(doc.get("tick_rate_hz", 10.0)),
        pedal_map=PedalMap(
            max_throttle_accel=float(pedal_doc.get("max_throttle_accel", 3.0)),
            max_brake_decel=float(pedal_doc.get("max_brake_decel", 6.0))),
        hello_timeout_s=float(doc.get("hello_timeout_s", 10.0)),
        pacing=bool(doc.get("pacing", True)),
        log_dir=Path(log_dir) if log_dir else None,
    )


@dataclass
class ControlInput:
    seq: int
    throttle: float
    brake: float


class Mailbox:
    """Latest-wins control input; stale sequence numbers are dropped."""

    def __init__(self):
        self.current = ControlInput(seq=-1, throttle=0.0, brake=0.0)

    def offer(self, inp: ControlInput) -> bool:
        if inp.seq <= self.current.seq:
            return False
        self.current = inp
        return True


class Outbox:
    """Send queue where consecutive unsent state frames collapse to the latest."""

    def __init__(self, ws):
        self.ws = ws
        self.queue = collections.deque()
        self.wakeup = asyncio.Event()
        self.task = asyncio.create_task(self._sender())
        self.dead: Exception | None = None

    def put(self, frame: dict, coalesce: bool = False) -> None:
        if self.dead is not None:
            raise self.dead
        if coalesce and self.queue and self.queue[-1][1]:
            self.queue[-1] = (frame, True)
        else:
            self.queue.append((frame, coalesce))
        self.wakeup.set()

    async def _sender(self):
        try:
            while True:
                while not self.queue:
                    self.wakeup.clear()
                    await self.wakeup.wait()
                frame, _ = self.queue.popleft()
                await self.ws.send(json.dumps(frame, separators=(",", ":")))
        except ConnectionClosed as exc:
            self.dead = exc
        except asyncio.CancelledError:
            raise

    async def drain(self):
        while self.queue and self.dead is None:
            await asyncio.sleep(0)

    async def close(self):
        await self.drain()
        self.task.cancel()
        try:
            await self.task
        except asyncio.CancelledError:
            pass


def tick_frame(rec, applied: ControlInput) -> dict:
    n = len(rec.speeds_mps)
    lead = 1 % n
    advice_doc = None
    if rec.advice is not None:
        adv = rec.advice
        display = None
        if adv.mode is AdviceMode.SPEED:
            # pre-converted so the cockpit never does unit math
            display = {"target_mph": mps_to_mph(adv.target),
                       "half_mph": mps_to_mph(adv.range_halfwidth),
                       "speed_mph": mps_to_mph(rec.speeds_mps[0])}
        advice_doc = {
            "mode": adv.mode.value,
            "target": adv.target,
            "half": adv.range_halfwidth,
            "issued_tick": adv.issued_tick,
            "hold_delta": adv.hold_delta,
            "in_range": rec.in_range,
            "display": display,
        }
    return {
        "type": "tick",
        "tick": rec.tick,
        "sim_time_s": rec.sim_time_s,
        "advice": advice_doc,
        "ego": {
            "speed_mps": rec.speeds_mps[0],
            "pos_m": rec.positions_m[0],
            "lead_speed_mps": rec.speeds_mps[lead],
            "lead_gap_m": rec.gaps_m[0],
            "accel_cmd": rec.accel_cmd_ego,
        },
        "display": {"speed_mph": mps_to_mph(rec.speeds_mps[0])},
        "vehicles": [
            {"id": i, "pos_m": rec.positions_m[i],
             "speed_mps": rec.speeds_mps[i],
             "role": "ego" if i == 0 else "idm"}
            for i in range(n)
        ],
        "metrics": {"mean_speed_mps": rec.mean_speed_mps,
                    "collision_events": rec.collision_events},
        "applied": {"seq": applied.seq, "throttle": applied.throttle,
                    "brake": applied.brake},
    }


def segment_doc(plan: SegmentPlan) -> dict:
    sc = plan.scenario
    return {
        "name": plan.name,
        "kind": plan.kind,
        "ticks": plan.ticks,
        "dt_s": sc.config.dt_s,
        "circumference_m": sc.config.circumference_m,
        "n_vehicles": sc.config.n_vehicles,
        "vehicle_length_m": sc.config.vehicle_length_m,
        "advice": (
            {"mode": sc.advice.mode.value,
             "hold_delta": sc.advice.hold_delta,
             "range_halfwidth": sc.advice.range_halfwidth}
            if sc.policy_doc is not None and sc.advice is not None else None),
    }


def _error_frame(code: str, message: str) -> dict:
    return {"type": "error", "code": code, "message": message}


class SessionServer:
    """Serves exactly one full session, then stops accepting work."""

    def __init__(self, config: SessionConfig):
        self.config = config
        self.summaries: list[RunSummary] = []
        self.done = asyncio.Event()
        self._busy = False
        self._served = False

    async def run(self, ready: asyncio.Future | None = None) -> list[RunSummary]:
        async with serve(self._handler, self.config.host, self.config.port) as server:
            if ready is not None and not ready.done():
                port = server.sockets[0].getsockname()[1]
                ready.set_result(port)
            await self.done.wait()
        return self.summaries

    async def _handler(self, ws):
        if self._busy or self._served:
            try:
                await ws.send(json.dumps(_error_frame(
                    "busy", "a session is already in progress")))
                await ws.close(code=1013)
            except ConnectionClosed:
                pass
            return
        self._busy = True
        session_ran = False
        try:
            session_ran = await self._run_plan(ws)
        except ConnectionClosed:
            pass
        finally:
            self._busy = False
            # a refused or failed handshake leaves the server available;
            # only a real session (even an aborted one) consumes it
            if session_ran:
                self._served = True
                self.done.set()

    async def _run_plan(self, ws) -> bool:
        cfg = self.config
        try:
            raw = await asyncio.wait_for(ws.recv(), timeout=cfg.hello_timeout_s)
            hello = json.loads(raw)
        except asyncio.TimeoutError:
            await ws.send(json.dumps(_error_frame("timeout", "expected hello")))
            await ws.close(code=1002)
            return False
        except (json.JSONDecodeError, ConnectionClosed):
            return False
        if hello.get("type") != "hello" or hello.get("protocol") != PROTOCOL_VERSION:
            await ws.send(json.dumps(_error_frame(
                "protocol",
                f"server speaks protocol {PROTOCOL_VERSION},"
                f" client offered {hello.get('protocol')!r}")))
            await ws.close(code=1002)
            return False

        # handshake complete: this client owns the session from here on
        mailbox = Mailbox()
        outbox = Outbox(ws)
        receiver = asyncio.create_task(self._receive(ws, mailbox, outbox))
        try:
            outbox.put({
                "type": "config",
                "protocol": PROTOCOL_VERSION,
                "software": __version__,
                "tick_rate_hz": cfg.tick_rate_hz,
                "pedal_map": cfg.pedal_map.to_doc(),
                "display_units": "mph",
                "segments": [segment_doc(p) for p in cfg.segments],
            })
            for index, plan in enumerate(cfg.segments):
                await self._run_segment(ws, plan, index, mailbox, outbox)
            outbox.put({
                "type": "end",
                "summary": [s.to_doc() for s in self.summaries],
            })
            await outbox.drain()
            await ws.close()
        except (SessionAborted, ConnectionClosed):
            pass
        finally:
            await outbox.close()
            receiver.cancel()
            try:
                await receiver
            except asyncio.CancelledError:
                pass
            self._write_session_csv()
        return True

    async def _receive(self, ws, mailbox: Mailbox, outbox: Outbox):
        try:
            async for raw in ws:
                try:
                    doc = json.loads(raw)
                except json.JSONDecodeError:
                    outbox.put(_error_frame("bad_json", "control frame is not JSON"))
                    continue
                if doc.get("type") == "hello":
                    continue  # duplicate hello is harmless
                if doc.get("type") != "control":
                    outbox.put(_error_frame(
                        "bad_type", f"unexpected frame type {doc.get('type')!r}"))
                    continue
                try:
                    inp = ControlInput(seq=int(doc["seq"]),
                                       throttle=float(doc["throttle"]),
                                       brake=float(doc["brake"]))
                except (KeyError, TypeError, ValueError):
                    outbox.put(_error_frame(
                        "bad_control", "control needs integer seq and"
                                       " numeric throttle/brake"))
                    continue
                mailbox.offer(inp)  # stale seq falls on the floor
        except ConnectionClosed:
            pass

    async def _run_segment(self, ws, plan: SegmentPlan, index: int,
                           mailbox: Mailbox, outbox: Outbox):
        cfg = self.config
        sc = plan.scenario
        pipe = TickPipeline(
            sc.config, sc.idm,
            policy=sc.make_policy() if plan.kind == "trial" else None,
            advice_settings=sc.advice,
            spawn_mode=sc.spawn_mode,
            perturb_offset_m=sc.perturb_offset_m,
            ego_source="human")
        outbox.put({
            "type": "trial_event", "kind": "start", "trial": index,
            "of": len(cfg.segments), "segment": segment_doc(plan),
        })
        period = cfg.tick_period_s
        deadline = time.monotonic()
        completed = True
        try:
            for _ in range(plan.ticks):
                if cfg.pacing:
                    deadline += period
                    delay = deadline - time.monotonic()
                    # absolute deadlines: a late tick shortens the next sleep
                    # instead of shifting the whole schedule
                    await asyncio.sleep(delay if delay > 0 else 0)
                if outbox.dead is not None:
                    raise outbox.dead
                applied = mailbox.current
                rec = pipe.advance(cfg.pedal_map.accel(applied.throttle,
                                                       applied.brake))
                outbox.put(tick_frame(rec, applied), coalesce=True)
                if not cfg.pacing:
                    await asyncio.sleep(0)  # let the sender and receiver run
        except ConnectionClosed:
            completed = False
        if not completed or outbox.dead is not None:
            self._safety_stop(pipe)
            self._finish_segment(plan, index, pipe, completed=False)
            raise SessionAborted(plan.name)
        summary = self._finish_segment(plan, index, pipe, completed=True)
        outbox.put({
            "type": "trial_event", "kind": "end", "trial": index,
            "of": len(cfg.segments), "segment": segment_doc(plan),
            "summary": summary.to_doc(),
        })

    def _safety_stop(self, pipe: TickPipeline):
        for _ in range(SAFETY_STOP_MAX_TICKS):
            if pipe.state.ego_speed == 0.0:
                break
            pipe.advance(SAFETY_STOP_DECEL)

    def _finish_segment(self, plan: SegmentPlan, index: int,
                        pipe: TickPipeline, completed: bool) -> RunSummary | None:
        sc = plan.scenario
        if self.config.log_dir is not None:
            log_dir = Path(self.config.log_dir)
            log_dir.mkdir(parents=True, exist_ok=True)
            write_log(log_dir / f"{index:02d}-{plan.name}.jsonl",
                      pipe.header(label=plan.name), pipe.records)
        if not pipe.records:
            return None
        meta = pipe.summary_meta(label=plan.name)
        meta["driver"] = "human"
        # an aborted run may end inside the warmup; summarize what exists
        warmup = sc.config.warmup_steps
        if pipe.records[-1].tick <= warmup:
            warmup = 0
        summary = summarize(
            pipe.records, warmup, wave_threshold(sc.idm, sc.config),
            completed=completed, meta=meta)
        self.summaries.append(summary)
        return summary

    def _write_session_csv(self):
        if self.config.log_dir is not None and self.summaries:
            write_summary_csv(Path(self.config.log_dir) / "session_summary.csv",
                              self.summaries)


async def run_session(config: SessionConfig,
                      ready: asyncio.Future | None = None) -> list[RunSummary]:
    """Serve one complete session and return its per-segment summaries."""
    return await SessionServer(config).run(ready)
