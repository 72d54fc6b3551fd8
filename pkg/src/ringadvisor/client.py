"""Headless WebSocket client: a driver model standing in for a human.

Connects, handshakes, and answers every tick frame with a control frame
computed by a DriverParams model from the frame's own ego block, mirroring
what the browser cockpit does with pedals. Useful for loopback validation
and for soak-testing a server without a UI.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from websockets.asyncio.client import connect
from websockets.exceptions import ConnectionClosed

from .advisory import Advice, AdviceMode, Observation
from .drivers import DriverParams, drive
from .session import PROTOCOL_VERSION, PedalMap


@dataclass
class ClientResult:
    config: dict | None = None
    trial_starts: list = field(default_factory=list)
    trial_summaries: list = field(default_factory=list)
    end: dict | None = None
    errors: list = field(default_factory=list)
    ticks: list = field(default_factory=list)
    # (tick, monotonic arrival) per segment, for client-side pacing checks
    arrivals: list = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.end is not None


class DriverClient:
    def __init__(self, uri: str, driver: DriverParams | None = None, *,
                 client_name: str = "headless-driver",
                 collect_ticks: bool = False):
        self.uri = uri
        self.driver = driver
        self.client_name = client_name
        self.collect_ticks = collect_ticks

    async def run(self) -> ClientResult:
        result = ClientResult()
        async with connect(self.uri) as ws:
            await ws.send(json.dumps({
                "type": "hello", "protocol": PROTOCOL_VERSION,
                "client": self.client_name,
            }))
            pedal_map = PedalMap()
            segment: dict = {}
            advices: list[Advice] = []
            last_issued: int | None = None
            seq = 0
            try:
                async for raw in ws:
                    doc = json.loads(raw)
                    kind = doc.get("type")
                    if kind == "config":
                        result.config = doc
                        pedal_map = PedalMap(**doc["pedal_map"])
                    elif kind == "trial_event":
                        if doc["kind"] == "start":
                            result.trial_starts.append(doc)
                            result.arrivals.append([])
                            segment = doc["segment"]
                            advices = []
                            last_issued = None
                        else:
                            result.trial_summaries.append(doc["summary"])
                    elif kind == "tick":
                        if result.arrivals:
                            result.arrivals[-1].append(
                                (doc["tick"], time.monotonic()))
                        if self.collect_ticks:
                            result.ticks.append(doc)
                        if self.driver is not None:
                            seq += 1
                            await ws.send(json.dumps(self._control(
                                doc, segment, advices, pedal_map, seq,
                                last_issued)))
                            if doc["advice"] is not None:
                                last_issued = doc["advice"]["issued_tick"]
                    elif kind == "end":
                        result.end = doc
                    elif kind == "error":
                        result.errors.append(doc)
                    else:
                        result.errors.append(doc)
            except ConnectionClosed:
                pass
        return result

    def _control(self, frame: dict, segment: dict, advices: list[Advice],
                 pedal_map: PedalMap, seq: int,
                 last_issued: int | None) -> dict:
        adv_doc = frame["advice"]
        if adv_doc is not None and adv_doc["issued_tick"] != last_issued:
            advices.append(Advice(
                mode=AdviceMode(adv_doc["mode"]),
                target=float(adv_doc["target"]),
                range_halfwidth=float(adv_doc["half"]),
                issued_tick=int(adv_doc["issued_tick"]),
                hold_delta=int(adv_doc["hold_delta"])))
        ego = frame["ego"]
        obs = Observation(
            ego_speed_mps=ego["speed_mps"],
            lead_speed_mps=ego["lead_speed_mps"],
            lead_gap_m=ego["lead_gap_m"],
            circumference_m=segment.get("circumference_m", 250.0),
        )
        accel = drive(self.driver, advices, obs, frame["tick"],
                      segment.get("dt_s", 0.1))
        throttle, brake = pedal_map.pedals(accel)
        return {"type": "control", "seq": seq,
                "throttle": throttle, "brake": brake}


async def run_driver_client(uri: str, driver: DriverParams | None = None,
                            **kwargs) -> ClientResult:
    return await DriverClient(uri, driver, **kwargs).run()
