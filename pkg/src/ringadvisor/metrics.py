"""Tick records, JSONL run logs, summaries, and bit-exact replay.

A log is one JSON object per line: a header, then one tick record per step.
Floats go through json's repr round trip, which preserves their bit patterns,
so a log replayed through the same stepper must match the recorded arrays
exactly. Gaps are logged alongside positions because positions are a derived
view and cannot be inverted bit-exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .advisory import Advice, AdviceMode, in_range
from .ring import EGO_ID, IdmParams, RingConfig, SimState, SpawnMode, spawn_ring, step

LOG_FORMAT = "ringadvisor-log"
LOG_VERSION = 1


class LogFormatError(ValueError):
    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


def mean_speed(state: SimState) -> float:
    return float(np.mean(state.speeds))


@dataclass(frozen=True)
class TickRecord:
    """Post-step snapshot of one tick plus the advice in effect."""

    tick: int
    sim_time_s: float
    positions_m: tuple
    speeds_mps: tuple
    gaps_m: tuple
    anchor_m: float
    accel_cmd_ego: float
    ego_source: str
    advice: Advice | None
    in_range: bool | None
    mean_speed_mps: float
    collision_events: int

    @classmethod
    def from_state(cls, state: SimState, dt_s: float, advice: Advice | None,
                   ego_source: str) -> "TickRecord":
        compliant = None
        if advice is not None:
            measurement = (float(state.speeds[EGO_ID])
                           if advice.mode is AdviceMode.SPEED
                           else float(state.accels[EGO_ID]))
            compliant = in_range(advice, measurement)
        return cls(
            tick=state.tick,
            sim_time_s=state.tick * dt_s,
            positions_m=tuple(float(x) for x in state.positions),
            speeds_mps=tuple(float(v) for v in state.speeds),
            gaps_m=tuple(float(g) for g in state.gaps),
            anchor_m=state.anchor_m,
            accel_cmd_ego=float(state.accels[EGO_ID]),
            ego_source=ego_source,
            advice=advice,
            in_range=compliant,
            mean_speed_mps=mean_speed(state),
            collision_events=state.collision_events,
        )

    def to_doc(self) -> dict:
        return {
            "type": "tick",
            "tick": self.tick,
            "sim_time_s": self.sim_time_s,
            "positions_m": list(self.positions_m),
            "speeds_mps": list(self.speeds_mps),
            "gaps_m": list(self.gaps_m),
            "anchor_m": self.anchor_m,
            "accel_cmd_ego": self.accel_cmd_ego,
            "ego_source": self.ego_source,
            "advice": self.advice.to_doc() if self.advice else None,
            "in_range": self.in_range,
            "mean_speed_mps": self.mean_speed_mps,
            "collision_events": self.collision_events,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "TickRecord":
        adv = doc.get("advice")
        return cls(
            tick=int(doc["tick"]),
            sim_time_s=float(doc["sim_time_s"]),
            positions_m=tuple(doc["positions_m"]),
            speeds_mps=tuple(doc["speeds_mps"]),
            gaps_m=tuple(doc["gaps_m"]),
            anchor_m=float(doc["anchor_m"]),
            accel_cmd_ego=float(doc["accel_cmd_ego"]),
            ego_source=doc["ego_source"],
            advice=Advice.from_doc(adv) if adv else None,
            in_range=doc.get("in_range"),
            mean_speed_mps=float(doc["mean_speed_mps"]),
            collision_events=int(doc["collision_events"]),
        )


def make_header(config: RingConfig, idm: IdmParams, *,
                spawn_mode: SpawnMode = SpawnMode.EQUILIBRIUM,
                perturb_offset_m: float = 0.0,
                ego_source: str = "idm",
                advice: dict | None = None,
                policy: dict | None = None,
                driver: dict | None = None,
                label: str | None = None) -> dict:
    return {
        "type": "header",
        "format": LOG_FORMAT,
        "version": LOG_VERSION,
        "software": __version__,
        "label": label,
        "ring": {
            "circumference_m": config.circumference_m,
            "n_vehicles": config.n_vehicles,
            "vehicle_length_m": config.vehicle_length_m,
            "dt_s": config.dt_s,
            "horizon_steps": config.horizon_steps,
            "warmup_steps": config.warmup_steps,
            "accel_noise_std": config.accel_noise_std,
            "seed": config.seed,
        },
        "idm": {
            "v0": idm.v0, "T": idm.T, "a_max": idm.a_max,
            "b_comf": idm.b_comf, "delta": idm.delta, "s0": idm.s0,
        },
        "spawn": {"mode": spawn_mode.value, "perturb_offset_m": perturb_offset_m},
        "ego_source": ego_source,
        "advice": advice,
        "policy": policy,
        "driver": driver,
    }


def header_config(header: dict) -> tuple[RingConfig, IdmParams, SpawnMode, float]:
    try:
        r = header["ring"]
        cfg = RingConfig(
            circumference_m=r["circumference_m"],
            n_vehicles=r["n_vehicles"],
            vehicle_length_m=r["vehicle_length_m"],
            dt_s=r["dt_s"],
            horizon_steps=r["horizon_steps"],
            warmup_steps=r["warmup_steps"],
            accel_noise_std=r["accel_noise_std"],
            seed=r["seed"],
        )
        i = header["idm"]
        idm = IdmParams(v0=i["v0"], T=i["T"], a_max=i["a_max"],
                        b_comf=i["b_comf"], delta=i["delta"], s0=i["s0"])
        spawn = SpawnMode(header["spawn"]["mode"])
        offset = float(header["spawn"].get("perturb_offset_m", 0.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise LogFormatError(f"bad header: {exc}") from exc
    return cfg, idm, spawn, offset


def write_log(path_or_file, header: dict, records) -> None:
    def dump(fh):
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for rec in records:
            fh.write(json.dumps(rec.to_doc(), separators=(",", ":")) + "\n")

    if hasattr(path_or_file, "write"):
        dump(path_or_file)
    else:
        with open(path_or_file, "w") as fh:
            dump(fh)


def read_log(path_or_file) -> tuple[dict, list[TickRecord]]:
    """Parse and validate a JSONL run log. Errors carry the 1-based line."""
    if hasattr(path_or_file, "read"):
        lines = path_or_file.read().splitlines()
    else:
        lines = Path(path_or_file).read_text().splitlines()
    if not lines:
        raise LogFormatError("empty log")

    def parse(line_no, raw):
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise LogFormatError(f"invalid JSON: {exc}", line_no) from exc

    header = parse(1, lines[0])
    if header.get("type") != "header" or header.get("format") != LOG_FORMAT:
        raise LogFormatError("first line is not a run-log header", 1)
    if header.get("version") != LOG_VERSION:
        raise LogFormatError(f"unsupported log version {header.get('version')!r}", 1)
    n = header["ring"]["n_vehicles"]

    records = []
    prev_tick = 0
    for line_no, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        doc = parse(line_no, raw)
        if doc.get("type") != "tick":
            raise LogFormatError(f"expected a tick record, got {doc.get('type')!r}",
                                 line_no)
        try:
            rec = TickRecord.from_doc(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise LogFormatError(f"malformed tick record: {exc}", line_no) from exc
        if rec.tick != prev_tick + 1:
            raise LogFormatError(
                f"non-consecutive tick {rec.tick} after {prev_tick}", line_no)
        if not (len(rec.speeds_mps) == len(rec.positions_m) == len(rec.gaps_m) == n):
            raise LogFormatError("vehicle array length mismatch", line_no)
        if abs(float(np.mean(rec.speeds_mps)) - rec.mean_speed_mps) > 1e-12:
            raise LogFormatError("mean_speed_mps inconsistent with speeds", line_no)
        prev_tick = rec.tick
        records.append(rec)
    return header, records


@dataclass(frozen=True)
class ReplayResult:
    matched: bool
    n_ticks: int
    divergence_tick: int | None = None
    divergence_field: str | None = None

    def __str__(self):
        if self.matched:
            return f"replay matched all {self.n_ticks} ticks bit-exactly"
        return (f"replay diverged at tick {self.divergence_tick}"
                f" in field {self.divergence_field!r}")


def replay(header: dict, records) -> ReplayResult:
    """Re-run the log's scenario feeding back recorded ego commands.

    Non-ego accelerations are regenerated from the seeded RNG; everything
    must match the recorded arrays bit-for-bit.
    """
    cfg, idm, spawn_mode, offset = header_config(header)
    st = spawn_ring(cfg, idm, spawn_mode, offset)
    checks = 0
    for rec in records:
        st = step(st, cfg, idm, rec.accel_cmd_ego)
        for name, got, want in (
            ("speeds_mps", st.speeds, np.asarray(rec.speeds_mps)),
            ("gaps_m", st.gaps, np.asarray(rec.gaps_m)),
            ("positions_m", st.positions, np.asarray(rec.positions_m)),
        ):
            if not np.array_equal(got, want):
                return ReplayResult(False, checks, rec.tick, name)
        if st.anchor_m != rec.anchor_m:
            return ReplayResult(False, checks, rec.tick, "anchor_m")
        if st.collision_events != rec.collision_events:
            return ReplayResult(False, checks, rec.tick, "collision_events")
        checks += 1
    return ReplayResult(True, checks)


@dataclass(frozen=True)
class RunSummary:
    n_ticks: int
    warmup_steps: int
    wave_threshold_mps: float
    reward_mps: float  # post-warmup mean of per-tick mean speeds
    speed_std_mps: float
    min_speed_mps: float
    wave_fraction: float  # post-warmup ticks where some vehicle is below threshold
    collision_count: int
    advice_ticks: int
    in_range_fraction: float | None
    completed: bool = True
    meta: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        doc["meta"] = dict(self.meta)
        return doc


def summarize(records, warmup_steps: int, wave_threshold_mps: float,
              *, completed: bool = True, meta: dict | None = None) -> RunSummary:
    """Aggregate post-warmup statistics; ticks 1..warmup are discarded."""
    if not records:
        raise ValueError("no records to summarize")
    tail = [r for r in records if r.tick > warmup_steps]
    if not tail:
        raise ValueError("no post-warmup records")
    speeds = np.array([r.speeds_mps for r in tail])
    per_tick_mean = np.array([r.mean_speed_mps for r in tail])
    advice_ticks = sum(1 for r in tail if r.advice is not None)
    in_band = [r.in_range for r in tail if r.in_range is not None]
    return RunSummary(
        n_ticks=len(records),
        warmup_steps=warmup_steps,
        wave_threshold_mps=wave_threshold_mps,
        reward_mps=float(per_tick_mean.mean()),
        speed_std_mps=float(speeds.std()),
        min_speed_mps=float(speeds.min()),
        wave_fraction=float((speeds.min(axis=1) < wave_threshold_mps).mean()),
        collision_count=int(sum(r.collision_events for r in records)),
        advice_ticks=advice_ticks,
        in_range_fraction=(float(np.mean(in_band)) if in_band else None),
        completed=completed,
        meta=dict(meta or {}),
    )


SUMMARY_CSV_COLUMNS = [
    "label", "seed", "n_vehicles", "hold_delta", "range_halfwidth",
    "advice_mode", "policy", "driver", "accel_noise_std",
    "n_ticks", "warmup_steps", "wave_threshold_mps", "reward_mps",
    "speed_std_mps", "min_speed_mps", "wave_fraction", "collision_count",
    "advice_ticks", "in_range_fraction", "completed",
]


def summary_row(summary: RunSummary) -> dict:
    row = {k: summary.meta.get(k, "") for k in SUMMARY_CSV_COLUMNS}
    for f in fields(RunSummary):
        if f.name in SUMMARY_CSV_COLUMNS and f.name != "meta":
            row[f.name] = getattr(summary, f.name)
    return row


def write_summary_csv(path, summaries, *, append: bool = False) -> None:
    """Fixed-schema CSV, one row per run; append skips the header line."""
    path = Path(path)
    fresh = not (append and path.exists() and path.stat().st_size > 0)
    with open(path, "a" if append else "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_CSV_COLUMNS,
                                extrasaction="ignore")
        if fresh:
            writer.writeheader()
        for s in summaries:
            row = summary_row(s)
            row = {k: ("" if v is None else v) for k, v in row.items()}
            writer.writerow(row)
