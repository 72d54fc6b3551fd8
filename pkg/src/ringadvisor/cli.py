"""Command line entry point: headless runs, sweeps, training, replay, serving.

Every command is driven by a JSON config file plus a small set of override
flags, so an experiment is reproducible from its config and the command line
that launched it. All outputs are plain JSONL/CSV.
"""

from __future__ import annotations

import argparse
import asyncio
import concurrent.futures
import csv
import itertools
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .advisory import PolicyFileError, save_policy
from .metrics import LogFormatError, read_log, replay, write_log, write_summary_csv
from .scenario import (OVERRIDE_KEYS, ScenarioError, apply_overrides,
                       load_scenario, run_scenario)
from .session import SessionConfigError, load_session_config, run_session
from .training import CemConfig, make_scenario_reward, train_cem

# axis flag -> scenario override key
_AXIS_FLAGS = {
    "delta": "hold_delta",
    "range_mph": "range_halfwidth_mph",
    "n_vehicles": "n_vehicles",
    "noise": "accel_noise_std",
}


def _num(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _num_list(text: str) -> list:
    return [_num(part) for part in text.split(",") if part != ""]


def _seeds(args, scenario) -> list[int]:
    if args.seed:
        return [int(s) for chunk in args.seed for s in chunk.split(",")]
    return list(scenario.seeds)


def _single_overrides(args) -> dict:
    """Run-command overrides: each axis flag carries exactly one value."""
    out = {}
    for flag, key in _AXIS_FLAGS.items():
        value = getattr(args, flag)
        if value is None:
            continue
        values = _num_list(value)
        if len(values) != 1:
            raise ScenarioError(
                f"--{flag.replace('_', '-')} takes one value here"
                " (lists are for sweep)")
        out[key] = values[0]
    return out


def _safe_name(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "-" for c in label)


def cmd_run(args) -> int:
    scenario = load_scenario(args.config)
    overrides = _single_overrides(args)
    if overrides:
        scenario = apply_overrides(scenario, **overrides)
    label = scenario.label or Path(args.config).stem
    scenario = replace(scenario, label=label)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    summaries = []
    for seed in _seeds(args, scenario):
        result = run_scenario(scenario, seed)
        log_path = out_dir / f"{_safe_name(label)}-seed{seed}.jsonl"
        write_log(log_path, result.header, result.records)
        summaries.append(result.summary)
        s = result.summary
        print(f"seed {seed}: mean speed {s.reward_mps:.4f} m/s,"
              f" wave fraction {s.wave_fraction:.3f},"
              f" collisions {s.collision_count} -> {log_path}")
    write_summary_csv(out_dir / "summary.csv", summaries, append=True)
    return 0


def _sweep_axes(args) -> list[tuple[str, list]]:
    axes = []
    for flag, key in _AXIS_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            axes.append((key, _num_list(value)))
    for item in args.set or []:
        key, _, values = item.partition("=")
        if key not in OVERRIDE_KEYS:
            raise ScenarioError(
                f"unknown sweep key {key!r}; valid: {', '.join(OVERRIDE_KEYS)}")
        if not values:
            raise ScenarioError(f"--set {key} needs =v1,v2,...")
        axes.append((key, _num_list(values)))
    return axes


def _point_label(point: dict) -> str:
    return ",".join(f"{k}={v}" for k, v in point.items())


def _done_keys(csv_path: Path) -> set[tuple[str, str]]:
    if not csv_path.exists():
        return set()
    with open(csv_path, newline="") as fh:
        return {(row["label"], row["seed"]) for row in csv.DictReader(fh)}


def _sweep_task(scenario, point: dict, seed: int):
    sc = apply_overrides(scenario, **point)
    sc = replace(sc, label=_point_label(point))
    return run_scenario(sc, seed).summary


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.config)
    axes = _sweep_axes(args)
    if not axes:
        raise ScenarioError("empty sweep grid: give at least one axis"
                            " (--delta/--range-mph/--n-vehicles/--noise/--set)")
    seeds = _seeds(args, scenario)
    csv_path = Path(args.out)
    csv_path.parent.mkdir(parents=True, exist_ok=True)

    keys = [k for k, _ in axes]
    points = [dict(zip(keys, combo))
              for combo in itertools.product(*(v for _, v in axes))]
    done = _done_keys(csv_path)
    todo = [(pt, seed) for pt in points for seed in seeds
            if (_point_label(pt), str(seed)) not in done]
    print(f"sweep: {len(points)} points x {len(seeds)} seeds,"
          f" {len(todo)} to run ({len(done)} already in {csv_path})")

    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {pool.submit(_sweep_task, scenario, pt, seed): (pt, seed)
                       for pt, seed in todo}
            for fut in concurrent.futures.as_completed(futures):
                _record_sweep_row(csv_path, fut.result())
    else:
        for pt, seed in todo:
            _record_sweep_row(csv_path, _sweep_task(scenario, pt, seed))
    return 0


def _record_sweep_row(csv_path: Path, summary) -> None:
    write_summary_csv(csv_path, [summary], append=True)
    print(f"{summary.meta.get('label')} seed {summary.meta.get('seed')}:"
          f" mean speed {summary.reward_mps:.4f} m/s,"
          f" wave fraction {summary.wave_fraction:.3f}")


def cmd_train(args) -> int:
    scenario = load_scenario(args.config)
    policy = scenario.make_policy()
    if policy is None:
        raise ScenarioError("scenario has no policy section to train")
    seeds = _seeds(args, scenario)
    cem = CemConfig(iterations=args.iterations, population=args.population,
                    elite_frac=args.elite_frac, init_sigma=args.init_sigma,
                    seed=args.train_seed)
    result = train_cem(policy, make_scenario_reward(scenario, seeds), cem)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_policy(out, result.policy, seed=args.train_seed)
    curve = Path(args.curve) if args.curve else out.with_suffix(".curve.csv")
    with open(curve, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=[
            "iteration", "best_reward", "elite_mean_reward", "mean_sigma"])
        writer.writeheader()
        writer.writerows(result.history)
    print(f"best reward {result.best_reward:.4f} m/s"
          f" over seeds {seeds} -> {out} (curve: {curve})")
    return 0


def cmd_replay(args) -> int:
    failures = 0
    for path in args.log:
        try:
            header, records = read_log(path)
            verdict = replay(header, records)
        except LogFormatError as exc:
            print(f"{path}: invalid log: {exc}")
            failures += 1
            continue
        if verdict.matched:
            print(f"{path}: match ({verdict.n_ticks} ticks)")
        else:
            print(f"{path}: DIVERGED at tick {verdict.divergence_tick}"
                  f" ({verdict.divergence_field})")
            failures += 1
    return 1 if failures else 0


def cmd_serve(args) -> int:
    config = load_session_config(args.config)
    port = args.port if args.port is not None else os.environ.get("RINGADVISOR_PORT")
    if port is not None:
        config = replace(config, port=int(port))
    log_dir = args.log_dir or os.environ.get("RINGADVISOR_LOG_DIR")
    if log_dir:
        config = replace(config, log_dir=Path(log_dir))

    async def main():
        ready = asyncio.get_running_loop().create_future()
        task = asyncio.create_task(run_session(config, ready))
        port = await ready
        print(f"listening on ws://{config.host}:{port}"
              f" ({len(config.segments)} segments)", flush=True)
        return await task

    try:
        summaries = asyncio.run(main())
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    for s in summaries:
        state = "completed" if s.completed else "incomplete"
        print(f"{s.meta.get('label')}: {state},"
              f" mean speed {s.reward_mps:.4f} m/s,"
              f" in-range fraction {s.in_range_fraction}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringadvisor",
        description="Ring-road advisory simulator: run, sweep, train,"
                    " replay, serve.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scenario_flags(p, listable: bool):
        hint = "comma list" if listable else "value"
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--seed", action="append", metavar="S[,S...]",
                       help="episode seed(s); overrides the scenario's list")
        p.add_argument("--delta", metavar="TICKS",
                       help=f"advice hold interval {hint}")
        p.add_argument("--range-mph", dest="range_mph", metavar="MPH",
                       help=f"advice range half-width {hint}, mph")
        p.add_argument("--n-vehicles", dest="n_vehicles", metavar="N",
                       help=f"ring population {hint}")
        p.add_argument("--noise", metavar="STD",
                       help=f"non-ego accel noise std {hint}, m/s^2")

    p_run = sub.add_parser("run", help="headless episodes, one per seed")
    add_scenario_flags(p_run, listable=False)
    p_run.add_argument("--out", default="runs", help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="Cartesian hyperparameter sweep")
    add_scenario_flags(p_sweep, listable=True)
    p_sweep.add_argument("--set", action="append", metavar="KEY=V1,V2",
                         help="extra axis over any override key"
                              f" ({', '.join(OVERRIDE_KEYS)})")
    p_sweep.add_argument("--out", default="sweep.csv", help="summary CSV path")
    p_sweep.add_argument("--jobs", type=int, default=1,
                         help="parallel worker processes")
    p_sweep.set_defaults(func=cmd_sweep)

    p_train = sub.add_parser("train", help="optimize the scenario's policy")
    p_train.add_argument("--config", required=True, help="scenario JSON file")
    p_train.add_argument("--seed", action="append", metavar="S[,S...]",
                         help="episode seed(s) averaged in the objective")
    p_train.add_argument("--out", required=True, help="output policy JSON")
    p_train.add_argument("--curve", help="reward curve CSV"
                                         " (default: <out>.curve.csv)")
    p_train.add_argument("--iterations", type=int, default=20)
    p_train.add_argument("--population", type=int, default=24)
    p_train.add_argument("--elite-frac", dest="elite_frac", type=float,
                         default=0.25)
    p_train.add_argument("--init-sigma", dest="init_sigma", type=float,
                         default=0.5)
    p_train.add_argument("--train-seed", dest="train_seed", type=int, default=0,
                         help="sampler seed (episode seeds are --seed)")
    p_train.set_defaults(func=cmd_train)

    p_replay = sub.add_parser("replay", help="verify logs replay bit-exactly")
    p_replay.add_argument("log", nargs="+", help="JSONL log file(s)")
    p_replay.set_defaults(func=cmd_replay)

    p_serve = sub.add_parser("serve", help="serve one live driving session")
    p_serve.add_argument("--config", required=True, help="session JSON file")
    p_serve.add_argument("--port", type=int,
                         help="override port (also: RINGADVISOR_PORT)")
    p_serve.add_argument("--log-dir", dest="log_dir",
                         help="override log dir (also: RINGADVISOR_LOG_DIR)")
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, SessionConfigError, PolicyFileError,
            LogFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
