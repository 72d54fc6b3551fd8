"""Scenario files: one JSON document describing a reproducible experiment.

A scenario bundles ring + IDM parameters, spawn, an optional policy (inline
or by file reference), advice settings, a driver model, and the seed list.
Policies that depend on the ring (the equilibrium heuristic) are materialized
at run time so overrides like --n-vehicles rebind them correctly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .advisory import (
    AdviceMode,
    AdviceSettings,
    ConstantSpeedPolicy,
    EquilibriumHeuristicPolicy,
    Policy,
    PolicyFileError,
    load_policy,
    policy_from_doc,
)
from .drivers import DriverKind, DriverParams
from .episode import EpisodeResult, default_advice_settings, run_episode
from .ring import ConfigError, DEFAULT_IDM, IdmParams, RingConfig, SpawnMode
from .units import mph_to_mps


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    config: RingConfig
    idm: IdmParams
    spawn_mode: SpawnMode
    perturb_offset_m: float
    policy_doc: dict | None
    advice: AdviceSettings | None
    driver: DriverParams | None
    seeds: tuple
    label: str

    def make_policy(self) -> Policy | None:
        if self.policy_doc is None:
            return None
        return build_policy(self.policy_doc, self.config, self.idm)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, config=replace(self.config, seed=seed))


def build_policy(doc: dict, config: RingConfig, idm: IdmParams) -> Policy:
    """Materialize a policy sub-document against the ring it will advise."""
    if "file" in doc:
        policy, _ = load_policy(doc["file"])
        return policy
    if "weights" in doc:
        return policy_from_doc(doc)
    kind = doc.get("kind")
    if kind == "constant_speed":
        return ConstantSpeedPolicy(float(doc.get("speed_mps", 4.0)))
    if kind == "equilibrium_heuristic":
        return EquilibriumHeuristicPolicy.for_ring(
            idm, config, float(doc.get("margin_mps", 0.0)))
    raise ScenarioError(f"cannot build a policy from {doc!r}")


def _advice_settings(doc: dict, idm: IdmParams) -> AdviceSettings:
    if "range_halfwidth_mph" in doc and "range_halfwidth_mps" in doc:
        raise ScenarioError("give the advice range in mph or m/s, not both")
    if "range_halfwidth_mps" in doc:
        half = float(doc["range_halfwidth_mps"])
    else:
        half = mph_to_mps(float(doc.get("range_halfwidth_mph", 5.0)))
    try:
        return default_advice_settings(
            idm,
            mode=AdviceMode(doc.get("mode", "speed")),
            hold_delta=int(doc.get("hold_delta", 1)),
            range_halfwidth=half,
        )
    except ValueError as exc:
        raise ScenarioError(f"bad advice settings: {exc}") from exc


def scenario_from_doc(doc: dict, base_dir: Path | None = None) -> Scenario:
    base_dir = Path(base_dir) if base_dir else Path(".")
    try:
        ring_doc = dict(doc.get("ring", {}))
        idm_doc = dict(doc.get("idm", {}))
        config = RingConfig(**ring_doc)
        idm = IdmParams(**idm_doc)
    except (ConfigError, TypeError) as exc:
        raise ScenarioError(f"bad ring/idm section: {exc}") from exc

    spawn_doc = doc.get("spawn", {})
    try:
        spawn_mode = SpawnMode(spawn_doc.get("mode", "equilibrium"))
    except ValueError as exc:
        raise ScenarioError(f"unknown spawn mode: {exc}") from exc
    offset = float(spawn_doc.get("perturb_offset_m", 0.0))

    policy_doc = doc.get("policy")
    if policy_doc is not None:
        policy_doc = dict(policy_doc)
        if "file" in policy_doc:
            policy_doc["file"] = str((base_dir / policy_doc["file"]).resolve())
        # validate eagerly so errors point at the scenario, not the run
        try:
            build_policy(policy_doc, config, idm)
        except (PolicyFileError, OSError) as exc:
            raise ScenarioError(f"bad policy section: {exc}") from exc

    advice = _advice_settings(doc.get("advice") or {}, idm) \
        if policy_doc is not None else None

    driver_doc = doc.get("driver")
    driver = None
    if driver_doc is not None:
        try:
            driver = DriverParams(
                kind=DriverKind(driver_doc.get("kind", "perfect_compliance")),
                reaction_delay_steps=int(driver_doc.get("reaction_delay_steps", 0)),
                compliance_idm=idm,
            )
        except ValueError as exc:
            raise ScenarioError(f"bad driver section: {exc}") from exc

    seeds = tuple(int(s) for s in doc.get("seeds", [config.seed]))
    if not seeds:
        raise ScenarioError("seeds must be non-empty")

    return Scenario(
        config=config, idm=idm, spawn_mode=spawn_mode, perturb_offset_m=offset,
        policy_doc=policy_doc, advice=advice, driver=driver, seeds=seeds,
        label=str(doc.get("label", "")),
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON: {exc}") from exc
    return scenario_from_doc(doc, base_dir=path.parent)


OVERRIDE_KEYS = ("seed", "n_vehicles", "accel_noise_std", "horizon_steps",
                 "warmup_steps", "hold_delta", "range_halfwidth_mph",
                 "idm_v0", "idm_T", "idm_a_max", "idm_b_comf", "idm_delta",
                 "idm_s0")


def apply_overrides(scenario: Scenario, **overrides) -> Scenario:
    """Sweep-style overrides reaching into the nested configs."""
    unknown = set(overrides) - set(OVERRIDE_KEYS)
    if unknown:
        raise ScenarioError(f"unknown override keys: {sorted(unknown)}")
    ring_keys = {k: v for k, v in overrides.items()
                 if k in ("seed", "n_vehicles", "accel_noise_std",
                          "horizon_steps", "warmup_steps")}
    idm_keys = {k[4:]: float(v) for k, v in overrides.items()
                if k.startswith("idm_")}
    out = scenario
    if ring_keys:
        try:
            out = replace(out, config=replace(out.config, **ring_keys))
        except ConfigError as exc:
            raise ScenarioError(f"bad override: {exc}") from exc
    if idm_keys:
        try:
            idm = replace(out.idm, **idm_keys)
        except ConfigError as exc:
            raise ScenarioError(f"bad override: {exc}") from exc
        out = replace(out, idm=idm)
        if out.driver is not None:
            # the compliant-driver model follows the same car dynamics
            out = replace(out, driver=replace(out.driver, compliance_idm=idm))
    if out.advice is not None:
        adv = out.advice
        if "hold_delta" in overrides:
            adv = replace(adv, hold_delta=int(overrides["hold_delta"]))
        if "range_halfwidth_mph" in overrides:
            adv = replace(adv, range_halfwidth=mph_to_mps(
                float(overrides["range_halfwidth_mph"])))
        out = replace(out, advice=adv)
    elif overrides.keys() & {"hold_delta", "range_halfwidth_mph"}:
        raise ScenarioError("advice overrides need a policy in the scenario")
    return out


def run_scenario(scenario: Scenario, seed: int | None = None,
                 keep_records: bool = True) -> EpisodeResult:
    """One episode of the scenario, optionally under a different seed."""
    sc = scenario if seed is None else scenario.with_seed(seed)
    return run_episode(
        sc.config, sc.idm,
        policy=sc.make_policy(),
        advice_settings=sc.advice,
        driver=sc.driver,
        spawn_mode=sc.spawn_mode,
        perturb_offset_m=sc.perturb_offset_m,
        label=sc.label,
        keep_records=keep_records,
    )
