"""Advisory policies and piecewise-constant advice scheduling.

A policy maps the ego observation to a scalar target (speed or acceleration).
`advise` refreshes the target only every `hold_delta` ticks and returns the
identical Advice object in between, so held advice is bit-stable by
construction. Advice carries a symmetric tolerance band; `in_range` is the
single authority for "is the driver complying right now".
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .ring import EGO_ID, IdmParams, RingConfig, SimState, equilibrium_speed
from .units import mph_to_mps

SPEED_CAP_FACTOR = 1.5  # speed advice clamps to [0, 1.5 * v0]
ACCEL_CMD_BOUND = 3.0  # m/s^2, accel advice clamps to +/- this

POLICY_FILE_FORMAT = "ringadvisor-policy"
POLICY_FILE_VERSION = 1


class MissingAdviceError(ValueError):
    """advise() asked to hold with no previous advice to hold."""


class PolicyFileError(ValueError):
    pass


@dataclass(frozen=True)
class Observation:
    """What the advisory (and a compliant driver) sees: ego-local, SI units."""

    ego_speed_mps: float
    lead_speed_mps: float
    lead_gap_m: float
    circumference_m: float


def observe(state: SimState) -> Observation:
    """Ego observation of the given state. The ego's leader is vehicle 1."""
    lead = (EGO_ID + 1) % state.n_vehicles
    return Observation(
        ego_speed_mps=float(state.speeds[EGO_ID]),
        lead_speed_mps=float(state.speeds[lead]),
        lead_gap_m=float(state.gaps[EGO_ID]),
        circumference_m=state.circumference_m,
    )


class AdviceMode(str, Enum):
    SPEED = "speed"
    ACCEL = "accel"


@dataclass(frozen=True)
class Advice:
    """One piecewise-constant advisory segment.

    target and range_halfwidth are m/s in SPEED mode, m/s^2 in ACCEL mode.
    """

    mode: AdviceMode
    target: float
    range_halfwidth: float
    issued_tick: int
    hold_delta: int

    def to_doc(self) -> dict:
        return {
            "mode": self.mode.value,
            "target": self.target,
            "range_halfwidth": self.range_halfwidth,
            "issued_tick": self.issued_tick,
            "hold_delta": self.hold_delta,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Advice":
        return cls(
            mode=AdviceMode(doc["mode"]),
            target=float(doc["target"]),
            range_halfwidth=float(doc["range_halfwidth"]),
            issued_tick=int(doc["issued_tick"]),
            hold_delta=int(doc["hold_delta"]),
        )


@dataclass(frozen=True)
class AdviceSettings:
    mode: AdviceMode = AdviceMode.SPEED
    hold_delta: int = 1  # ticks between fresh policy evaluations
    range_halfwidth: float = mph_to_mps(5.0)  # advice-mode units
    speed_cap_mps: float = SPEED_CAP_FACTOR * 30.0
    accel_bound: float = ACCEL_CMD_BOUND

    def __post_init__(self):
        if self.hold_delta < 1:
            raise ValueError("hold_delta must be >= 1")
        if self.range_halfwidth < 0:
            raise ValueError("range_halfwidth must be >= 0")
        if not self.speed_cap_mps > 0 or not self.accel_bound > 0:
            raise ValueError("advice clamps must be positive")


def advise(policy: "Policy", obs: Observation, tick: int,
           settings: AdviceSettings, prev: Advice | None = None) -> Advice:
    """Fresh advice on refresh ticks (tick % hold_delta == 0), else `prev`.

    Held advice is returned as the same object, so the target is bit-identical
    across the hold window. Raises MissingAdviceError when asked to hold
    without a previous advice.
    """
    if tick % settings.hold_delta != 0:
        if prev is None:
            raise MissingAdviceError(f"no advice to hold at tick {tick}")
        return prev
    raw = float(policy.evaluate(obs))
    if not math.isfinite(raw):
        raise ValueError(f"policy produced non-finite target {raw!r}")
    if settings.mode is AdviceMode.SPEED:
        target = min(max(raw, 0.0), settings.speed_cap_mps)
    else:
        target = min(max(raw, -settings.accel_bound), settings.accel_bound)
    return Advice(
        mode=settings.mode,
        target=target,
        range_halfwidth=settings.range_halfwidth,
        issued_tick=tick,
        hold_delta=settings.hold_delta,
    )


def in_range(advice: Advice, measurement: float) -> bool:
    """Inclusive band check in the advice's own units."""
    return abs(measurement - advice.target) <= advice.range_halfwidth


def accel_to_speed_advice(advice: Advice, ego_speed_mps: float,
                          delta: int, dt_s: float) -> Advice:
    """Integrate an accel advice over its hold window into a speed advice.

    The band halfwidth scales by the same delta*dt factor, keeping the
    compliance region consistent between the two renderings.
    """
    if advice.mode is not AdviceMode.ACCEL:
        raise ValueError("advice is not in accel mode")
    scale = delta * dt_s
    return replace(
        advice,
        mode=AdviceMode.SPEED,
        target=max(0.0, ego_speed_mps + advice.target * scale),
        range_halfwidth=advice.range_halfwidth * scale,
    )


def episode_reward(mean_speed_trace, warmup_steps: int) -> float:
    """Post-warmup average of the per-tick mean speeds."""
    trace = np.asarray(mean_speed_trace, dtype=float)
    if len(trace) <= warmup_steps:
        raise ValueError("trace does not extend past the warmup")
    return float(trace[warmup_steps:].mean())


@dataclass(frozen=True)
class ObservationScaling:
    """Divisors that bring the observation to O(1) for learned policies."""

    speed_scale_mps: float = 30.0
    gap_scale_m: float = 250.0

    def normalize(self, obs: Observation) -> np.ndarray:
        return np.array([
            obs.ego_speed_mps / self.speed_scale_mps,
            obs.lead_speed_mps / self.speed_scale_mps,
            obs.lead_gap_m / self.gap_scale_m,
            obs.circumference_m / self.gap_scale_m,
        ])

    def to_doc(self) -> dict:
        return {"speed_scale_mps": self.speed_scale_mps,
                "gap_scale_m": self.gap_scale_m}

    @classmethod
    def from_doc(cls, doc: dict) -> "ObservationScaling":
        return cls(float(doc["speed_scale_mps"]), float(doc["gap_scale_m"]))


class Policy:
    """Maps an Observation to a scalar target in the advice-mode units."""

    kind = "abstract"

    def evaluate(self, obs: Observation) -> float:
        raise NotImplementedError

    def parameter_vector(self) -> np.ndarray:
        raise NotImplementedError

    def with_parameters(self, vec) -> "Policy":
        raise NotImplementedError

    def _check_length(self, vec) -> np.ndarray:
        vec = np.asarray(vec, dtype=float)
        want = len(self.parameter_vector())
        if vec.shape != (want,):
            raise ValueError(f"expected {want} parameters, got shape {vec.shape}")
        return vec


@dataclass(frozen=True)
class ConstantSpeedPolicy(Policy):
    speed_mps: float = 4.0

    kind = "constant_speed"

    def evaluate(self, obs: Observation) -> float:
        return self.speed_mps

    def parameter_vector(self) -> np.ndarray:
        return np.array([self.speed_mps])

    def with_parameters(self, vec) -> "ConstantSpeedPolicy":
        vec = self._check_length(vec)
        return ConstantSpeedPolicy(float(vec[0]))


@dataclass(frozen=True)
class EquilibriumHeuristicPolicy(Policy):
    """Advise the ring's uniform-flow speed minus a safety margin."""

    equilibrium_speed_mps: float
    margin_mps: float = 0.0

    kind = "equilibrium_heuristic"

    @classmethod
    def for_ring(cls, idm: IdmParams, config: RingConfig,
                 margin_mps: float = 0.0) -> "EquilibriumHeuristicPolicy":
        return cls(equilibrium_speed(idm, config), margin_mps)

    def evaluate(self, obs: Observation) -> float:
        return max(0.0, self.equilibrium_speed_mps - self.margin_mps)

    def parameter_vector(self) -> np.ndarray:
        return np.array([self.margin_mps])

    def with_parameters(self, vec) -> "EquilibriumHeuristicPolicy":
        vec = self._check_length(vec)
        return EquilibriumHeuristicPolicy(self.equilibrium_speed_mps, float(vec[0]))


@dataclass(frozen=True)
class LinearPolicy(Policy):
    """Affine map on the normalized observation: w . obs_n + b."""

    weights: tuple  # 4 gains then the bias
    scaling: ObservationScaling = ObservationScaling()

    kind = "linear"

    def __post_init__(self):
        if len(self.weights) != 5:
            raise ValueError("LinearPolicy needs 4 gains plus a bias")

    def evaluate(self, obs: Observation) -> float:
        w = np.asarray(self.weights)
        return float(w[:4] @ self.scaling.normalize(obs) + w[4])

    def parameter_vector(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def with_parameters(self, vec) -> "LinearPolicy":
        vec = self._check_length(vec)
        return LinearPolicy(tuple(vec), self.scaling)


def mlp_weight_count(layer_sizes) -> int:
    return sum((m + 1) * n for m, n in zip(layer_sizes[:-1], layer_sizes[1:]))


@dataclass(frozen=True)
class MlpPolicy(Policy):
    """Small tanh MLP from the normalized observation to a scalar target."""

    layer_sizes: tuple  # e.g. (4, 8, 1); first must be 4, last 1
    weights: tuple  # flat, layer by layer, each as (in*out weights, out biases)
    scaling: ObservationScaling = ObservationScaling()

    kind = "mlp"

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or self.layer_sizes[0] != 4 or self.layer_sizes[-1] != 1:
            raise ValueError("layer_sizes must run from 4 inputs to 1 output")
        if len(self.weights) != mlp_weight_count(self.layer_sizes):
            raise ValueError(
                f"shape {self.layer_sizes} needs {mlp_weight_count(self.layer_sizes)}"
                f" weights, got {len(self.weights)}")

    def evaluate(self, obs: Observation) -> float:
        x = self.scaling.normalize(obs)
        flat = np.asarray(self.weights)
        pos = 0
        sizes = self.layer_sizes
        for li, (m, n) in enumerate(zip(sizes[:-1], sizes[1:])):
            w = flat[pos:pos + m * n].reshape(m, n)
            pos += m * n
            b = flat[pos:pos + n]
            pos += n
            x = x @ w + b
            if li < len(sizes) - 2:
                x = np.tanh(x)
        return float(x[0])

    def parameter_vector(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def with_parameters(self, vec) -> "MlpPolicy":
        vec = self._check_length(vec)
        return MlpPolicy(self.layer_sizes, tuple(vec), self.scaling)


def _policy_shape(policy: Policy) -> list:
    if isinstance(policy, MlpPolicy):
        return list(policy.layer_sizes)
    if isinstance(policy, LinearPolicy):
        return [4, 1]
    return []


def policy_to_doc(policy: Policy, *, seed: int | None = None,
                  trained_at: str | None = None) -> dict:
    scaling = getattr(policy, "scaling", None)
    return {
        "format": POLICY_FILE_FORMAT,
        "version": POLICY_FILE_VERSION,
        "kind": policy.kind,
        "shape": _policy_shape(policy),
        "weights": [float(w) for w in _raw_weights(policy)],
        "normalization": scaling.to_doc() if scaling is not None else None,
        "seed": seed,
        "trained_at": trained_at,
    }


def _raw_weights(policy: Policy):
    if isinstance(policy, ConstantSpeedPolicy):
        return [policy.speed_mps]
    if isinstance(policy, EquilibriumHeuristicPolicy):
        return [policy.equilibrium_speed_mps, policy.margin_mps]
    return list(policy.parameter_vector())


def policy_from_doc(doc: dict) -> Policy:
    try:
        kind = doc["kind"]
        shape = list(doc["shape"])
        weights = [float(w) for w in doc["weights"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise PolicyFileError(f"malformed policy document: {exc}") from exc
    if doc.get("format") not in (None, POLICY_FILE_FORMAT):
        raise PolicyFileError(f"not a policy file: format={doc.get('format')!r}")
    if any(not math.isfinite(w) for w in weights):
        raise PolicyFileError("policy weights must be finite")
    norm = doc.get("normalization")
    scaling = ObservationScaling.from_doc(norm) if norm else ObservationScaling()

    def need(n):
        if len(weights) != n:
            raise PolicyFileError(
                f"kind {kind!r} with shape {shape} needs {n} weights, got {len(weights)}")

    if kind == "constant_speed":
        need(1)
        return ConstantSpeedPolicy(weights[0])
    if kind == "equilibrium_heuristic":
        need(2)
        return EquilibriumHeuristicPolicy(weights[0], weights[1])
    if kind == "linear":
        if shape != [4, 1]:
            raise PolicyFileError(f"linear policy shape must be [4, 1], got {shape}")
        need(5)
        return LinearPolicy(tuple(weights), scaling)
    if kind == "mlp":
        if len(shape) < 2 or shape[0] != 4 or shape[-1] != 1:
            raise PolicyFileError(f"mlp shape must run 4 -> 1, got {shape}")
        need(mlp_weight_count(shape))
        return MlpPolicy(tuple(shape), tuple(weights), scaling)
    raise PolicyFileError(f"unknown policy kind {kind!r}")


def save_policy(path, policy: Policy, *, seed: int | None = None,
                trained_at: str | None = None) -> dict:
    stamp = trained_at or _dt.datetime.now(_dt.timezone.utc).isoformat()
    doc = policy_to_doc(policy, seed=seed, trained_at=stamp)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    return doc


def load_policy(path) -> tuple[Policy, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise PolicyFileError(f"{path}: not valid JSON: {exc}") from exc
    return policy_from_doc(doc), doc
