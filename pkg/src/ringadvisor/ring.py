"""Single-lane ring road with IDM longitudinal dynamics and one command-driven ego.

State is kept gap-primary: per-vehicle speeds, bumper-to-bumper gaps to the
fixed leader (i+1) mod N, and the arc position of vehicle 0. Positions are
derived views. This makes the gap-sum invariant exact by construction and lets
a symmetric (uniform) state evolve symmetrically in float arithmetic, which a
position-array update does not guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

EGO_ID = 0
# floor for gap values fed to the IDM inside a step; real gaps may touch zero
GAP_EPS_M = 1e-3
# sub-ulp slack for the collision guard's overrun test (see step)
GUARD_EPS_M = 1e-12


class ConfigError(ValueError):
    pass


class JamDensityError(ValueError):
    """Equilibrium does not exist: equilibrium gap would not exceed s0."""


class PerturbationError(ValueError):
    """Requested spawn offset exceeds the available gap."""


class DegenerateGapError(ValueError):
    """IDM queried with a non-positive gap."""


@dataclass(frozen=True)
class IdmParams:
    """Intelligent Driver Model parameters (Treiber et al. form)."""

    v0: float = 30.0  # free-flow speed, m/s
    T: float = 1.0  # desired time headway, s
    a_max: float = 1.0  # max acceleration, m/s^2
    b_comf: float = 1.5  # comfortable braking, m/s^2
    delta: float = 4.0  # free-flow exponent
    s0: float = 2.0  # minimum standstill gap, m

    def __post_init__(self):
        for name in ("v0", "T", "a_max", "b_comf", "delta", "s0"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"IdmParams.{name} must be positive")


@dataclass(frozen=True)
class RingConfig:
    circumference_m: float = 250.0
    n_vehicles: int = 22
    vehicle_length_m: float = 5.0
    dt_s: float = 0.1
    horizon_steps: int = 8000
    warmup_steps: int = 1200
    accel_noise_std: float = 0.2  # m/s^2, applied to non-ego IDM accels
    seed: int = 1

    def __post_init__(self):
        if not self.circumference_m > 0:
            raise ConfigError("circumference_m must be positive")
        if self.n_vehicles < 1:
            raise ConfigError("n_vehicles must be >= 1")
        if self.vehicle_length_m < 0:
            raise ConfigError("vehicle_length_m must be >= 0")
        if self.n_vehicles * self.vehicle_length_m > self.circumference_m:
            raise ConfigError("vehicles do not fit on the ring")
        if not self.dt_s > 0:
            raise ConfigError("dt_s must be positive")
        if self.horizon_steps < 1:
            raise ConfigError("horizon_steps must be >= 1")
        if not 0 <= self.warmup_steps < self.horizon_steps:
            raise ConfigError("need 0 <= warmup_steps < horizon_steps")
        if self.accel_noise_std < 0:
            raise ConfigError("accel_noise_std must be >= 0")


DEFAULT_IDM = IdmParams()


@dataclass(frozen=True)
class VehicleState:
    id: int
    position_m: float
    speed_mps: float
    is_ego: bool


@dataclass(frozen=True)
class SimState:
    """Snapshot after `tick` completed steps. Arrays are read-only."""

    tick: int
    speeds: np.ndarray  # (N,) m/s
    gaps: np.ndarray  # (N,) m, gaps[i] is bumper-to-bumper to (i+1) % N
    anchor_m: float  # arc position of vehicle 0
    rng_state: dict  # PCG64 state to consume on the next step
    accels: np.ndarray  # (N,) commands applied in the step producing this state
    collision_events: int  # vehicles clamped by the guard in that step
    circumference_m: float
    vehicle_length_m: float

    def __post_init__(self):
        for arr in (self.speeds, self.gaps, self.accels):
            arr.setflags(write=False)

    @property
    def n_vehicles(self) -> int:
        return len(self.speeds)

    @property
    def positions(self) -> np.ndarray:
        """Arc positions in [0, C), derived from the anchor and gap chain."""
        spacing = self.gaps + self.vehicle_length_m
        pos = np.empty(self.n_vehicles)
        pos[0] = 0.0
        np.cumsum(spacing[:-1], out=pos[1:])
        return (pos + self.anchor_m) % self.circumference_m

    @property
    def vehicles(self) -> tuple[VehicleState, ...]:
        pos = self.positions
        return tuple(
            VehicleState(i, float(pos[i]), float(self.speeds[i]), i == EGO_ID)
            for i in range(self.n_vehicles)
        )

    @property
    def ego_speed(self) -> float:
        return float(self.speeds[EGO_ID])


def ring_gap(lead_position_m: float, follow_position_m: float,
             vehicle_length_m: float, circumference_m: float) -> float:
    """Bumper-to-bumper distance from follower to leader along the ring."""
    if not circumference_m > 0:
        raise ConfigError("circumference_m must be positive")
    if not 0 <= vehicle_length_m < circumference_m:
        raise ConfigError("need 0 <= vehicle_length_m < circumference_m")
    return (lead_position_m - follow_position_m - vehicle_length_m) % circumference_m


def idm_accel(idm: IdmParams, speed_mps, lead_speed_mps, gap_m):
    """IDM acceleration. Scalar in, float out; arrays broadcast elementwise.

    Raises DegenerateGapError for any non-positive gap; callers inside the
    stepper floor gaps at GAP_EPS_M first.
    """
    gap = np.asarray(gap_m, dtype=float)
    if np.any(gap <= 0):
        raise DegenerateGapError("idm_accel needs gap > 0")
    v = np.asarray(speed_mps, dtype=float)
    dv = v - np.asarray(lead_speed_mps, dtype=float)
    s_star = idm.s0 + np.maximum(
        0.0, v * idm.T + v * dv / (2.0 * math.sqrt(idm.a_max * idm.b_comf)))
    acc = idm.a_max * (1.0 - (v / idm.v0) ** idm.delta - (s_star / gap) ** 2)
    return acc if isinstance(speed_mps, np.ndarray) else float(acc)


def equilibrium_speed(idm: IdmParams, config: RingConfig) -> float:
    """Uniform-flow speed where IDM acceleration is exactly zero.

    Solves s0 + v*T = s_eq * sqrt(1 - (v/v0)^delta) on (0, v0) by bisection
    to an interval of 1e-10. s_eq is the uniform gap C/N - L.
    """
    s_eq = config.circumference_m / config.n_vehicles - config.vehicle_length_m
    if s_eq <= idm.s0:
        raise JamDensityError(
            f"uniform gap {s_eq:.3f} m does not exceed s0={idm.s0} m")

    def residual(v):
        return idm.s0 + v * idm.T - s_eq * math.sqrt(1.0 - (v / idm.v0) ** idm.delta)

    lo, hi = 0.0, idm.v0  # residual(0) < 0 by the jam check, residual(v0) > 0
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if residual(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class SpawnMode(str, Enum):
    EQUILIBRIUM = "equilibrium"
    REST = "rest"
    PERTURBED = "perturbed"


def spawn_ring(config: RingConfig, idm: IdmParams = DEFAULT_IDM,
               mode: SpawnMode = SpawnMode.EQUILIBRIUM,
               perturb_offset_m: float = 0.0) -> SimState:
    """Place N evenly spaced vehicles; vehicle 0 (the ego) sits at arc 0.

    EQUILIBRIUM and PERTURBED start every vehicle at the equilibrium speed;
    REST starts from standstill. PERTURBED additionally shifts the mid-ring
    vehicle forward by perturb_offset_m, seeding a gap asymmetry.
    """
    n = config.n_vehicles
    gap0 = config.circumference_m / n - config.vehicle_length_m
    gaps = np.full(n, gap0)
    if mode is SpawnMode.REST:
        speeds = np.zeros(n)
    else:
        speeds = np.full(n, equilibrium_speed(idm, config))
    if mode is SpawnMode.PERTURBED:
        k = n // 2
        if not 0 <= perturb_offset_m < gaps[k]:
            raise PerturbationError(
                f"offset {perturb_offset_m} m outside [0, {gaps[k]:.3f}) m")
        gaps[k] -= perturb_offset_m
        gaps[(k - 1) % n] += perturb_offset_m
    elif perturb_offset_m != 0.0:
        raise ConfigError("perturb_offset_m only applies to PERTURBED spawn")
    return SimState(
        tick=0,
        speeds=speeds,
        gaps=gaps,
        anchor_m=0.0,
        rng_state=np.random.PCG64(config.seed).state,
        accels=np.zeros(n),
        collision_events=0,
        circumference_m=config.circumference_m,
        vehicle_length_m=config.vehicle_length_m,
    )


def step(state: SimState, config: RingConfig, idm: IdmParams,
         ego_accel_cmd: float | None) -> SimState:
    """Advance one synchronous tick of dt_s.

    All accelerations are computed from the pre-step state, then committed
    together: v' = max(0, v + a*dt), gaps advance by the speed differences.
    Non-ego vehicles follow the IDM plus optional Gaussian accel noise drawn
    from the carried RNG state; the ego applies ego_accel_cmd verbatim
    (None means the ego also follows plain, noiseless IDM).

    A collision guard clamps any follower that would overrun its leader to
    the speed that zeroes the gap, iterating to a fixed point; clamped
    vehicles are counted in collision_events.
    """
    n = state.n_vehicles
    dt = config.dt_s
    speeds = state.speeds
    gaps = state.gaps

    lead_speeds = np.roll(speeds, -1)
    acc = idm_accel(idm, speeds, lead_speeds, np.maximum(gaps, GAP_EPS_M))
    acc = np.atleast_1d(np.asarray(acc, dtype=float))

    rng_state = state.rng_state
    if config.accel_noise_std > 0 and n > 1:
        bitgen = np.random.PCG64()
        bitgen.state = rng_state
        noise = np.random.Generator(bitgen).normal(0.0, config.accel_noise_std, n - 1)
        acc[1:] += noise
        rng_state = bitgen.state

    if ego_accel_cmd is not None:
        if not math.isfinite(ego_accel_cmd):
            raise ConfigError("ego_accel_cmd must be finite")
        acc[EGO_ID] = float(ego_accel_cmd)

    new_speeds = np.maximum(0.0, speeds + acc * dt)

    # Clamp followers that would overrun their leader this tick. Each pass can
    # only lower speeds, and a lowered follower only tightens the gap behind
    # it, so the chain settles in at most n passes. The tolerance absorbs the
    # ulp of rounding left by the clamp formula itself (gap - (gap/dt)*dt),
    # which would otherwise re-trigger the same vehicle forever.
    clamped = np.zeros(n, dtype=bool)
    for _ in range(n + 1):
        overrun = gaps + (np.roll(new_speeds, -1) - new_speeds) * dt < -GUARD_EPS_M
        if not overrun.any():
            break
        clamped |= overrun
        limit = np.roll(new_speeds, -1) + gaps / dt
        new_speeds = np.where(overrun, limit, new_speeds)
    else:
        raise RuntimeError("collision guard failed to reach a fixed point")

    new_gaps = gaps + (np.roll(new_speeds, -1) - new_speeds) * dt
    # the clamp formula leaves at most a few ulps of negative residue
    if new_gaps.min() < -1e-9:
        raise RuntimeError("collision guard left a negative gap")
    new_gaps = np.maximum(new_gaps, 0.0)

    return SimState(
        tick=state.tick + 1,
        speeds=new_speeds,
        gaps=new_gaps,
        anchor_m=(state.anchor_m + new_speeds[EGO_ID] * dt) % config.circumference_m,
        rng_state=rng_state,
        accels=acc,
        collision_events=int(clamped.sum()),
        circumference_m=config.circumference_m,
        vehicle_length_m=config.vehicle_length_m,
    )
