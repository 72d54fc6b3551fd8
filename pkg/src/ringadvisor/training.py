"""Cross-entropy method over policy parameter vectors.

Gaussian search distribution, elite refit, deterministic under a fixed seed.
Candidates whose reward comes back non-finite score -inf so a single blown-up
rollout cannot steer the elite set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .advisory import Policy


@dataclass(frozen=True)
class CemConfig:
    iterations: int = 20
    population: int = 24
    elite_frac: float = 0.25
    init_sigma: float = 0.5
    sigma_floor: float = 1e-3
    # decaying exploration noise added to the elite std; guards against the
    # distribution collapsing before it has marched to a distant optimum
    extra_noise: float = 0.25
    extra_noise_decay: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not 0 < self.elite_frac <= 1:
            raise ValueError("elite_frac must be in (0, 1]")
        if not self.init_sigma > 0:
            raise ValueError("init_sigma must be positive")
        if self.sigma_floor < 0:
            raise ValueError("sigma_floor must be >= 0")
        if self.extra_noise < 0:
            raise ValueError("extra_noise must be >= 0")
        if not 0 < self.extra_noise_decay <= 1:
            raise ValueError("extra_noise_decay must be in (0, 1]")

    @property
    def n_elite(self) -> int:
        return max(1, int(round(self.population * self.elite_frac)))


@dataclass(frozen=True)
class TrainResult:
    policy: Policy  # best candidate ever evaluated
    best_reward: float
    history: list = field(default_factory=list)
    evaluations: int = 0


def train_cem(policy: Policy, reward_fn, config: CemConfig = CemConfig()) -> TrainResult:
    """Optimize `policy`'s parameter vector against reward_fn(candidate)."""
    mu = np.asarray(policy.parameter_vector(), dtype=float)
    sigma = np.full(mu.shape, config.init_sigma)
    rng = np.random.default_rng(config.seed)

    best_reward = -math.inf
    best_params = mu.copy()
    history = []
    evaluations = 0

    for it in range(config.iterations):
        samples = rng.normal(mu, sigma, size=(config.population, len(mu)))
        rewards = np.empty(config.population)
        for i, row in enumerate(samples):
            r = float(reward_fn(policy.with_parameters(row)))
            rewards[i] = r if math.isfinite(r) else -math.inf
            evaluations += 1
            if rewards[i] > best_reward:
                best_reward = rewards[i]
                best_params = row.copy()
        order = np.argsort(rewards)[::-1]
        elite = samples[order[:config.n_elite]]
        mu = elite.mean(axis=0)
        anneal = config.extra_noise * config.extra_noise_decay ** it
        sigma = elite.std(axis=0) + anneal + config.sigma_floor
        history.append({
            "iteration": it,
            "best_reward": float(rewards.max()),
            "elite_mean_reward": float(rewards[order[:config.n_elite]].mean()),
            "mean_sigma": float(sigma.mean()),
        })

    return TrainResult(
        policy=policy.with_parameters(best_params),
        best_reward=best_reward,
        history=history,
        evaluations=evaluations,
    )


def make_scenario_reward(scenario, seeds=None):
    """Reward closure for train_cem: mean post-warmup speed across seeds.

    The candidate policy replaces whatever the scenario itself declares;
    everything else (ring, driver, advice cadence, spawn) is taken as-is.
    """
    from .episode import run_episode

    use = tuple(seeds) if seeds is not None else scenario.seeds

    def reward(policy: Policy) -> float:
        total = 0.0
        for s in use:
            sc = scenario.with_seed(s)
            res = run_episode(
                sc.config, sc.idm, policy=policy, advice_settings=sc.advice,
                driver=sc.driver, spawn_mode=sc.spawn_mode,
                perturb_offset_m=sc.perturb_offset_m, keep_records=False)
            total += res.reward_mps
        return total / len(use)

    return reward
