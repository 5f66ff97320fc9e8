"""Ring-world: a toy POMDP with discrete actions and bounded 2-d observations.

The agent sits on a ring of M cells and observes the cell angle as
(cos, sin) plus bounded uniform noise, clipped to [-1, 1].  Reward 1 and
termination on reaching the goal cell; truncation at the step limit.  The
observation doubles as the latent (identity tokenizer), so world-model
rollout error is directly measurable as latent MSE on a smooth manifold,
and the shortest-path optimum is known in closed form.

Actions: 0 = stay, 1 = step +1, 2 = step -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import STREAM_ENV, make_rng

NUM_ACTIONS = 3
OBS_DIM = 2
_MOVES = (0, 1, -1)


@dataclass(frozen=True)
class RingWorldConfig:
    ring_size: int = 16
    goal: int = 8
    slip_prob: float = 0.0
    obs_noise: float = 0.02
    max_steps: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.ring_size < 1 or not (0 <= self.goal < self.ring_size):
            raise ValueError("goal must lie in [0, ring_size)")
        if not (0.0 <= self.slip_prob <= 1.0):
            raise ValueError("slip_prob must lie in [0, 1]")
        if self.obs_noise < 0 or self.max_steps < 1:
            raise ValueError("obs_noise must be >= 0 and max_steps >= 1")


@dataclass(frozen=True)
class EnvState:
    position: int
    steps_taken: int


@dataclass(frozen=True)
class StepResult:
    obs: np.ndarray
    reward: float
    terminated: bool
    truncated: bool


def encode(obs: np.ndarray) -> np.ndarray:
    """Identity tokenizer: observations already live in the latent box."""
    return np.asarray(obs, dtype=np.float64)


def decode(latent: np.ndarray) -> np.ndarray:
    return np.asarray(latent, dtype=np.float64)


class RingWorld:
    """Single-threaded environment instance; all randomness from the config seed."""

    def __init__(self, config: RingWorldConfig):
        self.config = config
        self._rng = make_rng(config.seed, STREAM_ENV)
        self.state = EnvState(position=0, steps_taken=0)

    def reset(self, seed: int | None = None) -> tuple[EnvState, np.ndarray]:
        if seed is not None:
            self._rng = make_rng(seed, STREAM_ENV)
        self.state = EnvState(position=0, steps_taken=0)
        return self.state, self._observe(0)

    def step(self, action: int) -> tuple[EnvState, StepResult]:
        if action not in (0, 1, 2):
            raise ValueError(f"invalid action {action}")
        cfg = self.config
        if cfg.slip_prob > 0 and self._rng.random() < cfg.slip_prob:
            action = int(self._rng.integers(NUM_ACTIONS))
        pos = (self.state.position + _MOVES[action]) % cfg.ring_size
        steps = self.state.steps_taken + 1
        self.state = EnvState(position=pos, steps_taken=steps)
        terminated = pos == cfg.goal
        result = StepResult(
            obs=self._observe(pos),
            reward=1.0 if terminated else 0.0,
            terminated=terminated,
            truncated=not terminated and steps >= cfg.max_steps,
        )
        return self.state, result

    def _observe(self, position: int) -> np.ndarray:
        angle = 2.0 * np.pi * position / self.config.ring_size
        obs = np.array([np.cos(angle), np.sin(angle)])
        if self.config.obs_noise > 0:
            obs = obs + self._rng.uniform(-self.config.obs_noise, self.config.obs_noise, size=OBS_DIM)
        return np.clip(obs, -1.0, 1.0)


def optimal_steps(config: RingWorldConfig) -> int:
    """Shortest number of moves from the reset cell to the goal."""
    return min(config.goal, config.ring_size - config.goal)
