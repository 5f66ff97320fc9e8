from collections import deque

import numpy as np
import pytest

from hilab.toy_env import (
    NUM_ACTIONS,
    EnvState,
    RingWorld,
    RingWorldConfig,
    decode,
    encode,
    optimal_steps,
)

NOISELESS = RingWorldConfig(obs_noise=0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        RingWorldConfig(ring_size=8, goal=8)
    with pytest.raises(ValueError):
        RingWorldConfig(slip_prob=1.5)
    with pytest.raises(ValueError):
        RingWorldConfig(obs_noise=-0.1)


def test_reset_noiseless_observation():
    env = RingWorld(NOISELESS)
    state, obs = env.reset()
    assert state == EnvState(0, 0)
    np.testing.assert_allclose(obs, [1.0, 0.0], atol=1e-15)


def test_reset_determinism_and_noise_bound():
    cfg = RingWorldConfig(obs_noise=0.02, seed=5)
    _, obs1 = RingWorld(cfg).reset()
    _, obs2 = RingWorld(cfg).reset()
    np.testing.assert_array_equal(obs1, obs2)
    assert np.max(np.abs(obs1 - np.array([1.0, 0.0]))) <= 0.02 + 1e-12
    assert np.all(np.abs(obs1) <= 1.0)


def test_step_trig_example():
    env = RingWorld(NOISELESS)
    env.reset()
    state, result = env.step(1)
    assert state.position == 1
    np.testing.assert_allclose(result.obs, [np.cos(np.pi / 8), np.sin(np.pi / 8)], atol=1e-12)
    np.testing.assert_allclose(result.obs, [0.92388, 0.38268], atol=1e-5)
    assert result.reward == 0.0 and not result.terminated


def test_goal_transition():
    env = RingWorld(NOISELESS)
    env.reset()
    env.state = EnvState(position=7, steps_taken=0)
    _, result = env.step(1)
    assert result.reward == 1.0 and result.terminated and not result.truncated


def test_stay_action():
    env = RingWorld(NOISELESS)
    env.reset()
    state, result = env.step(0)
    assert state.position == 0 and result.reward == 0.0


def test_wraparound():
    env = RingWorld(NOISELESS)
    env.reset()
    state, _ = env.step(2)  # -1 from 0 wraps to M-1
    assert state.position == 15


def test_invalid_action():
    env = RingWorld(NOISELESS)
    env.reset()
    with pytest.raises(ValueError):
        env.step(3)


def test_observation_manifold():
    env = RingWorld(NOISELESS)
    for pos in range(16):
        obs = env._observe(pos)
        assert abs(obs @ obs - 1.0) < 1e-9


def test_truncation_at_step_limit():
    cfg = RingWorldConfig(goal=8, max_steps=10, obs_noise=0.0)
    env = RingWorld(cfg)
    env.reset()
    for step in range(10):
        _, result = env.step(0)  # stay forever
    assert result.truncated and not result.terminated
    assert env.state.steps_taken == 10


def test_slip_replaces_action_uniformly():
    cfg = RingWorldConfig(slip_prob=1.0, obs_noise=0.0, max_steps=10**9, goal=1, seed=3)
    env = RingWorld(cfg)
    env.reset()
    moves = {-1: 0, 0: 0, 1: 0}
    m = 30_000
    pos = 0
    for _ in range(m):
        env.state = EnvState(position=5, steps_taken=0)  # keep away from the goal
        state, _ = env.step(0)
        moves[(state.position - 5 + 8) % 16 - 8] += 1
    band = 3 * np.sqrt((1 / 3) * (2 / 3) / m)
    for count in moves.values():
        assert abs(count / m - 1 / 3) < band


def _bfs_min_steps(config: RingWorldConfig) -> int:
    # brute force over action sequences via breadth-first search
    seen = {0}
    frontier = deque([(0, 0)])
    while frontier:
        pos, depth = frontier.popleft()
        if pos == config.goal:
            return depth
        for move in (0, 1, -1):
            nxt = (pos + move) % config.ring_size
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, depth + 1))
    raise AssertionError("goal unreachable")


@pytest.mark.parametrize("goal,ring", [(8, 16), (3, 16), (12, 16), (1, 5), (4, 5)])
def test_optimal_steps_against_bfs(goal, ring):
    cfg = RingWorldConfig(ring_size=ring, goal=goal)
    assert optimal_steps(cfg) == _bfs_min_steps(cfg)


def test_default_optimal_return_yardstick():
    cfg = RingWorldConfig()
    k = optimal_steps(cfg)
    assert k == 8
    assert abs(0.99 ** (k - 1) - 0.9321) < 1e-4


def test_encode_decode_identity():
    x = np.array([0.25, -0.75])
    np.testing.assert_array_equal(encode(x), x)
    np.testing.assert_array_equal(decode(encode(x)), x)
    assert np.all(np.abs(encode(x)) <= 1.0)


def test_episode_determinism():
    cfg = RingWorldConfig(slip_prob=0.1, obs_noise=0.02, seed=9)
    def run():
        env = RingWorld(cfg)
        env.reset()
        trace = []
        for i in range(30):
            _, r = env.step(i % NUM_ACTIONS)
            trace.append((env.state.position, tuple(r.obs)))
        return trace
    assert run() == run()
