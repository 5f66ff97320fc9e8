"""Controlled studies: coupled-vs-naive action changes and generation
quality over schedule configurations.

Every unit of work (a distribution pair, a grid cell, a training seed)
derives its own random stream from (seed, experiment id, unit id), so
results are independent of execution order and safe to fan out across
processes.  Row lists come back sorted for byte-stable CSV output.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .agent_loop import AgentConfig, ReplayBuffer, load_buffer, models_from_checkpoint, run_training
from .checkpoint import load_params
from .imagination import rollout_with_actions
from .rng import STREAM_STUDY, make_rng
from .schedules import ScheduleSpec
from .stable_sampling import alpha_thresholds_batch, sample_naive_batch, sample_stable_batch

EXP_PAIRS = 1
EXP_INTERP = 2
EXP_GEN = 3

INTERP_ACTIONS = 10
INTERP_MOVE_STEPS = 8
INTERP_HOLD_STEPS = 8

DIRICHLET_SETTINGS = {"0.2": 0.2, "uniform": 1.0, "5": 5.0}


def sample_dirichlet(alpha: float, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Dirichlet(alpha, ..., alpha) via normalized gamma draws."""
    g = rng.gamma(alpha, 1.0, size=(size, n))
    total = g.sum(axis=-1, keepdims=True)
    while np.any(total <= 0):  # astronomically rare underflow at small alpha
        bad = total[:, 0] <= 0
        g[bad] = rng.gamma(alpha, 1.0, size=(int(bad.sum()), n))
        total = g.sum(axis=-1, keepdims=True)
    return g / total


def coupled_change_stats(
    p: np.ndarray, q: np.ndarray, draws: int, rng: np.random.Generator
) -> tuple[float, float, float]:
    """Monte Carlo change statistics for one (p, q) pair under shared
    (omega, perm) draws: (empirical change rate, exact total variation,
    mean threshold-difference upper bound over the sampled perms)."""
    n = p.size
    omegas = rng.random((draws, n - 1))
    perms = rng.permuted(np.tile(np.arange(n), (draws, 1)), axis=-1)
    a_p = sample_stable_batch(p, omegas, perms)
    a_q = sample_stable_batch(q, omegas, perms)
    rate = float((a_p != a_q).mean())
    tv = 0.5 * float(np.abs(p - q).sum())
    upper = float(
        np.abs(alpha_thresholds_batch(p, perms) - alpha_thresholds_batch(q, perms))
        .sum(axis=-1)
        .mean()
    )
    return rate, tv, upper


def _pairs_unit(args) -> tuple:
    seed, n, pair_id, draws, control = args
    rng = make_rng(seed, STREAM_STUDY, EXP_PAIRS, n, pair_id)
    p = sample_dirichlet(1.0, n, 1, rng)[0]
    q = p if control else sample_dirichlet(1.0, n, 1, rng)[0]
    rate, tv, upper = coupled_change_stats(p, q, draws, rng)
    rate_over_tv = rate / tv if tv > 0 else 0.0
    return (n, -1 if control else pair_id, tv, upper, rate, rate_over_tv)


def pairs_study(
    n_values: list[int],
    num_pairs: int,
    draws: int,
    seed: int,
    include_control: bool = False,
    threads: int = 1,
) -> list[tuple]:
    """Change-rate statistics for random uniform-Dirichlet pairs at each N.
    Rows: (n, pair_id, tv, upper, empirical_rate, rate_over_tv); control
    rows (p = q) carry pair_id -1."""
    units = []
    for n in n_values:
        if include_control:
            units.append((seed, n, num_pairs, draws, True))
        units.extend((seed, n, i, draws, False) for i in range(num_pairs))
    rows = _map_units(_pairs_unit, units, threads)
    return sorted(rows, key=lambda r: (r[0], r[1]))


def interpolation_change_counts(
    src: np.ndarray, tgt: np.ndarray, sims: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate the move-then-hold distribution sequence and count action
    changes per simulation for both sampling modes.

    The sequence starts at src, reaches tgt in INTERP_MOVE_STEPS linear
    steps, then stays at tgt for INTERP_HOLD_STEPS more: 17 distributions,
    16 change opportunities.  Returns (stable_counts, naive_counts), each
    (sims,).
    """
    n = src.size
    weights = np.linspace(0.0, 1.0, INTERP_MOVE_STEPS + 1)
    seq = [(1.0 - w) * src + w * tgt for w in weights]
    seq.extend([tgt] * INTERP_HOLD_STEPS)

    omegas = rng.random((sims, n - 1))
    perms = rng.permuted(np.tile(np.arange(n), (sims, 1)), axis=-1)
    stable = np.stack([sample_stable_batch(p, omegas, perms) for p in seq])
    naive = np.stack([sample_naive_batch(p, rng.random(sims)) for p in seq])
    return (stable[1:] != stable[:-1]).sum(axis=0), (naive[1:] != naive[:-1]).sum(axis=0)


def _interp_unit(args) -> list[tuple]:
    seed, setting, setting_idx, pair_id, sims = args
    rng = make_rng(seed, STREAM_STUDY, EXP_INTERP, setting_idx, pair_id)
    alpha = DIRICHLET_SETTINGS[setting]
    src = sample_dirichlet(alpha, INTERP_ACTIONS, 1, rng)[0]
    tgt = sample_dirichlet(alpha, INTERP_ACTIONS, 1, rng)[0]
    stable_counts, naive_counts = interpolation_change_counts(src, tgt, sims, rng)
    return [
        (setting, "stable", pair_id, float(stable_counts.mean()), float(stable_counts.std())),
        (setting, "naive", pair_id, float(naive_counts.mean()), float(naive_counts.std())),
    ]


def interp_study(
    settings: list[str], num_pairs: int, sims: int, seed: int, threads: int = 1
) -> list[tuple]:
    """Stable-vs-naive mean action changes along simulated denoising paths
    for each Dirichlet entropy setting.  Rows:
    (setting, mode, pair_id, mean_changes, std_changes)."""
    for s in settings:
        if s not in DIRICHLET_SETTINGS:
            raise ValueError(f"unknown entropy setting {s!r} (choose from {sorted(DIRICHLET_SETTINGS)})")
    units = [
        (seed, setting, list(DIRICHLET_SETTINGS).index(setting), i, sims)
        for setting in settings
        for i in range(num_pairs)
    ]
    nested = _map_units(_interp_unit, units, threads)
    rows = [row for group in nested for row in group]
    order = {name: i for i, name in enumerate(DIRICHLET_SETTINGS)}
    return sorted(rows, key=lambda r: (order[r[0]], r[1], r[2]))


def gen_quality_grid(nu_values: list[float], budget_values: list[int], horizon: int) -> list[tuple[float, int]]:
    """Valid (nu, budget) cells: nu=1 is restricted to whole multiples of the
    horizon (the autoregressive family); other nu values accept any budget."""
    cells = []
    for nu in nu_values:
        if nu > horizon:
            continue
        for budget in budget_values:
            if nu == 1 and (budget < horizon or budget % horizon != 0):
                continue
            cells.append((float(nu), int(budget)))
    return sorted(cells)


def _collect_gen_segments(buffer: ReplayBuffer, horizon: int, segments: int, rng: np.random.Generator):
    eligible = [
        (e, s)
        for e, ep in enumerate(buffer.episodes)
        for s in range(ep.num_frames - horizon)
    ]
    if not eligible:
        raise ValueError(f"no episode holds a {horizon + 1}-frame segment")
    picks = rng.integers(0, len(eligible), size=segments)
    d = buffer.episodes[0].obs.shape[1]
    context = np.empty((segments, 1, d))
    truth = np.empty((segments, horizon, d))
    actions = np.empty((segments, horizon), dtype=np.int64)
    for i, pick in enumerate(picks):
        e, s = eligible[pick]
        ep = buffer.episodes[e]
        context[i, 0] = ep.obs[s]
        truth[i] = ep.obs[s + 1 : s + 1 + horizon]
        actions[i] = ep.actions[s : s + horizon]
    noise = rng.uniform(-1.0, 1.0, size=(segments, horizon, d))
    return context, truth, actions, noise


def _gen_cell(args) -> tuple:
    nu, budget, horizon, checkpoint_path, context, truth, actions, noise = args
    models = models_from_checkpoint(load_params(checkpoint_path))
    spec = ScheduleSpec(horizon=horizon, budget=budget, nu=nu)
    final = rollout_with_actions(models.denoiser, spec, context, actions, noise)
    mse = float(((final[:, 1:] - truth) ** 2).mean())
    return (nu, budget, mse)


def gen_quality(
    checkpoint_path: str | Path,
    buffer_path: str | Path,
    nu_values: list[float],
    budget_values: list[int],
    segments: int,
    seed: int,
    horizon: int = 32,
    threads: int = 1,
) -> list[tuple]:
    """Latent MSE of schedule-driven continuations against recorded
    trajectories, conditioned on the recorded actions at every denoising
    step.  Rows: (nu, budget, mse); the same segments and initial noise are
    reused for every grid cell."""
    buffer = load_buffer(buffer_path)
    rng = make_rng(seed, STREAM_STUDY, EXP_GEN)
    context, truth, actions, noise = _collect_gen_segments(buffer, horizon, segments, rng)
    cells = gen_quality_grid(nu_values, budget_values, horizon)
    units = [
        (nu, budget, horizon, str(checkpoint_path), context, truth, actions, noise)
        for nu, budget in cells
    ]
    return sorted(_map_units(_gen_cell, units, threads))


def _train_unit(args) -> tuple[int, str]:
    config_dict, seed, out_dir = args
    config = dataclasses.replace(_config_from_dict(config_dict), seed=seed)
    result = run_training(config, Path(out_dir) / f"seed_{seed}")
    return seed, str(result.returns_path)


def _config_from_dict(d: dict) -> AgentConfig:
    from .toy_env import RingWorldConfig as _Env

    d = dict(d)
    env = d.pop("env")
    spec = d.pop("spec")
    return AgentConfig(env=_Env(**env), spec=ScheduleSpec(**spec), **d)


def train_seeds(config: AgentConfig, seeds: list[int], out_dir: str | Path, threads: int = 1) -> dict[int, str]:
    """Run the agent loop once per seed (optionally across processes);
    returns {seed: returns-curve path}."""
    config_dict = dataclasses.asdict(config)
    config_dict.pop("seed")
    units = [(config_dict, s, str(out_dir)) for s in seeds]
    results = _map_units(_train_unit, units, threads)
    return dict(results)


def _map_units(fn, units, threads: int):
    if threads <= 1 or len(units) <= 1:
        return [fn(u) for u in units]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, units, chunksize=1))
