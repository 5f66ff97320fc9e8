"""Online training loop: collect, fit the world model, train the controller
in imagination.

Each epoch interleaves environment interaction (actions sampled from the
policy on clean real observations), denoiser and reward-termination updates
on replay segments, and actor-critic updates on imagined rollouts, with the
world model starting before the actor-critic.  Replay segments mix uniform
draws with a recency-weighted branch.  Everything is deterministic given
the root seed.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .actor_critic import (
    ENTROPY_WEIGHT,
    GAMMA,
    LAMBDA,
    AdvantageScaler,
    CriticModel,
    GreedyPolicy,
    PolicyModel,
    actor_loss,
    advantages,
    critic_loss,
    lambda_returns,
)
from .checkpoint import save_params
from .flow_model import (
    Denoiser,
    RewardTermModel,
    TrainBatch,
    reward_term_loss,
    sample_times_with_prefix,
    train_step,
)
from .imagination import ImaginationConfig, horizon_imagine
from .nets import AdamW
from .reporting import write_csv
from .rng import make_rng
from .schedules import ScheduleSpec
from .stable_sampling import sample_naive_batch
from .toy_env import NUM_ACTIONS, OBS_DIM, RingWorld, RingWorldConfig, encode

UNIFORM_FRACTION = 0.7
RECENCY_BETA = (3.0, 1.0)
CHECKPOINTS_KEPT = 3


@dataclass
class Episode:
    """One completed environment episode: T steps give T+1 frames."""

    obs: np.ndarray  # (T+1, d)
    actions: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,)
    terms: np.ndarray  # (T,) bool, termination flag of each transition
    truncated: bool

    @property
    def num_frames(self) -> int:
        return self.obs.shape[0]


class ReplayBuffer:
    """Ordered store of completed episodes; segments never cross an episode
    boundary."""

    def __init__(self):
        self.episodes: list[Episode] = []
        self._starts: dict[int, list[tuple[int, int]]] = {}

    def add_episode(self, episode: Episode) -> None:
        self.episodes.append(episode)

    def num_frames(self) -> int:
        return sum(ep.num_frames for ep in self.episodes)

    def segment_starts(self, horizon: int) -> list[tuple[int, int]]:
        """All (episode, offset) pairs a length-`horizon` segment may start
        at, in insertion order.  Episodes shorter than the horizon get a
        single padded start."""
        cache = self._starts.setdefault(horizon, [])
        done = cache[-1][0] + 1 if cache else 0
        for e in range(done, len(self.episodes)):
            n = self.episodes[e].num_frames
            for s in range(max(n - horizon, 0) + 1):
                cache.append((e, s))
        return cache


@dataclass
class SegmentBatch:
    """Replay segments assembled for world-model training."""

    z1: np.ndarray  # (B, H, d) clean latents
    incoming_actions: np.ndarray  # (B, H), padding action at index 0
    rewards: np.ndarray  # (B, H), transition into each frame (0 at index 0)
    terms: np.ndarray  # (B, H)
    frame_valid: np.ndarray  # (B, H) false on frames padded past episode end
    target_valid: np.ndarray  # (B, H) frame_valid minus the first frame


def sample_segments(
    buffer: ReplayBuffer, batch: int, horizon: int, rng: np.random.Generator, pad_action: int
) -> SegmentBatch:
    """Draw segment starts with the 70/30 uniform/recency mixture and cut
    fixed-length segments, right-padding with the terminal frame where an
    episode is shorter than the horizon."""
    starts = buffer.segment_starts(horizon)
    if not starts:
        raise ValueError("replay buffer holds no segments")
    n = len(starts)
    take_uniform = rng.random(batch) < UNIFORM_FRACTION
    uniform_idx = rng.integers(0, n, size=batch)
    recency_idx = np.minimum((rng.beta(*RECENCY_BETA, size=batch) * n).astype(np.int64), n - 1)
    chosen = np.where(take_uniform, uniform_idx, recency_idx)

    d = buffer.episodes[0].obs.shape[1]
    z1 = np.zeros((batch, horizon, d))
    incoming = np.full((batch, horizon), pad_action, dtype=np.int64)
    rewards = np.zeros((batch, horizon))
    terms = np.zeros((batch, horizon))
    frame_valid = np.zeros((batch, horizon), dtype=bool)
    for i, start_idx in enumerate(chosen):
        e, s = starts[start_idx]
        ep = buffer.episodes[e]
        avail = min(horizon, ep.num_frames - s)
        z1[i, :avail] = ep.obs[s : s + avail]
        z1[i, avail:] = ep.obs[s + avail - 1]  # terminal repeat, masked below
        lo, hi = s, s + avail - 1  # transitions into frames s+1..s+avail-1
        incoming[i, 1:avail] = ep.actions[lo:hi]
        rewards[i, 1:avail] = ep.rewards[lo:hi]
        terms[i, 1:avail] = ep.terms[lo:hi]
        frame_valid[i, :avail] = True
    target_valid = frame_valid.copy()
    target_valid[:, 0] = False
    return SegmentBatch(z1, incoming, rewards, terms, frame_valid, target_valid)


@dataclass(frozen=True)
class AgentConfig:
    env: RingWorldConfig = field(default_factory=RingWorldConfig)
    spec: ScheduleSpec = field(default_factory=lambda: ScheduleSpec(horizon=32, budget=16, nu=4.0))
    mode: str = "stable"
    epochs: int = 60
    collect_steps: int = 100
    wm_steps: int = 100
    rt_steps: int = 100
    ac_steps: int = 25
    wm_warmup_epochs: int = 2
    ac_warmup_epochs: int = 5
    batch_size: int = 8
    imagination_batch: int = 16
    imag_context: int = 1
    window: int = 4
    hidden: int = 128
    lr: float = 2e-4
    gamma: float = GAMMA
    lam: float = LAMBDA
    eta: float = ENTROPY_WEIGHT
    seed: int = 0

    def __post_init__(self):
        if self.wm_warmup_epochs > self.ac_warmup_epochs:
            raise ValueError("world model must start training before the actor-critic")

    def flat(self) -> dict:
        out = {}
        for key, value in dataclasses.asdict(self).items():
            if isinstance(value, dict):
                out.update({f"{key}.{k}": v for k, v in value.items()})
            else:
                out[key] = value
        return out


@dataclass
class AgentModels:
    denoiser: Denoiser
    reward_term: RewardTermModel
    policy: PolicyModel
    critic: CriticModel

    def named_params(self) -> dict[str, np.ndarray]:
        arch = [
            self.denoiser.latent_dim,
            self.denoiser.num_actions,
            self.denoiser.window,
            self.denoiser.mlp.layer_sizes[1],
        ]
        out = {"meta/arch": np.asarray(arch, dtype=np.float64)}
        out.update(self.denoiser.mlp.named_params("denoiser"))
        out.update(self.reward_term.mlp.named_params("reward_term"))
        out.update(self.policy.mlp.named_params("policy"))
        out.update(self.critic.mlp.named_params("critic"))
        return out

    def load_named_params(self, params: dict[str, np.ndarray]) -> None:
        self.denoiser.mlp.load_named_params("denoiser", params)
        self.reward_term.mlp.load_named_params("reward_term", params)
        self.policy.mlp.load_named_params("policy", params)
        self.critic.mlp.load_named_params("critic", params)


def models_from_checkpoint(params: dict[str, np.ndarray]) -> AgentModels:
    """Rebuild all four models from a saved parameter dictionary."""
    latent_dim, num_actions, window, hidden = (int(v) for v in params["meta/arch"])
    init = make_rng(0, rngmod.STREAM_INIT)
    models = AgentModels(
        denoiser=Denoiser(latent_dim, num_actions, window, hidden, init),
        reward_term=RewardTermModel(latent_dim, window, hidden, init),
        policy=PolicyModel(latent_dim, num_actions, window, hidden, init),
        critic=CriticModel(latent_dim, window, hidden, init),
    )
    models.load_named_params(params)
    return models


def build_models(config: AgentConfig) -> AgentModels:
    seed = config.seed
    return AgentModels(
        denoiser=Denoiser(
            OBS_DIM, NUM_ACTIONS, config.window, config.hidden,
            make_rng(seed, rngmod.STREAM_INIT, 0),
        ),
        reward_term=RewardTermModel(
            OBS_DIM, config.window, config.hidden, make_rng(seed, rngmod.STREAM_INIT, 1)
        ),
        policy=PolicyModel(
            OBS_DIM, NUM_ACTIONS, config.window, config.hidden,
            make_rng(seed, rngmod.STREAM_INIT, 2), zero_head=True,
        ),
        critic=CriticModel(
            OBS_DIM, config.window, config.hidden,
            make_rng(seed, rngmod.STREAM_INIT, 3), zero_head=True,
        ),
    )


def policy_action(policy: PolicyModel, obs_history: list[np.ndarray], rng: np.random.Generator) -> int:
    """Sample an action from the policy on the last window of clean real
    observations (plain draw; coupling is an imagination-time device)."""
    recent = obs_history[-policy.window :]
    z = np.stack(recent)[None]
    tau = np.ones((1, len(recent)))
    dist = policy.distributions(z, tau)[0, -1]
    return int(sample_naive_batch(dist, rng.random()))


def controller_update(
    models: AgentModels,
    policy_opt: AdamW,
    critic_opt: AdamW,
    imag_config: ImaginationConfig,
    context_z: np.ndarray,
    scaler: AdvantageScaler,
    rng: np.random.Generator,
    gamma: float = GAMMA,
    lam: float = LAMBDA,
    eta: float = ENTROPY_WEIGHT,
) -> dict:
    """One actor-critic update on a fresh imagined batch; returns metrics."""
    rollout = horizon_imagine(
        models.denoiser, models.policy, models.reward_term, imag_config, context_z, rng=rng
    )
    k = imag_config.context
    h = imag_config.spec.horizon
    bsz = imag_config.batch_size

    values = models.critic.values(rollout.latents, np.ones((bsz, k + h)))[:, k:]
    r_seq = np.concatenate([rollout.rewards[:, k + 1 :], np.zeros((bsz, 1))], axis=1)
    d_seq = np.concatenate([rollout.term_probs[:, k + 1 :], np.zeros((bsz, 1))], axis=1)
    returns = lambda_returns(r_seq, d_seq, values, gamma, lam)

    adv = advantages(returns, values, scaler)
    a_loss, a_grads, mean_entropy = actor_loss(models.policy, rollout, adv[:, : h - 1], eta)
    policy_opt.step(models.policy.mlp.param_list(), a_grads)
    c_loss, c_grads = critic_loss(models.critic, rollout.latents, returns, slice(k, None))
    critic_opt.step(models.critic.mlp.param_list(), c_grads)
    return {
        "actor_loss": a_loss,
        "critic_loss": c_loss,
        "entropy": mean_entropy,
        "ema_s": scaler.ema_s,
        "mean_imagined_return": float(returns[:, 0].mean()),
    }


@dataclass
class TrainingResult:
    checkpoint_path: Path
    buffer_path: Path
    metrics_path: Path
    returns_path: Path
    final_mean_return: float


def _wm_batch(seg: SegmentBatch, horizon: int, rng: np.random.Generator) -> TrainBatch:
    bsz = seg.z1.shape[0]
    z0 = rng.uniform(-1.0, 1.0, size=seg.z1.shape)
    tau = np.stack([sample_times_with_prefix(horizon, rng) for _ in range(bsz)])
    return TrainBatch(
        z1=seg.z1,
        z0=z0,
        tau=tau,
        incoming_actions=seg.incoming_actions,
        rewards=seg.rewards,
        terms=seg.terms,
        frame_valid=seg.frame_valid,
    )


def save_buffer(path: str | Path, buffer: ReplayBuffer) -> None:
    arrays = {"num_episodes": np.array([len(buffer.episodes)])}
    for i, ep in enumerate(buffer.episodes):
        arrays[f"ep{i}_obs"] = ep.obs
        arrays[f"ep{i}_actions"] = ep.actions
        arrays[f"ep{i}_rewards"] = ep.rewards
        arrays[f"ep{i}_terms"] = ep.terms
        arrays[f"ep{i}_truncated"] = np.array([ep.truncated])
    np.savez(path, **arrays)


def load_buffer(path: str | Path) -> ReplayBuffer:
    data = np.load(path)
    buffer = ReplayBuffer()
    for i in range(int(data["num_episodes"][0])):
        buffer.add_episode(
            Episode(
                obs=data[f"ep{i}_obs"],
                actions=data[f"ep{i}_actions"],
                rewards=data[f"ep{i}_rewards"],
                terms=data[f"ep{i}_terms"],
                truncated=bool(data[f"ep{i}_truncated"][0]),
            )
        )
    return buffer


class _EpisodeAccumulator:
    def __init__(self, first_obs: np.ndarray):
        self.obs = [first_obs]
        self.actions: list[int] = []
        self.rewards: list[float] = []
        self.terms: list[bool] = []

    def step(self, action: int, obs: np.ndarray, reward: float, term: bool) -> None:
        self.actions.append(action)
        self.obs.append(obs)
        self.rewards.append(reward)
        self.terms.append(term)

    def finish(self, truncated: bool) -> Episode:
        return Episode(
            obs=np.stack(self.obs),
            actions=np.asarray(self.actions, dtype=np.int64),
            rewards=np.asarray(self.rewards),
            terms=np.asarray(self.terms, dtype=bool),
            truncated=truncated,
        )

    def discounted_return(self, gamma: float) -> float:
        return float(sum(r * gamma**i for i, r in enumerate(self.rewards)))


def run_training(config: AgentConfig, out_dir: str | Path) -> TrainingResult:
    """Execute the full epoch cycle and write checkpoints, metrics, the
    replay buffer dump, and the per-epoch return curve."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = config.seed
    env = RingWorld(dataclasses.replace(config.env, seed=seed))
    models = build_models(config)
    opts = {
        name: AdamW(mlp.param_list(), lr=config.lr)
        for name, mlp in (
            ("denoiser", models.denoiser.mlp),
            ("reward_term", models.reward_term.mlp),
            ("policy", models.policy.mlp),
            ("critic", models.critic.mlp),
        )
    }
    scaler = AdvantageScaler()
    collect_rng = make_rng(seed, rngmod.STREAM_COLLECT)
    imag_config = ImaginationConfig(
        spec=config.spec,
        context=config.imag_context,
        mode=config.mode,
        batch_size=config.imagination_batch,
        seed=seed,
    )
    horizon = config.spec.horizon
    buffer = ReplayBuffer()
    _, obs = env.reset()
    episode = _EpisodeAccumulator(encode(obs))
    mean_return = 0.0
    metrics_rows = []
    returns_rows = []
    kept_checkpoints: list[Path] = []

    for epoch in range(config.epochs):
        completed_returns = []
        for _ in range(config.collect_steps):
            action = policy_action(models.policy, episode.obs, collect_rng)
            _, result = env.step(action)
            episode.step(action, encode(result.obs), result.reward, result.terminated)
            if result.terminated or result.truncated:
                completed_returns.append(episode.discounted_return(config.gamma))
                buffer.add_episode(episode.finish(truncated=result.truncated))
                _, obs = env.reset()
                episode = _EpisodeAccumulator(encode(obs))
        if completed_returns:
            mean_return = float(np.mean(completed_returns))
        returns_rows.append((epoch, mean_return))

        if epoch >= config.wm_warmup_epochs:
            pad = models.denoiser.pad_action()
            for step in range(config.wm_steps):
                rng = make_rng(seed, rngmod.STREAM_BUFFER, epoch, step)
                seg = sample_segments(buffer, config.batch_size, horizon, rng, pad)
                train_step(models.denoiser, opts["denoiser"], _wm_batch(seg, horizon, rng))
            for step in range(config.rt_steps):
                rng = make_rng(seed, rngmod.STREAM_BUFFER, epoch, config.wm_steps + step)
                seg = sample_segments(buffer, config.batch_size, horizon, rng, pad)
                loss, grads = reward_term_loss(
                    models.reward_term,
                    seg.z1,
                    np.ones(seg.z1.shape[:2]),
                    seg.rewards,
                    seg.terms,
                    seg.target_valid,
                )
                opts["reward_term"].step(models.reward_term.mlp.param_list(), grads)

        if epoch >= config.ac_warmup_epochs:
            pad = models.denoiser.pad_action()
            for step in range(config.ac_steps):
                rng = make_rng(seed, rngmod.STREAM_IMAGINE, epoch, step)
                ctx = sample_segments(buffer, config.imagination_batch, 1, rng, pad).z1
                stats = controller_update(
                    models,
                    opts["policy"],
                    opts["critic"],
                    imag_config,
                    ctx,
                    scaler,
                    rng,
                    config.gamma,
                    config.lam,
                    config.eta,
                )
                metrics_rows.append(
                    (
                        epoch,
                        step,
                        stats["actor_loss"],
                        stats["critic_loss"],
                        stats["entropy"],
                        mean_return,
                        stats["ema_s"],
                    )
                )

        ckpt = out / f"checkpoint_{epoch:04d}.hilm"
        save_params(ckpt, models.named_params())
        kept_checkpoints.append(ckpt)
        while len(kept_checkpoints) > CHECKPOINTS_KEPT:
            kept_checkpoints.pop(0).unlink()

    checkpoint_path = out / "checkpoint.hilm"
    save_params(checkpoint_path, models.named_params())
    buffer_path = out / "buffer.npz"
    save_buffer(buffer_path, buffer)
    params = config.flat()
    metrics_path = out / "metrics.csv"
    write_csv(
        metrics_path,
        ["epoch", "step", "actor_loss", "critic_loss", "entropy", "mean_return", "ema_S"],
        metrics_rows,
        params,
    )
    returns_path = out / "returns.csv"
    write_csv(returns_path, ["epoch", "mean_return"], returns_rows, params)
    return TrainingResult(
        checkpoint_path=checkpoint_path,
        buffer_path=buffer_path,
        metrics_path=metrics_path,
        returns_path=returns_path,
        final_mean_return=mean_return,
    )


def greedy_eval(env_config: RingWorldConfig, policy: PolicyModel, seed: int = 0) -> tuple[bool, int, float]:
    """Run one greedy (argmax) episode from reset; returns
    (reached_goal, steps_taken, discounted_return)."""
    env = RingWorld(dataclasses.replace(env_config, seed=seed))
    greedy = GreedyPolicy(policy)
    _, obs = env.reset()
    history = [encode(obs)]
    ret, discount = 0.0, 1.0
    for step in range(env_config.max_steps):
        recent = np.stack(history[-policy.window :])[None]
        dist = greedy.distributions(recent, np.ones((1, recent.shape[1])))[0, -1]
        _, result = env.step(int(dist.argmax()))
        history.append(encode(result.obs))
        ret += discount * result.reward
        discount *= GAMMA
        if result.terminated:
            return True, step + 1, ret
        if result.truncated:
            break
    return False, env_config.max_steps, ret
