"""Schedule-driven parallel imagination.

Generates H future latent frames by denoising them together under a
(B+1) x H time schedule.  Before every denoising step the policy is queried
on the current noisy view of each future timestep; realized actions are
re-derived from per-slot coupling randomness (omega, perm) drawn once per
rollout, so they only change when the evolving distributions do.  A single
batched denoiser pass then advances all frames whose schedule delta is
positive.  Rewards and terminations are predicted on the final clean frames.

Frame indices are 0-based: a rollout over k context frames and H future
frames has frames 0..k+H-1, and `incoming action of frame f` means the
action taken at frame f-1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow_model import Denoiser, RewardTermModel, _sigmoid, euler_step
from .nets import symexp
from .rng import STREAM_IMAGINE, make_rng
from .schedules import ScheduleSpec, build_schedule, time_deltas, validate_schedule
from .stable_sampling import sample_naive_batch, sample_stable_batch

MODE_STABLE = "stable"
MODE_NAIVE = "naive"


@dataclass(frozen=True)
class ImaginationConfig:
    spec: ScheduleSpec
    context: int = 1
    mode: str = MODE_STABLE
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (MODE_STABLE, MODE_NAIVE):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.context < 0 or self.batch_size < 1:
            raise ValueError("context must be >= 0 and batch_size >= 1")


@dataclass
class ImaginedRollout:
    """Result of one imagination batch.

    latents: (B, k+H, d) final clean frames, clipped to the latent box.
    actions: (B, k+H-1) incoming action of every frame past the first
      (context actions included); the imagined entries are the ones produced
      at the last denoising step.
    rewards/term_probs: (B, k+H) reward-term predictions per frame (the
      entry at frame f describes the transition into f; frame 0 carries no
      transition and is reported for completeness only).
    dists/action_trace/policy_windows: per-step traces over the H-1 future
      action slots, shapes (S, B, H-1, N), (S, B, H-1), (S, B, H-1, w).
    schedule: the (S+1) x H time matrix that drove the rollout.
    """

    latents: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    term_probs: np.ndarray
    dists: np.ndarray
    action_trace: np.ndarray
    policy_windows: np.ndarray
    schedule: np.ndarray
    context_len: int
    first_action_dist: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return self.schedule.shape[1]


def _policy_view(z: np.ndarray, tau_bc: np.ndarray) -> np.ndarray:
    # Fully denoised frames are clamped to the latent box before any
    # policy/reward/value model sees them; intermediates pass through raw.
    return np.where(tau_bc[..., None] >= 1.0, np.clip(z, -1.0, 1.0), z)


def horizon_imagine(
    denoiser: Denoiser,
    policy,
    reward_term: RewardTermModel,
    config: ImaginationConfig,
    context_z: np.ndarray | None = None,
    context_actions: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> ImaginedRollout:
    """Run one batch of parallel imagination (the full denoising loop).

    context_z: (B, k, d) clean context latents (None iff k = 0);
    context_actions: (B, k-1) recorded incoming actions of context frames
    past the first (None for k <= 1).  `policy` must expose num_actions and
    distributions_and_windows(z, tau) -> ((B, L, N) probs, (B, L, w) inputs).
    """
    spec = config.spec
    k, h = config.context, spec.horizon
    bsz, d = config.batch_size, denoiser.latent_dim
    n = policy.num_actions
    schedule = build_schedule(spec)
    violation = validate_schedule(schedule)
    if violation is not None:
        raise ValueError(f"invalid schedule: {violation}")

    if rng is None:
        rng = make_rng(config.seed, STREAM_IMAGINE)
    draw_rng, naive_rng = rng.spawn(2)

    length = k + h
    z = np.empty((bsz, length, d))
    if k > 0:
        ctx = np.asarray(context_z, dtype=np.float64)
        if ctx.shape != (bsz, k, d):
            raise ValueError(f"context_z must have shape {(bsz, k, d)}, got {ctx.shape}")
        z[:, :k] = ctx
    z[:, k:] = draw_rng.uniform(-1.0, 1.0, size=(bsz, h, d))

    incoming = np.full((bsz, length), denoiser.pad_action(), dtype=np.int64)
    if k > 1:
        incoming[:, 1:k] = context_actions

    # Per-slot coupling randomness, drawn once before denoising begins.
    # Drawn in both modes so that noise and streams line up across modes.
    slots = h - 1
    omegas = draw_rng.random((bsz, slots, n - 1))
    perms = draw_rng.permuted(np.tile(np.arange(n), (bsz, slots, 1)), axis=-1)

    first_action_dist = None
    if k > 0:
        tau_ctx = np.ones((bsz, k))
        ctx_probs, _ = policy.distributions_and_windows(_policy_view(z[:, :k], tau_ctx), tau_ctx)
        first_action_dist = ctx_probs[:, k - 1]
        incoming[:, k] = sample_naive_batch(first_action_dist, draw_rng.random(bsz))

    nsteps = spec.budget
    dists = np.empty((nsteps, bsz, slots, n))
    action_trace = np.empty((nsteps, bsz, slots), dtype=np.int64)
    policy_windows = None

    tau_ctx_cols = np.ones((bsz, k))
    for b in range(nsteps):
        tau = np.concatenate([tau_ctx_cols, np.tile(schedule[b], (bsz, 1))], axis=1)
        dtau = time_deltas(schedule, b)

        if slots > 0:
            probs_all, windows_all = policy.distributions_and_windows(_policy_view(z, tau), tau)
            slot_probs = probs_all[:, k : k + slots]
            slot_windows = windows_all[:, k : k + slots]
            if policy_windows is None:
                policy_windows = np.empty((nsteps, bsz, slots, slot_windows.shape[-1]))
            if config.mode == MODE_STABLE:
                flat = sample_stable_batch(
                    slot_probs.reshape(-1, n),
                    omegas.reshape(-1, n - 1),
                    perms.reshape(-1, n),
                )
                actions = flat.reshape(bsz, slots)
            else:
                actions = sample_naive_batch(slot_probs, naive_rng.random((bsz, slots)))
            incoming[:, k + 1 :] = actions
            dists[b] = slot_probs
            action_trace[b] = actions
            policy_windows[b] = slot_windows

        active = np.flatnonzero(dtau > 0)  # budget honesty: non-empty for valid schedules
        v = denoiser.velocities(z, tau, incoming, frames=active + k)
        z[:, active + k] = euler_step(z[:, active + k], v, dtau[active][None, :, None])
        if not np.all(np.isfinite(z[:, active + k])):
            raise FloatingPointError(f"non-finite latents after denoising step {b}")

    if policy_windows is None:
        policy_windows = np.empty((nsteps, bsz, 0, 0))

    z_final = np.clip(z, -1.0, 1.0)
    raw_r, logit = reward_term.predict(z_final, np.ones((bsz, length)))
    return ImaginedRollout(
        latents=z_final,
        actions=incoming[:, 1:],
        rewards=symexp(raw_r),
        term_probs=_sigmoid(logit),
        dists=dists,
        action_trace=action_trace,
        policy_windows=policy_windows,
        schedule=schedule,
        context_len=k,
        first_action_dist=first_action_dist,
    )


def rollout_with_actions(
    denoiser: Denoiser,
    spec: ScheduleSpec,
    context_z: np.ndarray,
    incoming_actions: np.ndarray,
    noise: np.ndarray,
) -> np.ndarray:
    """Denoise H future frames under a fixed, fully known action sequence
    (no policy in the loop); used to probe generation quality against
    recorded trajectories.

    context_z: (B, k, d) with k >= 1; incoming_actions: (B, k+H-1) incoming
    action of every frame past the first; noise: (B, H, d) initial samples.
    Returns the final clean latents (B, k+H, d), clipped to the box.
    """
    schedule = build_schedule(spec)
    violation = validate_schedule(schedule)
    if violation is not None:
        raise ValueError(f"invalid schedule: {violation}")
    bsz, k, d = context_z.shape
    h = spec.horizon
    z = np.concatenate([context_z, noise], axis=1)
    incoming = np.concatenate(
        [np.full((bsz, 1), denoiser.pad_action(), dtype=np.int64), incoming_actions], axis=1
    )
    tau_ctx = np.ones((bsz, k))
    for b in range(spec.budget):
        tau = np.concatenate([tau_ctx, np.tile(schedule[b], (bsz, 1))], axis=1)
        dtau = time_deltas(schedule, b)
        active = np.flatnonzero(dtau > 0)
        v = denoiser.velocities(z, tau, incoming, frames=active + k)
        z[:, active + k] = euler_step(z[:, active + k], v, dtau[active][None, :, None])
        if not np.all(np.isfinite(z[:, active + k])):
            raise FloatingPointError(f"non-finite latents after denoising step {b}")
    return np.clip(z, -1.0, 1.0)


def count_action_changes(rollout: ImaginedRollout) -> np.ndarray:
    """Number of steps at which each future slot's realized action differs
    from the previous step's; shape (B, H-1)."""
    trace = rollout.action_trace
    if trace.shape[0] < 2:
        return np.zeros(trace.shape[1:], dtype=np.int64)
    return (trace[1:] != trace[:-1]).sum(axis=0)
