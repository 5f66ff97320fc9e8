"""Rectified-flow world model over latent frame sequences.

The denoiser is a causal window MLP regressing the straight-line transport
velocity z1 - z0 from noisy mixtures z_tau = tau*z1 + (1-tau)*z0, with an
independent denoising time per frame and an occasional clean prefix to
match inference conditions.  A separate window MLP predicts rewards (in
symlog space) and termination logits from clean latents.  All frames of a
sequence are processed in one batched forward pass; causality comes from
the window construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import MLP, AdamW, build_windows, symlog

CLEAN_PREFIX_PROB = 0.2
CLEAN_PREFIX_FRACTION = 0.7
DEFAULT_WINDOW = 4
DEFAULT_HIDDEN = 128


@dataclass
class TrainBatch:
    """One world-model training batch of H-frame segments.

    incoming_actions[b, t] is the action leading into frame t (the padding
    action for t = 0); rewards/terms[b, t] describe the transition into
    frame t and are undefined at t = 0.  frame_valid masks frames padded in
    behind a short episode.
    """

    z1: np.ndarray
    z0: np.ndarray
    tau: np.ndarray
    incoming_actions: np.ndarray
    rewards: np.ndarray
    terms: np.ndarray
    frame_valid: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.frame_valid is None:
            self.frame_valid = np.ones(self.z1.shape[:2], dtype=bool)

    @property
    def horizon(self) -> int:
        return self.z1.shape[1]


class Denoiser:
    """Velocity field over causal windows of (latent, incoming action, time)."""

    def __init__(
        self,
        latent_dim: int,
        num_actions: int,
        window: int = DEFAULT_WINDOW,
        hidden: int = DEFAULT_HIDDEN,
        rng: np.random.Generator | None = None,
    ):
        self.latent_dim = latent_dim
        self.num_actions = num_actions
        self.window = window
        in_dim = window * (latent_dim + num_actions + 1 + 1)
        self.mlp = MLP((in_dim, hidden, hidden, latent_dim), rng)

    def pad_action(self) -> int:
        return self.num_actions

    def _windows(self, z, tau, incoming_actions, frames=None):
        x = build_windows(z, tau, self.window, incoming_actions, self.num_actions, frames)
        return x.reshape(-1, self.mlp.in_dim)

    def velocities(
        self,
        z: np.ndarray,
        tau: np.ndarray,
        incoming_actions: np.ndarray,
        frames: np.ndarray | None = None,
    ) -> np.ndarray:
        """Per-frame velocities for a batch of sequences, one forward pass.

        z: (B, L, d), tau: (B, L), incoming_actions: (B, L) ints with
        value num_actions marking a missing predecessor.  Output (B, L, d),
        or (B, len(frames), d) when `frames` restricts the evaluated frame
        indices.  Frame t depends only on inputs with index <= t.
        """
        rows = self._windows(z, tau, incoming_actions, frames)
        n_frames = z.shape[1] if frames is None else len(frames)
        return self.mlp(rows).reshape(z.shape[0], n_frames, self.latent_dim)


class RewardTermModel:
    """Predicts (symlog-space reward, termination logit) for the transition
    into each frame from causal windows of clean latents and times."""

    def __init__(
        self,
        latent_dim: int,
        window: int = DEFAULT_WINDOW,
        hidden: int = DEFAULT_HIDDEN,
        rng: np.random.Generator | None = None,
    ):
        self.latent_dim = latent_dim
        self.window = window
        in_dim = window * (latent_dim + 1)
        self.mlp = MLP((in_dim, hidden, hidden, 2), rng)

    def _windows(self, z, tau):
        return build_windows(z, tau, self.window).reshape(-1, self.mlp.in_dim)

    def predict(self, z: np.ndarray, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Returns (raw symlog-space rewards, termination logits), each (B, L)."""
        out = self.mlp(self._windows(z, tau)).reshape(z.shape[0], z.shape[1], 2)
        return out[..., 0], out[..., 1]


def sample_times_with_prefix(horizon: int, rng: np.random.Generator) -> np.ndarray:
    """Independent uniform time per frame; with probability 0.2 the first c
    frames are forced clean, c uniform on {1, ..., floor(0.7 * horizon)}."""
    if horizon < 2:
        raise ValueError("horizon must be >= 2")
    tau = rng.random(horizon)
    if rng.random() < CLEAN_PREFIX_PROB:
        c = int(rng.integers(1, int(CLEAN_PREFIX_FRACTION * horizon) + 1))
        tau[:c] = 1.0
    return tau


def mix_latents(z1: np.ndarray, z0: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Straight-line interpolation z_tau = tau*z1 + (1-tau)*z0 (tau per frame)."""
    t = tau[..., None]
    return t * z1 + (1.0 - t) * z0


def rf_loss(denoiser: Denoiser, batch: TrainBatch):
    """Velocity regression loss and parameter gradients for one batch.

    loss = sum over valid frames of |v - (z1 - z0)|^2 / (#valid frames);
    all frame outputs come from a single batched forward pass.
    """
    zt = mix_latents(batch.z1, batch.z0, batch.tau)
    rows = denoiser._windows(zt, batch.tau, batch.incoming_actions)
    v_rows, cache = denoiser.mlp.forward(rows)
    v = v_rows.reshape(batch.z1.shape)
    resid = (v - (batch.z1 - batch.z0)) * batch.frame_valid[..., None]
    n_valid = int(batch.frame_valid.sum())
    if n_valid == 0:
        raise ValueError("batch has no valid frames")
    loss = float((resid**2).sum() / n_valid)
    dv = (2.0 / n_valid) * resid
    _, grads = denoiser.mlp.backward(cache, dv.reshape(v_rows.shape))
    return loss, grads


def euler_step(z: np.ndarray, v: np.ndarray, dtau) -> np.ndarray:
    """One transport step z + v * dtau, applied only where dtau > 0."""
    dtau = np.asarray(dtau, dtype=np.float64)
    if np.any(dtau < 0):
        raise ValueError("dtau must be non-negative")
    with np.errstate(invalid="ignore"):  # 0 * inf in the masked-out branch
        stepped = z + v * dtau
    return np.where(dtau > 0, stepped, z)


def train_step(denoiser: Denoiser, optimizer: AdamW, batch: TrainBatch) -> float:
    """One clipped adaptive-moment update of the denoiser; returns the loss."""
    loss, grads = rf_loss(denoiser, batch)
    if not np.isfinite(loss):
        raise FloatingPointError(f"denoiser loss diverged: {loss}")
    optimizer.step(denoiser.mlp.param_list(), grads)
    return loss


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _bce_with_logits(logits, targets):
    # max(l, 0) - l*t + log(1 + exp(-|l|)): stable for large |l|
    return np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))


def reward_term_loss(
    model: RewardTermModel,
    z: np.ndarray,
    tau: np.ndarray,
    rewards: np.ndarray,
    terms: np.ndarray,
    valid: np.ndarray,
):
    """Symlog-space squared reward error plus termination cross-entropy,
    averaged over valid frames.  `valid` must exclude frames without a
    recorded incoming transition."""
    rows = model._windows(z, tau)
    out, cache = model.mlp.forward(rows)
    raw = out[:, 0].reshape(valid.shape)
    logit = out[:, 1].reshape(valid.shape)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("no valid frames for reward/termination targets")
    r_err = raw - symlog(rewards)
    per_frame = r_err**2 + _bce_with_logits(logit, terms)
    loss = float((per_frame * valid).sum() / n_valid)
    if not np.isfinite(loss):
        raise FloatingPointError(f"reward/termination loss diverged: {loss}")
    d_out = np.zeros_like(out)
    scale = valid / n_valid
    d_out[:, 0] = (2.0 * r_err * scale).ravel()
    d_out[:, 1] = ((_sigmoid(logit) - terms) * scale).ravel()
    _, grads = model.mlp.backward(cache, d_out)
    return loss, grads
