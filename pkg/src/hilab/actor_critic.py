"""Actor-critic trained inside imagined rollouts.

The actor is a REINFORCE policy with an entropy bonus, trained at every
noise level the imagination process queries it at, but only at (step, slot)
pairs where the next observation's denoising time actually increases and
only at trajectory steps before a predicted termination.  The critic
regresses symlog-compressed lambda-returns computed from predicted rewards
and termination probabilities, and sees fully denoised frames only.
Advantages are scaled by a running quantile-range statistic and enter the
actor as constants (no gradient flows through them).

Actor, critic, and the reward-termination predictor all share the same
window-MLP backbone over (latent, time) features; action conditioning is
deliberately omitted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow_model import DEFAULT_HIDDEN, DEFAULT_WINDOW
from .imagination import ImaginedRollout
from .nets import MLP, build_windows, softmax, symexp, symlog

GAMMA = 0.99
LAMBDA = 0.95
ENTROPY_WEIGHT = 1e-3
EMA_DECAY = 0.005
TERMINATION_THRESHOLD = 0.5


class PolicyModel:
    """Window MLP producing action logits; softmax gives the distribution.

    With zero_head the output layer starts at zero, i.e. the initial policy
    is exactly uniform for every input (maximum-entropy start for
    collection before any actor training).
    """

    def __init__(
        self,
        latent_dim: int,
        num_actions: int,
        window: int = DEFAULT_WINDOW,
        hidden: int = DEFAULT_HIDDEN,
        rng: np.random.Generator | None = None,
        zero_head: bool = False,
    ):
        self.latent_dim = latent_dim
        self.num_actions = num_actions
        self.window = window
        in_dim = window * (latent_dim + 1)
        self.mlp = MLP((in_dim, hidden, hidden, num_actions), rng)
        if zero_head:
            self.mlp.weights[-1][:] = 0.0
            self.mlp.biases[-1][:] = 0.0

    def distributions_and_windows(self, z: np.ndarray, tau: np.ndarray):
        """Action distributions for every frame plus the window features that
        produced them; z: (B, L, d), tau: (B, L)."""
        x = build_windows(z, tau, self.window)
        logits = self.mlp(x.reshape(-1, self.mlp.in_dim))
        probs = softmax(logits).reshape(z.shape[0], z.shape[1], self.num_actions)
        return probs, x

    def distributions(self, z: np.ndarray, tau: np.ndarray) -> np.ndarray:
        return self.distributions_and_windows(z, tau)[0]


class GreedyPolicy:
    """Deterministic wrapper: collapses a policy's output to a one-hot at the
    argmax.  Used for evaluation and for autoregressive-equivalence checks."""

    def __init__(self, policy: PolicyModel):
        self.policy = policy

    @property
    def num_actions(self) -> int:
        return self.policy.num_actions

    def distributions_and_windows(self, z, tau):
        probs, x = self.policy.distributions_and_windows(z, tau)
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, probs.argmax(axis=-1)[..., None], 1.0, axis=-1)
        return onehot, x

    def distributions(self, z, tau):
        return self.distributions_and_windows(z, tau)[0]


class CriticModel:
    """Window MLP producing one symlog-space value per frame.  zero_head
    starts every value estimate at exactly zero."""

    def __init__(
        self,
        latent_dim: int,
        window: int = DEFAULT_WINDOW,
        hidden: int = DEFAULT_HIDDEN,
        rng: np.random.Generator | None = None,
        zero_head: bool = False,
    ):
        self.latent_dim = latent_dim
        self.window = window
        in_dim = window * (latent_dim + 1)
        self.mlp = MLP((in_dim, hidden, hidden, 1), rng)
        if zero_head:
            self.mlp.weights[-1][:] = 0.0
            self.mlp.biases[-1][:] = 0.0

    def values(self, z: np.ndarray, tau: np.ndarray) -> np.ndarray:
        x = build_windows(z, tau, self.window)
        return self.mlp(x.reshape(-1, self.mlp.in_dim)).reshape(z.shape[0], z.shape[1])


@dataclass
class AdvantageScaler:
    """Running scale for advantages: EMA of the 95th-to-5th return quantile
    range, with divisor floored at 1."""

    decay: float = EMA_DECAY
    ema_s: float = 0.0

    def update(self, returns: np.ndarray) -> float:
        flat = np.asarray(returns, dtype=np.float64).ravel()
        if flat.size == 0:
            raise ValueError("cannot update advantage scale from an empty batch")
        q5, q95 = np.quantile(flat, [0.05, 0.95])  # linear interpolation
        self.ema_s = float((1.0 - self.decay) * self.ema_s + self.decay * (q95 - q5))
        return self.ema_s


def lambda_returns(
    rewards: np.ndarray,
    terms: np.ndarray,
    values: np.ndarray,
    gamma: float = GAMMA,
    lam: float = LAMBDA,
) -> np.ndarray:
    """Backward lambda-return recursion over the trailing axis.

    values are symlog-space critic outputs; rewards/terms at the last index
    are unused (the terminal return is the bootstrapped value alone):

        G[H-1] = symexp(V[H-1])
        G[t]   = r[t] + gamma * (1 - d[t]) * ((1-lam) * symexp(V[t+1]) + lam * G[t+1])

    terms may be hard {0,1} flags or predicted probabilities.
    """
    r = np.asarray(rewards, dtype=np.float64)
    d = np.asarray(terms, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.shape != d.shape or r.shape != v.shape:
        raise ValueError("rewards, terms, and values must have matching shapes")
    ve = symexp(v)
    g = np.empty_like(r)
    g[..., -1] = ve[..., -1]
    for t in range(r.shape[-1] - 2, -1, -1):
        g[..., t] = r[..., t] + gamma * (1.0 - d[..., t]) * (
            (1.0 - lam) * ve[..., t + 1] + lam * g[..., t + 1]
        )
    return g


def advantages(returns: np.ndarray, values: np.ndarray, scaler: AdvantageScaler) -> np.ndarray:
    """Scaled advantages (G - symexp(V)) / max(1, S); updates the scaler with
    this batch's quantile range first.  The result is a plain array of
    constants: no gradient flows back through it."""
    s = scaler.update(returns)
    return (np.asarray(returns) - symexp(values)) / max(1.0, s)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def actor_update_mask(schedule: np.ndarray) -> np.ndarray:
    """(steps, H-1) boolean mask: slot t receives an actor gradient at step b
    iff the next observation's denoising time increases, i.e. the schedule
    column t+1 strictly increases from row b to b+1."""
    return schedule[1:, 1:] > schedule[:-1, 1:]


def alive_mask(rollout: ImaginedRollout) -> np.ndarray:
    """(B, H-1) mask of action slots at trajectory steps before the first
    predicted termination (termination probabilities binarized at 0.5)."""
    k = rollout.context_len
    flags = rollout.term_probs[:, k:] >= TERMINATION_THRESHOLD
    dead = np.logical_or.accumulate(flags, axis=1)
    return ~dead[:, : rollout.schedule.shape[1] - 1]


def actor_loss(
    policy: PolicyModel,
    rollout: ImaginedRollout,
    slot_advantages: np.ndarray,
    eta: float = ENTROPY_WEIGHT,
):
    """REINFORCE-with-entropy loss and policy gradients from a rollout's
    traces.

    slot_advantages: (B, H-1) advantage of the action at each future slot.
    Only (step, slot) pairs passing both the schedule mask and the
    pre-termination mask contribute; everything else has an exactly zero
    gradient contribution.  Returns (loss, grads, mean_entropy).
    """
    nsteps, bsz, slots, _ = rollout.dists.shape
    if slots == 0:
        raise ValueError("rollout carries no action slots to train on")
    mask = actor_update_mask(rollout.schedule)[:, None, :] & alive_mask(rollout)[None, :, :]
    m = int(mask.sum())
    zero = [np.zeros_like(p) for p in policy.mlp.param_list()]
    if m == 0:
        return 0.0, zero, 0.0

    rows = rollout.policy_windows[mask]
    acts = rollout.action_trace[mask]
    adv = np.broadcast_to(slot_advantages[None, :, :], (nsteps, bsz, slots))[mask]

    logits, cache = policy.mlp.forward(rows)
    logp = _log_softmax(logits)
    probs = np.exp(logp)
    ent = -(probs * logp).sum(axis=-1)
    logp_a = np.take_along_axis(logp, acts[:, None], axis=-1)[:, 0]
    loss = float(-(adv * logp_a + eta * ent).mean())

    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, acts[:, None], 1.0, axis=-1)
    # d/dlogits of -(adv*logp_a + eta*H)/m; dH/dlogits = -p*(logp + H)
    dlogits = -(adv[:, None] * (onehot - probs) - eta * probs * (logp + ent[:, None])) / m
    _, grads = policy.mlp.backward(cache, dlogits)
    return loss, grads, float(ent.mean())


def critic_loss(critic: CriticModel, z: np.ndarray, returns: np.ndarray, frame_slice: slice):
    """Mean squared error in symlog space between critic outputs and returns
    over the frames selected by frame_slice (clean latents only).

    z: (B, L, d) clean latents; returns: (B, n_selected).  Returns
    (loss, grads).
    """
    tau = np.ones(z.shape[:2])
    x = build_windows(z, tau, critic.window)
    out, cache = critic.mlp.forward(x.reshape(-1, critic.mlp.in_dim))
    values = out.reshape(z.shape[0], z.shape[1])
    err = np.zeros_like(values)
    err[:, frame_slice] = values[:, frame_slice] - symlog(returns)
    n = returns.size
    loss = float((err**2).sum() / n)
    dout = (2.0 / n) * err.reshape(-1, 1)
    _, grads = critic.mlp.backward(cache, dout)
    return loss, grads
