"""Hand-rolled feed-forward networks and their training machinery.

Everything is float64 numpy with hand-derived backpropagation so that every
trainable block can be verified against central finite differences.  The
models in this repository are all MLPs over a fixed-width causal window of
per-frame features; `build_windows` assembles those features with zero
padding before the sequence start.
"""

from __future__ import annotations

import numpy as np


def symlog(x):
    """sign(x) * log(|x| + 1): scale-robust compression of targets."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.log1p(np.abs(x))


def symexp(x):
    """Inverse of symlog: sign(x) * (exp(|x|) - 1)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.expm1(np.abs(x))


def symlog_grad(x):
    # d/dx symlog(x) = 1 / (|x| + 1)
    return 1.0 / (np.abs(x) + 1.0)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def entropy(probs: np.ndarray, axis: int = -1) -> np.ndarray:
    p = np.asarray(probs)
    return -np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0), axis=axis)


class MLP:
    """Fully-connected net with tanh hidden layers and a linear output.

    Parameters live in `weights`/`biases`; `param_list()` returns them in a
    stable order (w0, b0, w1, b1, ...) used by optimizers, gradients, and
    checkpoints alike.
    """

    def __init__(self, layer_sizes: tuple[int, ...], rng: np.random.Generator):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.layer_sizes = tuple(layer_sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            self.weights.append(rng.normal(0.0, fan_in**-0.5, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def param_list(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def named_params(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}/w{i}"] = w
            out[f"{prefix}/b{i}"] = b
        return out

    def load_named_params(self, prefix: str, params: dict[str, np.ndarray]) -> None:
        for i in range(len(self.weights)):
            w = params[f"{prefix}/w{i}"]
            b = params[f"{prefix}/b{i}"]
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ValueError(f"shape mismatch for {prefix} layer {i}")
            self.weights[i] = w.copy()
            self.biases[i] = b.copy()

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """x: (rows, in_dim).  Returns (output, cache) with cache holding the
        post-activation of every layer input for backward()."""
        cache = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.tanh(h)
                cache.append(h)
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: list[np.ndarray], grad_out: np.ndarray):
        """Backpropagate grad_out (rows, out_dim) through a cached forward.

        Returns (grad_input, grads) with grads aligned to param_list().
        """
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = cache[i]
            grads_w[i] = a_in.T @ g
            grads_b[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (1.0 - cache[i] ** 2)  # tanh'
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.extend((gw, gb))
        return g, grads


def zero_grads_like(params: list[np.ndarray]) -> list[np.ndarray]:
    return [np.zeros_like(p) for p in params]


def global_grad_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g**2).sum()) for g in grads)))


def clip_grads_(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale grads in place so their global L2 norm is at most max_norm.
    Returns the pre-clip norm."""
    norm = global_grad_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


class AdamW:
    """Decoupled-weight-decay adaptive-moment optimizer with global-norm
    gradient clipping.  Defaults match the world-model training recipe."""

    def __init__(
        self,
        params: list[np.ndarray],
        lr: float = 2e-4,
        betas: tuple[float, float] = (0.9, 0.99),
        eps: float = 1e-6,
        weight_decay: float = 0.01,
        max_grad_norm: float = 1.0,
    ):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self.m = zero_grads_like(params)
        self.v = zero_grads_like(params)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> float:
        """Update params in place; returns the pre-clip gradient norm."""
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient")
        norm = clip_grads_(grads, self.max_grad_norm)
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g**2
            p -= self.lr * ((m / bc1) / (np.sqrt(v / bc2) + self.eps) + self.weight_decay * p)
        return norm


def build_windows(
    z: np.ndarray,
    tau: np.ndarray,
    window: int,
    incoming_actions: np.ndarray | None = None,
    num_actions: int | None = None,
    frames: np.ndarray | None = None,
) -> np.ndarray:
    """Assemble causal window features for frames of a batch of sequences.

    z: (B, L, d) latents, tau: (B, L) denoising times.  If incoming_actions
    is given ((B, L) ints, value num_actions = padding action), each window
    slot carries [z_j, onehot(a_{j-1}), tau_j], else [z_j, tau_j].  The
    window for frame t spans frames t-window+1..t; slots before the sequence
    start hold zeros (and the padding-action one-hot).

    Returns (B, L, window * slot_dim), or (B, len(frames), window * slot_dim)
    when `frames` restricts to a subset of frame indices.  Frame t's features
    depend only on frames <= t.
    """
    bsz, length, d = z.shape
    parts = [z]
    if incoming_actions is not None:
        onehot = np.zeros((bsz, length, num_actions + 1))
        np.put_along_axis(onehot, incoming_actions[..., None], 1.0, axis=-1)
        parts.append(onehot)
    parts.append(tau[..., None])
    feats = np.concatenate(parts, axis=-1)
    slot_dim = feats.shape[-1]

    pad = np.zeros((bsz, window - 1, slot_dim))
    if incoming_actions is not None:
        pad[..., d + num_actions] = 1.0  # out-of-range slots carry the padding action
    padded = np.concatenate([pad, feats], axis=1)
    if frames is None:
        slots = [padded[:, o : o + length] for o in range(window)]  # oldest..current
        return np.concatenate(slots, axis=-1)
    # padded index f..f+window-1 covers original frames f-window+1..f
    sel = [padded[:, f : f + window].reshape(bsz, -1) for f in frames]
    return np.stack(sel, axis=1)
