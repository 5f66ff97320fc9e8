"""Coupled ("stable") categorical action sampling.

A single uniform vector omega and a random action order perm are drawn once
and then mapped to an action under every categorical distribution produced
along a denoising process.  The map scans omega against per-position
conditional probabilities (thresholds), so the realized action changes only
when the distribution itself moves: the change probability between two
distributions p, q is sandwiched between their total variation distance and
the L1 distance of their threshold vectors.

Action indices are 0-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Construction rejects probability vectors whose sum deviates from 1 by more
# than this; smaller deviations (softmax float error) are renormalized.
SUM_TOLERANCE = 1e-6

# Suffix sums below this are treated as exactly zero, triggering the
# degenerate threshold branch.
ZERO_MASS = 1e-12


@dataclass(frozen=True)
class ActionDistribution:
    """A point on the probability simplex over N discrete actions."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("probs must be a non-empty 1-d vector")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("probs must be finite and non-negative")
        total = p.sum()
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise ValueError(f"probs sum to {total!r}, outside 1 +/- {SUM_TOLERANCE}")
        object.__setattr__(self, "probs", p / total)

    @property
    def n(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class DrawState:
    """Per-timestep coupling randomness: omega in [0,1)^(N-1) and an action order."""

    omega: np.ndarray
    perm: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=np.float64)
        perm = np.asarray(self.perm, dtype=np.int64)
        if omega.ndim != 1 or perm.ndim != 1:
            raise ValueError("omega and perm must be 1-d")
        if perm.size != omega.size + 1:
            raise ValueError("perm must have length len(omega) + 1")
        if np.any(omega < 0) or np.any(omega >= 1):
            raise ValueError("omega entries must lie in [0, 1)")
        if not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise ValueError("perm is not a permutation")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "perm", perm)

    @property
    def n(self) -> int:
        return self.perm.size


@dataclass(frozen=True)
class GaussianPolicyParams:
    """Mean and per-dimension scale of a diagonal Gaussian policy."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if mu.shape != sigma.shape or mu.ndim != 1:
            raise ValueError("mu and sigma must be 1-d vectors of equal length")
        if np.any(sigma <= 0):
            raise ValueError("sigma entries must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)


def draw_state(n: int, rng: np.random.Generator) -> DrawState:
    """Sample fresh coupling randomness for N actions (Fisher-Yates order)."""
    return DrawState(omega=rng.random(n - 1), perm=rng.permutation(n))


def _suffix_sums(p_perm: np.ndarray) -> np.ndarray:
    # Suffix sums along the last axis: S[..., i] = sum_{j >= i} p_perm[..., j].
    return np.cumsum(p_perm[..., ::-1], axis=-1)[..., ::-1]


def alpha_thresholds(p: ActionDistribution, perm: np.ndarray) -> np.ndarray:
    """Threshold vector alpha: the conditional probability of picking the
    i-th action in the order perm given that all earlier ones were skipped.

    alpha_i = p[perm[i]] / S_i  when the suffix mass S_i is positive,
    otherwise p[perm[i]].  Returned length is N-1.
    """
    perm = np.asarray(perm, dtype=np.int64)
    if perm.size != p.n:
        raise ValueError(f"perm has length {perm.size}, expected {p.n}")
    return _alpha_from_probs(p.probs[perm])


def _alpha_from_probs(p_perm: np.ndarray) -> np.ndarray:
    """Thresholds from already-permuted probabilities (batched over leading axes)."""
    s = _suffix_sums(p_perm)
    degenerate = s <= ZERO_MASS
    alpha = np.where(degenerate, p_perm, p_perm / np.where(degenerate, 1.0, s))
    return alpha[..., :-1]


def sample_stable(p: ActionDistribution, state: DrawState) -> int:
    """Map (p, state) to an action: the first position whose threshold beats
    its omega coordinate, or the last action in the order if none does.

    Pure function of its inputs; repeated calls agree bit-exactly.
    """
    if state.n != p.n:
        raise ValueError(f"state is for {state.n} actions, distribution has {p.n}")
    alpha = _alpha_from_probs(p.probs[state.perm])
    fired = state.omega < alpha
    i = int(np.argmax(fired)) if fired.any() else p.n - 1
    return int(state.perm[i])


def alpha_thresholds_batch(probs: np.ndarray, perms: np.ndarray) -> np.ndarray:
    """Threshold vectors for many permutations at once: probs (N,) or (M, N),
    perms (M, N); returns (M, N-1)."""
    probs = np.asarray(probs, dtype=np.float64)
    perms = np.asarray(perms, dtype=np.int64)
    p_perm = probs[perms] if probs.ndim == 1 else np.take_along_axis(probs, perms, axis=-1)
    return _alpha_from_probs(p_perm)


def sample_stable_batch(
    probs: np.ndarray, omegas: np.ndarray, perms: np.ndarray
) -> np.ndarray:
    """Vectorized `sample_stable` over M draw states (and optionally M
    distributions).

    probs: (N,) or (M, N); omegas: (M, N-1); perms: (M, N).  Agrees
    bit-exactly with looping the scalar version.
    """
    perms = np.asarray(perms, dtype=np.int64)
    m, n = perms.shape
    probs = np.asarray(probs, dtype=np.float64)
    p_perm = probs[perms] if probs.ndim == 1 else np.take_along_axis(probs, perms, axis=-1)
    alpha = _alpha_from_probs(p_perm)
    fired = omegas < alpha
    idx = np.where(fired.any(axis=-1), fired.argmax(axis=-1), n - 1)
    return perms[np.arange(m), idx]


def sample_naive(p: ActionDistribution, rng: np.random.Generator) -> int:
    """Draw a fresh action from p by inverse transform on one uniform."""
    return int(sample_naive_batch(p.probs, rng.random()))


def sample_naive_batch(probs: np.ndarray, us) -> np.ndarray:
    """Inverse-transform actions for uniforms ``us``.

    probs: (N,) shared across draws, or (..., N) matching us elementwise.
    """
    probs = np.asarray(probs, dtype=np.float64)
    cdf = np.cumsum(probs, axis=-1)
    if probs.ndim == 1:
        idx = np.searchsorted(cdf, us, side="right")
    else:
        # index = count of cdf entries (below the last) that u has passed
        idx = (np.asarray(us)[..., None] >= cdf[..., :-1]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def total_variation(p: ActionDistribution, q: ActionDistribution) -> float:
    """delta(p, q) = half the L1 distance; lower bounds any coupling's
    disagreement probability."""
    if p.n != q.n:
        raise ValueError("distributions have different sizes")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


def change_upper_bound(p: ActionDistribution, q: ActionDistribution, perm: np.ndarray) -> float:
    """L1 distance between the threshold vectors of p and q under perm;
    upper bounds the coupled change probability for that order."""
    if p.n != q.n:
        raise ValueError("distributions have different sizes")
    return float(np.abs(alpha_thresholds(p, perm) - alpha_thresholds(q, perm)).sum())


def sample_stable_continuous(params: GaussianPolicyParams, omega: np.ndarray) -> np.ndarray:
    """Continuous-action analogue: a = mu + omega * sigma with omega a fixed
    standard-normal draw reused across evolving (mu, sigma)."""
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != params.mu.shape:
        raise ValueError("omega shape does not match policy parameters")
    return params.mu + omega * params.sigma
