"""Denoising-time schedules for parallel multi-frame generation.

A schedule is a (B+1) x H matrix K of denoising times in [0, 1]: row b holds
the per-frame times before denoising step b+1, row B is all ones.  The
"horizon" family is built from clamped lines of slope -1/nu over the frame
axis, which decouples the total step budget B from the decay horizon nu and
admits sub-frame budgets B < H.  The "pyramidal" baseline staggers a shared
ramp by one step per frame, entangling the two, and requires B >= H.

Rows and steps are 0-based here: `time_deltas(K, b)` with b in 0..B-1 gives
the per-frame time increments applied by denoising step b+1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KIND_HORIZON = "horizon"
KIND_PYRAMIDAL = "pyramidal"


@dataclass(frozen=True)
class ScheduleSpec:
    horizon: int
    budget: int
    nu: float = 1.0
    kind: str = KIND_HORIZON

    def __post_init__(self):
        if self.kind not in (KIND_HORIZON, KIND_PYRAMIDAL):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.horizon < 1 or self.budget < 1:
            raise ValueError("horizon and budget must be positive")
        if not (1.0 <= self.nu <= self.horizon):
            raise ValueError(f"nu must lie in [1, horizon], got {self.nu}")
        if self.kind == KIND_PYRAMIDAL and self.budget < self.horizon:
            raise ValueError("pyramidal schedule has no sub-frame support (needs budget >= horizon)")


def build_schedule(spec: ScheduleSpec) -> np.ndarray:
    if spec.kind == KIND_HORIZON:
        return horizon_schedule(spec)
    return pyramidal_schedule(spec)


def horizon_schedule(spec: ScheduleSpec) -> np.ndarray:
    """Clamped-line schedule: K[b, t] = clamp(-t/nu + (b/B)(1 + (H-1)/nu)).

    The first row is all zeros and the last all ones by construction.
    """
    if spec.kind != KIND_HORIZON:
        raise ValueError("spec.kind must be 'horizon'")
    h, b, nu = spec.horizon, spec.budget, spec.nu
    t = np.arange(h, dtype=np.float64)
    steps = np.arange(b + 1, dtype=np.float64)
    lines = -t[None, :] / nu + (steps[:, None] / b) * (1.0 + (h - 1) / nu)
    return np.clip(lines, 0.0, 1.0)


def pyramidal_schedule(spec: ScheduleSpec) -> np.ndarray:
    """Staggered-ramp baseline: each frame's ramp is the previous frame's
    delayed by one step, slope set by the budget.  K[b, t] =
    clamp((b - t) / (B - (H-1))); rejects B < H.
    """
    if spec.kind != KIND_PYRAMIDAL:
        raise ValueError("spec.kind must be 'pyramidal'")
    h, b = spec.horizon, spec.budget
    t = np.arange(h, dtype=np.float64)
    steps = np.arange(b + 1, dtype=np.float64)
    ramp = (steps[:, None] - t[None, :]) / (b - (h - 1))
    return np.clip(ramp, 0.0, 1.0)


def time_deltas(schedule: np.ndarray, step: int) -> np.ndarray:
    """Per-frame time increments of denoising step `step` (0-based): row
    step+1 minus row step.  Non-negative for any valid schedule."""
    nsteps = schedule.shape[0] - 1
    if not (0 <= step < nsteps):
        raise IndexError(f"step {step} outside 0..{nsteps - 1}")
    return schedule[step + 1] - schedule[step]


def validate_schedule(schedule: np.ndarray) -> str | None:
    """Check all schedule invariants; return None or a message naming the
    first violated cell."""
    k = np.asarray(schedule)
    if k.ndim != 2 or k.shape[0] < 2:
        return f"schedule must be a 2-d matrix with >= 2 rows, got shape {k.shape}"
    bad = ~((k >= 0.0) & (k <= 1.0))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        return f"entry out of [0, 1] at row {i}, frame {j}: {k[i, j]}"
    col_dec = k[1:] < k[:-1]
    if col_dec.any():
        i, j = np.argwhere(col_dec)[0]
        return f"denoising time reverses at row {i + 1}, frame {j}"
    row_inc = k[:, 1:] > k[:, :-1]
    if row_inc.any():
        i, j = np.argwhere(row_inc)[0]
        return f"later frame cleaner than earlier at row {i}, frame {j + 1}"
    if np.any(k[0] != 0.0):
        j = int(np.argwhere(k[0] != 0.0)[0])
        return f"first row not all zeros at frame {j}"
    if np.any(k[-1] != 1.0):
        j = int(np.argwhere(k[-1] != 1.0)[0])
        return f"last row not all ones at frame {j}"
    return None
