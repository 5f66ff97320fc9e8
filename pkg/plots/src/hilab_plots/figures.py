"""Figure renderers: change-rate distributions, stable-vs-naive bars,
MSE-versus-budget curves, and smoothed return curves.

Each renderer validates its CSV schema (unknown extra columns are ignored
with a warning, missing ones are an error naming the column) and writes a
deterministic PNG: identical inputs give identical bytes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

DEFAULT_SMOOTHING_WINDOW = 15
PNG_DPI = 120
# fixed metadata keeps repeated renders byte-identical across environments
PNG_METADATA = {"Software": "hilab-plots"}


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple
    out: Path
    window: int = DEFAULT_SMOOTHING_WINDOW
    horizon: int = 32  # sub-frame boundary marker for mse-budget

    def __post_init__(self):
        if self.kind not in RENDERERS:
            raise ValueError(f"unknown figure kind {self.kind!r} (choose from {sorted(RENDERERS)})")
        missing = [str(p) for p in self.inputs if not Path(p).exists()]
        if missing:
            raise FileNotFoundError(f"input CSV not found: {', '.join(missing)}")


def read_csv_columns(path, required: list[str]) -> dict[str, np.ndarray]:
    """Parse one of the lab's CSVs (comment lines start with '#') into named
    string columns, enforcing the required schema."""
    lines = [
        line
        for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line and not line.startswith("#")
    ]
    if not lines:
        raise SchemaError(f"{path}: empty CSV")
    header = lines[0].split(",")
    for col in required:
        if col not in header:
            raise SchemaError(f"{path}: missing required column {col!r}")
    extra = [c for c in header if c not in required]
    if extra:
        warnings.warn(f"{path}: ignoring extra columns {extra}", stacklevel=2)
    rows = [line.split(",") for line in lines[1:]]
    out = {}
    for col in required:
        idx = header.index(col)
        out[col] = np.array([row[idx] for row in rows])
    return out


def trailing_mean(y: np.ndarray, window: int) -> np.ndarray:
    """Moving average over the trailing `window` points, expanding at the
    start; degenerates to the cumulative mean when the series is shorter
    than the window."""
    y = np.asarray(y, dtype=np.float64)
    csum = np.cumsum(np.r_[0.0, y])
    idx = np.arange(1, y.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def _new_figure():
    return plt.subplots(figsize=(6.0, 4.0))


def _save(fig, out: Path) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=PNG_DPI, format="png", metadata=dict(PNG_METADATA))
    plt.close(fig)
    return out


def render_changes_dist(spec: FigureSpec) -> Path:
    """Distribution of coupled change rates in total-variation units, one
    violin per action count, with min/mean/max annotated."""
    data = read_csv_columns(spec.inputs[0], ["n", "pair_id", "tv", "upper", "empirical_rate", "rate_over_tv"])
    n_vals = data["n"].astype(int)
    ratio = data["rate_over_tv"].astype(float)
    keep = data["pair_id"].astype(int) >= 0  # drop injected p = q controls
    fig, ax = _new_figure()
    groups = sorted(set(n_vals[keep]))
    series = [ratio[keep & (n_vals == g)] for g in groups]
    ax.violinplot(series, positions=range(len(groups)), showextrema=True, showmeans=True)
    for x, vals in enumerate(series):
        for v, label in ((vals.min(), "min"), (vals.mean(), "mean"), (vals.max(), "max")):
            ax.annotate(f"{label} {v:.3f}", (x, v), fontsize=7,
                        xytext=(8, 0), textcoords="offset points")
    ax.set_xticks(range(len(groups)), [f"N={g}" for g in groups])
    ax.set_ylabel("action changes  [tv units]")
    ax.set_title("Coupled sampling change rate relative to total variation")
    ax.axhline(1.0, color="gray", lw=0.8, ls="--")
    return _save(fig, spec.out)


def render_changes_bars(spec: FigureSpec) -> Path:
    """Mean action changes (with spread) per entropy setting, coupled vs
    fresh sampling, grouped bars."""
    data = read_csv_columns(spec.inputs[0], ["setting", "mode", "pair_id", "mean_changes", "std_changes"])
    settings = list(dict.fromkeys(data["setting"]))
    fig, ax = _new_figure()
    width = 0.38
    for off, (mode, color) in enumerate((("stable", "#2c7fb8"), ("naive", "#d95f0e"))):
        means, errs = [], []
        for setting in settings:
            sel = (data["setting"] == setting) & (data["mode"] == mode)
            means.append(data["mean_changes"][sel].astype(float).mean())
            errs.append(data["std_changes"][sel].astype(float).mean())
        xs = np.arange(len(settings)) + (off - 0.5) * width
        ax.bar(xs, means, width, yerr=errs, capsize=3, label=mode, color=color)
    ax.set_xticks(range(len(settings)), [f"Dirichlet({s})" for s in settings])
    ax.set_ylabel("action changes per path")
    ax.set_title("Action changes along a move-then-hold distribution path")
    ax.legend()
    return _save(fig, spec.out)


def render_mse_budget(spec: FigureSpec) -> Path:
    """Latent MSE versus denoising budget, one line per decay horizon, with
    the sub-frame boundary marked."""
    data = read_csv_columns(spec.inputs[0], ["nu", "budget", "mse"])
    nu = data["nu"].astype(float)
    budget = data["budget"].astype(int)
    mse = data["mse"].astype(float)
    fig, ax = _new_figure()
    for g in sorted(set(nu)):
        sel = nu == g
        order = np.argsort(budget[sel])
        ax.plot(budget[sel][order], mse[sel][order], marker="o", ms=3.5,
                label=f"decay horizon {g:g}")
    ax.axvline(spec.horizon, color="gray", lw=0.8, ls="--")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("denoising budget")
    ax.set_ylabel("latent MSE")
    ax.set_title("Generation error vs. budget (dashed: sub-frame boundary)")
    ax.legend(fontsize=8)
    return _save(fig, spec.out)


def render_returns(spec: FigureSpec) -> Path:
    """Smoothed per-seed return curves with a mean +/- std band when several
    seeds are given."""
    curves = []
    for path in spec.inputs:
        data = read_csv_columns(path, ["epoch", "mean_return"])
        curves.append((data["epoch"].astype(int), trailing_mean(data["mean_return"].astype(float), spec.window)))
    fig, ax = _new_figure()
    if len(curves) == 1:
        ax.plot(curves[0][0], curves[0][1], color="#2c7fb8")
    else:
        length = min(len(c[1]) for c in curves)
        stack = np.stack([c[1][:length] for c in curves])
        epochs = curves[0][0][:length]
        mean, std = stack.mean(axis=0), stack.std(axis=0)
        ax.plot(epochs, mean, color="#2c7fb8", label=f"mean of {len(curves)} seeds")
        ax.fill_between(epochs, mean - std, mean + std, alpha=0.25, color="#2c7fb8")
        ax.legend()
    ax.set_xlabel("epoch")
    ax.set_ylabel(f"return (window {spec.window} moving average)")
    ax.set_title("Episodic return during training")
    return _save(fig, spec.out)


RENDERERS = {
    "changes-dist": render_changes_dist,
    "changes-bars": render_changes_bars,
    "mse-budget": render_mse_budget,
    "returns": render_returns,
}


def render(spec: FigureSpec) -> Path:
    """Render the figure named by the spec; returns the written path."""
    return RENDERERS[spec.kind](spec)
