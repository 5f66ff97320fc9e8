"""Flat `key = value` experiment configuration files.

Sections are dotted prefixes (`env.*`, `schedule.*`, `train.*`,
`sampling.mode`); blank lines and `#` comments are ignored.  CLI flags may
override individual keys.
"""

from __future__ import annotations

from pathlib import Path

from .agent_loop import AgentConfig
from .schedules import ScheduleSpec
from .toy_env import RingWorldConfig


def parse_flat_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def agent_config_from_mapping(kv: dict[str, str]) -> AgentConfig:
    def get(key, default, cast):
        return cast(kv[key]) if key in kv else default

    env = RingWorldConfig(
        ring_size=get("env.ring_size", 16, int),
        goal=get("env.goal", 8, int),
        slip_prob=get("env.slip_prob", 0.0, float),
        obs_noise=get("env.obs_noise", 0.02, float),
        max_steps=get("env.max_steps", 100, int),
        seed=get("env.seed", 0, int),
    )
    spec = ScheduleSpec(
        horizon=get("schedule.horizon", 32, int),
        budget=get("schedule.budget", 16, int),
        nu=get("schedule.nu", 4.0, float),
        kind=get("schedule.kind", "horizon", str),
    )
    return AgentConfig(
        env=env,
        spec=spec,
        mode=get("sampling.mode", "stable", str),
        epochs=get("train.epochs", 60, int),
        collect_steps=get("train.collect_steps", 100, int),
        wm_steps=get("train.wm_steps", 100, int),
        rt_steps=get("train.rt_steps", 100, int),
        ac_steps=get("train.ac_steps", 25, int),
        wm_warmup_epochs=get("train.wm_warmup_epochs", 2, int),
        ac_warmup_epochs=get("train.ac_warmup_epochs", 5, int),
        batch_size=get("train.batch_size", 8, int),
        imagination_batch=get("train.imagination_batch", 16, int),
        imag_context=get("train.imag_context", 1, int),
        window=get("train.window", 4, int),
        hidden=get("train.hidden", 128, int),
        lr=get("train.lr", 2e-4, float),
        gamma=get("train.gamma", 0.99, float),
        lam=get("train.lam", 0.95, float),
        eta=get("train.eta", 1e-3, float),
        seed=get("train.seed", 0, int),
    )


def load_agent_config(path: str | Path | None, overrides: dict[str, str] | None = None) -> AgentConfig:
    kv = parse_flat_config(Path(path).read_text(encoding="utf-8")) if path else {}
    if overrides:
        kv.update({k: str(v) for k, v in overrides.items() if v is not None})
    return agent_config_from_mapping(kv)
