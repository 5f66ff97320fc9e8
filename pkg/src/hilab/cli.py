"""`hilab` command line: study and training entry points emitting CSV."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import experiments
from .config import load_agent_config
from .reporting import write_csv
from .schedules import ScheduleSpec, build_schedule


def _common_flags(parser: argparse.ArgumentParser, out_required: bool = True):
    parser.add_argument("--seed", type=int, default=0, help="root random seed")
    parser.add_argument("--out", required=out_required, help="output path")
    parser.add_argument("--threads", type=int, default=1, help="worker processes")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hilab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pairs-study", help="coupled change rates vs. bounds on random pairs")
    p.add_argument("--n", type=int, nargs="+", default=[4, 10, 18])
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--control", action="store_true", help="inject one p = q control pair per N")
    _common_flags(p)

    p = sub.add_parser("interp-study", help="stable vs naive changes along a distribution path")
    p.add_argument("--settings", nargs="+", default=["0.2", "uniform", "5"])
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--sims", type=int, default=10_000)
    _common_flags(p)

    p = sub.add_parser("schedule-dump", help="emit a schedule matrix as CSV")
    p.add_argument("--kind", choices=["horizon", "pyramidal"], default="horizon")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--nu", type=float, default=1.0)
    _common_flags(p)

    p = sub.add_parser("gen-quality", help="latent MSE of generations over a (nu, budget) grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--buffer", required=True)
    p.add_argument("--nu", type=float, nargs="+", default=[1, 2, 4, 8, 16, 32])
    p.add_argument("--budget", type=int, nargs="+", default=[2, 4, 8, 16, 32, 64, 128])
    p.add_argument("--segments", type=int, default=512)
    p.add_argument("--gen-horizon", type=int, default=32)
    _common_flags(p)

    p = sub.add_parser("train", help="run the online training loop over seeds")
    p.add_argument("--config", default=None, help="flat key = value config file")
    p.add_argument("--mode", choices=["stable", "naive"], default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--nu", type=float, default=None)
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds to run")
    _common_flags(p)
    return parser


def _cmd_pairs_study(args) -> None:
    rows = experiments.pairs_study(
        args.n, args.pairs, args.draws, args.seed, args.control, args.threads
    )
    write_csv(
        args.out,
        ["n", "pair_id", "tv", "upper", "empirical_rate", "rate_over_tv"],
        rows,
        {"command": "pairs-study", "n": args.n, "pairs": args.pairs, "draws": args.draws,
         "control": args.control, "seed": args.seed},
    )


def _cmd_interp_study(args) -> None:
    rows = experiments.interp_study(args.settings, args.pairs, args.sims, args.seed, args.threads)
    write_csv(
        args.out,
        ["setting", "mode", "pair_id", "mean_changes", "std_changes"],
        rows,
        {"command": "interp-study", "settings": args.settings, "pairs": args.pairs,
         "sims": args.sims, "seed": args.seed},
    )


def _cmd_schedule_dump(args) -> None:
    spec = ScheduleSpec(horizon=args.horizon, budget=args.budget, nu=args.nu, kind=args.kind)
    matrix = build_schedule(spec)
    rows = [
        (b, t, format(matrix[b, t], ".9g"))
        for b in range(matrix.shape[0])
        for t in range(matrix.shape[1])
    ]
    write_csv(
        args.out,
        ["b", "t", "tau"],
        rows,
        {"command": "schedule-dump", "kind": args.kind, "horizon": args.horizon,
         "budget": args.budget, "nu": args.nu, "seed": args.seed},
    )


def _cmd_gen_quality(args) -> None:
    rows = experiments.gen_quality(
        args.checkpoint,
        args.buffer,
        args.nu,
        args.budget,
        args.segments,
        args.seed,
        args.gen_horizon,
        args.threads,
    )
    write_csv(
        args.out,
        ["nu", "budget", "mse"],
        rows,
        {"command": "gen-quality", "nu": args.nu, "budget": args.budget,
         "segments": args.segments, "gen_horizon": args.gen_horizon, "seed": args.seed},
    )


def _cmd_train(args) -> None:
    overrides = {
        "sampling.mode": args.mode,
        "schedule.budget": args.budget,
        "schedule.nu": args.nu,
    }
    config = load_agent_config(args.config, overrides)
    config = dataclasses.replace(config, seed=args.seed)
    seeds = [args.seed + i for i in range(args.seeds)]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves = experiments.train_seeds(config, seeds, out_dir, args.threads)
    for seed in seeds:
        print(f"seed {seed}: {curves[seed]}")


_HANDLERS = {
    "pairs-study": _cmd_pairs_study,
    "interp-study": _cmd_interp_study,
    "schedule-dump": _cmd_schedule_dump,
    "gen-quality": _cmd_gen_quality,
    "train": _cmd_train,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    _HANDLERS[args.command](args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
