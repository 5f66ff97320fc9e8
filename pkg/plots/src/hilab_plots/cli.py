"""`plot` command line: one thin subcommand per figure kind.

    plot <kind> <csv...> --out fig.png [--window 15] [--horizon 32]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import DEFAULT_SMOOTHING_WINDOW, RENDERERS, FigureSpec, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="plot")
    parser.add_argument("kind", choices=sorted(RENDERERS))
    parser.add_argument("csvs", nargs="+", help="input CSV file(s)")
    parser.add_argument("--out", required=True, help="output PNG path")
    parser.add_argument("--window", type=int, default=DEFAULT_SMOOTHING_WINDOW,
                        help="moving-average window for return curves")
    parser.add_argument("--horizon", type=int, default=32,
                        help="sub-frame boundary marker for mse-budget")
    args = parser.parse_args(argv)
    spec = FigureSpec(
        kind=args.kind,
        inputs=tuple(Path(p) for p in args.csvs),
        out=Path(args.out),
        window=args.window,
        horizon=args.horizon,
    )
    out = render(spec)
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
