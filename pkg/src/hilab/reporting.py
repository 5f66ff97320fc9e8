"""Deterministic CSV output with provenance metadata.

Every emitted CSV starts with two comment lines: one carrying the config
hash and seed (part of the reproducible body), one carrying the wall-clock
timestamp (excluded from determinism comparisons).  Data rows use shortest
round-trip float formatting, '.' decimals, LF endings, UTF-8.
"""

from __future__ import annotations

import hashlib
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

TIMESTAMP_PREFIX = "# generated_at="


def config_hash(params: dict) -> str:
    """Stable short hash of a flat parameter mapping."""
    canon = ";".join(f"{k}={params[k]!r}" for k in sorted(params))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def format_value(v) -> str:
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str | Path, columns: list[str], rows, params: dict) -> None:
    """Write rows with the standard provenance header.  `params` identifies
    the producing configuration (hashed into the header)."""
    lines = [
        f"# config_hash={config_hash(params)} seed={params.get('seed', '')}",
        f"{TIMESTAMP_PREFIX}{datetime.now(timezone.utc).isoformat()}",
        ",".join(columns),
    ]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def csv_body(path: str | Path) -> str:
    """File contents minus the timestamp line: the region that must be
    byte-identical across reruns with the same seed."""
    lines = Path(path).read_text(encoding="utf-8").splitlines(keepends=True)
    return "".join(line for line in lines if not line.startswith(TIMESTAMP_PREFIX))


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Parse one of our CSVs back into (columns, string rows), skipping
    comment lines."""
    lines = [
        line
        for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line and not line.startswith("#")
    ]
    columns = lines[0].split(",")
    return columns, [line.split(",") for line in lines[1:]]
