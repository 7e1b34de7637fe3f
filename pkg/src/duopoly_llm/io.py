"""CSV and JSON-sidecar writers shared by the CLI."""
from __future__ import annotations

import csv
import json
import math
import subprocess
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__


def artifact_version() -> str:
    try:
        sha = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        sha = ""
    return f"{__version__}+g{sha}" if sha else __version__


def fmt(x) -> str:
    """CSV cell: shortest round-trip repr for floats, empty for None."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(x) for x in row])


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_sidecar(csv_path, payload: dict) -> Path:
    path = sidecar_path(csv_path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
